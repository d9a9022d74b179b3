"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import numpy as np

from bdma.channel import (
    ArrayConfig,
    DftBeamformer,
    RaySet,
    UtProfile,
    beam_channel_exact,
    cell_indices,
    power_matrix,
    sample_beam_channels_dl,
    space_channel_dl,
)
from bdma.config import PRESETS
from bdma.experiments import (
    decorrelation_stats,
    envelope_trend,
    one_ring_ratio,
    run_linksim_sweep,
    run_prop_suite,
    run_schedule,
    run_spreads,
    run_sumrate_sweep,
)
from bdma.link import OfdmFrame, apply_sync, channel_apply_dl, ofdm_demodulate, ofdm_modulate
from bdma.scenario import generate_cluster_rays
from bdma.scheduling import (
    LinkBudget,
    RateEvaluator,
    ScheduleLimits,
    exhaustive_schedule,
    greedy_schedule_dl,
    greedy_schedule_ul,
)
from bdma.sync import (
    ANALYTIC,
    EMPIRICAL,
    JOINT,
    PER_BEAM,
    effective_channel_dl,
    make_sync_plan,
    offset_bounds,
    one_ring_rays,
    spreads,
)

DESK = PRESETS["desk"]


def test_criterion_1_frequency_spread_law(criterion):
    with criterion.check(1, "per-beam/joint Doppler spread = 1/K", 1.0) as d:
        rays = generate_cluster_rays(DESK, 0, 0)
        prof = UtProfile(rays, DESK.carrier_freq_hz, DESK.velocity_mps)
        worst = 0.0
        for K in (2, 8, 32, 128):
            b = offset_bounds(rays, prof, K, ANALYTIC)
            r = spreads(b, PER_BEAM).doppler_spread_hz / spreads(b, JOINT).doppler_spread_hz
            worst = max(worst, abs(r * K - 1.0))
        d["max_rel_err"] = f"{worst:.1e}"
        assert worst <= 1e-12


def test_criterion_2_one_ring_delay_law(criterion):
    with criterion.check(2, "one-ring delay spread ratio = 1/K", 10.0) as d:
        r = 50.0
        rays = one_ring_rays(r, 100_000, rng_seed=0)
        prof = UtProfile(rays, DESK.carrier_freq_hz, DESK.velocity_mps)
        analytic = max(abs(one_ring_ratio(rays, prof, K, ANALYTIC, r) * K - 1) for K in (8, 32))
        empirical = max(abs(one_ring_ratio(rays, prof, K, EMPIRICAL, r) * K - 1) for K in (8, 32))
        d["analytic_err"] = f"{analytic:.1e}"
        d["empirical_err"] = f"{empirical:.2%}"
        assert analytic <= 1e-12
        assert empirical <= 0.02


def test_criterion_3_decorrelation_and_variance(criterion):
    with criterion.check(3, "beam decorrelation and variance match at (64,16)", 60.0) as d:
        rays = generate_cluster_rays(DESK, 0, 0)
        cfg = ArrayConfig(64, 16)
        samples = sample_beam_channels_dl(rays, cfg, np.random.default_rng(1), 10_000)
        corr, var_err = decorrelation_stats(samples, power_matrix(rays, cfg).omega)
        d["max_corr"] = f"{corr:.4f}"
        d["max_var_err"] = f"{var_err:.2%}"
        assert corr < 5 / np.sqrt(10_000)
        assert var_err <= 0.05


def test_criterion_4_envelope_trend(criterion):
    with criterion.check(4, "envelope relative std non-increasing in (M,K)", 60.0) as d:
        rays = generate_cluster_rays(DESK, 0, 0)
        env = envelope_trend(rays, DESK.carrier_freq_hz, DESK.velocity_mps)
        d["rel_std"] = ",".join(f"{v:.4f}" for v in env)
        assert all(b <= a for a, b in zip(env, env[1:]))


def test_criterion_5_per_subcarrier_model(criterion):
    with criterion.check(5, "demodulated symbols match effective channel", 30.0) as d:
        ts = DESK.sample_interval_s
        ofdm = DESK.ofdm
        cfg = ArrayConfig(32, 8)
        rays = RaySet(np.array([0.5, 0.3, 0.2]), np.arcsin([-0.8, -0.1, 0.6]), np.arcsin([-0.5, 0.1, 0.7]),
                      np.array([10, 50, 120]) * ts, np.array([0.1, 1.0, 2.0]), np.zeros(3))
        prof = UtProfile.from_doppler(rays, DESK.carrier_freq_hz, 37.5e3)
        plan = make_sync_plan(offset_bounds(rays, prof, cfg.K, EMPIRICAL), PER_BEAM)
        tx = tuple(int(m) for m in cell_indices(rays, cfg)[1])
        frame = OfdmFrame.random(tx, ofdm.num_subcarriers, np.random.default_rng(0))
        rx = apply_sync(channel_apply_dl(ofdm_modulate(frame, ofdm), rays, prof, ofdm, cfg), plan)
        Y = ofdm_demodulate(rx, ofdm)
        X = frame.symbols()
        worst = 0.0
        for n in range(ofdm.num_subcarriers):
            G = effective_channel_dl(rays, prof, plan, n, ofdm, cfg).entries[:, list(tx)]
            pred = G @ X[:, :, n].T
            worst = max(worst, np.abs(Y[:, :, n] - pred).max() / np.abs(pred).max())
        d["max_rel_err"] = f"{worst:.1e}"
        assert worst <= 1e-6


def _constraint_instance(seed):
    rng = np.random.default_rng(seed)
    U = int(rng.integers(1, 6))
    cfg = ArrayConfig(int(rng.integers(4, 33)), int(rng.integers(2, 9)))
    config = DESK.with_overrides(M=cfg.M, K=cfg.K)
    rays = [generate_cluster_rays(config, u, seed) for u in range(U)]
    limits = ScheduleLimits(tuple(int(x) for x in rng.integers(0, 5, U)), tuple(int(x) for x in rng.integers(0, 5, U)),
                            int(rng.integers(0, cfg.M + 1)))
    return rays, cfg, limits


def test_criterion_6_scheduler(criterion):
    with criterion.check(6, "greedy scheduler constraints and optimality", 600.0) as d:
        budget = LinkBudget.from_db(10)
        for seed in range(100):
            rays, cfg, limits = _constraint_instance(seed)
            omegas = [power_matrix(r, cfg) for r in rays]
            if seed % 2:
                ev = RateEvaluator.from_rays(rays, cfg, budget, 50, seed)
                sched = greedy_schedule_dl(omegas, limits, ev)
            else:
                ev = RateEvaluator.from_rays(rays, cfg, budget, 50, seed, link="ul")
                sched = greedy_schedule_ul(omegas, limits, ev)
            assert not sched.violations(limits), f"instance {seed}: {sched.violations(limits)}"

        small = DESK.with_overrides(M=6, K=2, num_uts=3)
        limits = ScheduleLimits.uniform(3, 6, 2, 6)
        ratios = []
        for inst in range(20):
            rays = [generate_cluster_rays(small, u, inst) for u in range(3)]
            omegas = [power_matrix(r, small.array) for r in rays]
            ev = RateEvaluator.from_rays(rays, small.array, budget, 200, inst)
            best = ev(exhaustive_schedule(omegas, limits, ev))
            ratios.append(ev(greedy_schedule_dl(omegas, limits, ev)) / best if best > 0 else 1.0)
        d["mean_greedy_over_opt"] = f"{np.mean(ratios):.4f}"
        assert np.mean(ratios) >= 0.90

        sweep = run_sumrate_sweep(DESK.with_overrides(snr_grid_db="5"))
        greedy, ifree = sweep.tables["sumrate"].rows[0][1:3]
        d["desk_ratio_5db"] = f"{greedy / ifree:.4f}"
        assert greedy <= ifree
        assert greedy / ifree >= 0.75


def test_criterion_7_pbs_link_advantage(criterion):
    with criterion.check(7, "per-beam sync beats joint sync on the mobility scenario", 600.0) as d:
        config = PRESETS["mobility"]
        assert abs(config.max_doppler_hz * config.ofdm.symbol_duration_s - 0.5) < 1e-9
        res = run_linksim_sweep(config)
        rows = res.tables["linksim"].rows
        by = {(r[0], r[1]): r for r in rows}
        evm_ok = ber_ok = True
        for snr in config.snr_grid_db:
            j, p = by[snr, JOINT], by[snr, PER_BEAM]
            assert p[5] >= 100_000 and j[5] >= 100_000
            evm_ok &= p[2] < j[2]
            ber_ok &= p[3] <= j[3]
        d["ber_pbs"] = ",".join(f"{by[s, PER_BEAM][3]:.3f}" for s in config.snr_grid_db)
        d["ber_joint"] = ",".join(f"{by[s, JOINT][3]:.3f}" for s in config.snr_grid_db)
        assert evm_ok, "per-beam EVM not strictly lower at every SNR"
        assert ber_ok, "per-beam BER above joint at some SNR"


def test_criterion_8_numerical_hygiene(criterion):
    with criterion.check(8, "unitarity, norm preservation and reproducibility", 600.0) as d:
        worst = 0.0
        for n in (1, 2, 8, 64, 256):
            v = DftBeamformer(n).matrix
            worst = max(worst, np.abs(v.conj().T @ v - np.eye(n)).max(), np.abs(v @ v.conj().T - np.eye(n)).max())
        rays = generate_cluster_rays(DESK, 0, 3)
        prof = UtProfile(rays, DESK.carrier_freq_hz, DESK.velocity_mps)
        for M, K in ((16, 8), (64, 32), (256, 128)):
            cfg = ArrayConfig(M, K)
            g = space_channel_dl(rays, prof, 2e-4, 3e7, cfg)
            h = beam_channel_exact(rays, prof, 2e-4, 3e7, cfg).entries
            worst = max(worst, abs(np.linalg.norm(h) - np.linalg.norm(g)) / np.linalg.norm(g))
        d["max_err"] = f"{worst:.1e}"
        assert worst <= 1e-10

        mobility = PRESETS["mobility"].with_overrides(link_frames=1)
        runs = [(run_prop_suite, DESK), (run_sumrate_sweep, DESK), (run_schedule, DESK),
                (run_spreads, DESK), (run_linksim_sweep, DESK), (run_linksim_sweep, mobility)]
        for fn, config in runs:
            a, b = fn(config), fn(config)
            for name in a.tables:
                assert a.csv_text(name) == b.csv_text(name), f"{a.name}/{name} differs across runs"
            assert a.documents == b.documents
        d["experiments_rerun"] = len(runs)
