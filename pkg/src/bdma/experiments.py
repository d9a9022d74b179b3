"""Experiment orchestration: property checks, sum-rate sweeps and link sweeps.

Every experiment is a pure function of the configuration and its master
seed.  Random draws come from substreams keyed by (seed, purpose, index), so
changing a trial count leaves earlier trials untouched.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .channel import (
    ArrayConfig,
    UtProfile,
    beam_channel_approx_dl,
    beam_channel_exact,
    envelope_relative_std,
    power_matrix,
    sample_beam_channels_dl,
)
from .config import ScenarioConfig
from .link import run_link
from .scenario import drop_uts, generate_cluster_rays, strongest_link
from .scheduling import (
    LinkBudget,
    RateEvaluator,
    ScheduleLimits,
    greedy_schedule_dl,
    trial_rng,
)
from .sync import (
    ANALYTIC,
    EMPIRICAL,
    JOINT,
    PER_BEAM,
    OneRingDelay,
    offset_bounds,
    one_ring_rays,
    spreads,
)

PROP4_K = (2, 8, 32, 128)
ONE_RING_K = (8, 32)
DECORRELATION_ARRAY = (64, 16)
ENVELOPE_LADDER = ((16, 8), (64, 32), (256, 128))
ENVELOPE_GRID = 16
ENVELOPE_SPAN_S = 1e-3
ENVELOPE_SPAN_HZ = 100e6

# substream purposes
_RAYS, _PHASES, _RING, _REPORT = 0, 1, 2, 3


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} values, table has {len(self.columns)} columns")
        self.rows.append(tuple(row))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


@dataclass
class ExperimentResult:
    """Named tables plus pass/fail checks and metadata."""

    name: str
    config: ScenarioConfig
    seed: int
    tables: dict[str, Table] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    documents: dict[str, str] = field(default_factory=dict)
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def csv_text(self, table: str) -> str:
        t = self.tables[table]
        buf = io.StringIO()
        buf.write(f"# config_hash={self.config.config_hash()} seed={self.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(t.columns)
        for row in t.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def metadata(self) -> dict:
        return {
            "experiment": self.name,
            "config_hash": self.config.config_hash(),
            "seed": self.seed,
            "timestamp": self.timestamp,
            "passed": self.passed,
            "checks": self.checks,
            "config": self.config.to_dict(),
        }

    def write(self, out_dir: str | Path) -> list[Path]:
        """Write one CSV per table and a JSON metadata file; returns the paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name in self.tables:
            p = out / f"{self.name}_{name}.csv"
            p.write_text(self.csv_text(name))
            paths.append(p)
        for name, text in self.documents.items():
            p = out / f"{self.name}_{name}.json"
            p.write_text(text + "\n")
            paths.append(p)
        p = out / f"{self.name}_meta.json"
        p.write_text(json.dumps(self.metadata(), indent=2, default=_json_default) + "\n")
        paths.append(p)
        return paths


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


# --- statistics -------------------------------------------------------------


def decorrelation_stats(samples: np.ndarray, omega: np.ndarray) -> tuple[float, float]:
    """Max |sample correlation| over distinct occupied entries and max relative variance error.

    ``samples`` is ``(trials, K, M)`` of zero-mean entries.
    """
    occ = omega.ravel() > 0
    x = samples.reshape(samples.shape[0], -1)[:, occ]
    gram = x.T @ x.conj() / x.shape[0]
    var = np.real(np.diag(gram))
    corr = np.abs(gram) / np.sqrt(np.outer(var, var))
    np.fill_diagonal(corr, 0.0)
    rel = np.abs(var / omega.ravel()[occ] - 1.0)
    return float(corr.max(initial=0.0)), float(rel.max(initial=0.0))


def envelope_trend(rays, carrier_freq_hz: float, velocity_mps: float,
                   ladder=ENVELOPE_LADDER, grid: int = ENVELOPE_GRID, exact: bool = True) -> list[float]:
    """Relative envelope spread over a (t, f) grid for each (M, K) in ``ladder``."""
    profile = UtProfile(rays, carrier_freq_hz, velocity_mps)
    ts = np.linspace(0.0, ENVELOPE_SPAN_S, grid)
    fs = np.linspace(0.0, ENVELOPE_SPAN_HZ, grid)
    out = []
    for M, K in ladder:
        cfg = ArrayConfig(M, K)
        if exact:
            E = [[beam_channel_exact(rays, profile, t, f, cfg, normalize=True).entries for f in fs] for t in ts]
        else:
            E = [[beam_channel_approx_dl(rays, profile, t, f, cfg).entries for f in fs] for t in ts]
        out.append(envelope_relative_std(np.array(E)))
    return out


def doppler_ratio(profile: UtProfile, K: int) -> float:
    b = offset_bounds(profile.rays, profile, K, ANALYTIC)
    return spreads(b, PER_BEAM).doppler_spread_hz / spreads(b, JOINT).doppler_spread_hz


def one_ring_ratio(rays, profile: UtProfile, K: int, bound_mode: str, radius_m: float) -> float:
    law = OneRingDelay(radius_m) if bound_mode == ANALYTIC else None
    b = offset_bounds(rays, profile, K, bound_mode, delay_law=law)
    return spreads(b, PER_BEAM).delay_spread_s / spreads(b, JOINT).delay_spread_s


# --- experiments -------------------------------------------------------------


def run_prop_suite(config: ScenarioConfig) -> ExperimentResult:
    """Frequency and one-ring spread ratios, beam decorrelation, variance match and envelope trend."""
    seed = config.master_seed
    res = ExperimentResult("props", config, seed)
    t = Table(("check", "param", "value", "target", "tolerance", "passed"))
    res.tables["props"] = t

    def record(name, param, value, target, tol, ok):
        t.add(name, param, float(value), float(target), float(tol), bool(ok))
        res.checks[f"{name}[{param}]"] = bool(ok)

    rays = generate_cluster_rays(config, 0, (seed, _RAYS))
    # a static config has no Doppler to compare, so the frequency law is checked at 1 kHz
    doppler = config.max_doppler_hz if config.max_doppler_hz > 0 else 1e3
    profile = UtProfile.from_doppler(rays, config.carrier_freq_hz, doppler)
    for K in PROP4_K:
        r = doppler_ratio(profile, K)
        record("doppler_ratio", f"K={K}", r, 1.0 / K, 1e-12, abs(r * K - 1.0) <= 1e-12)

    ring = one_ring_rays(config.ring_radius_m, config.ring_rays, rng_seed=trial_rng(seed, _RING))
    ring_profile = UtProfile(ring, config.carrier_freq_hz, config.velocity_mps)
    for K in ONE_RING_K:
        r = one_ring_ratio(ring, ring_profile, K, ANALYTIC, config.ring_radius_m)
        record("ring_delay_ratio_analytic", f"K={K}", r, 1.0 / K, 1e-12, abs(r * K - 1.0) <= 1e-12)
        r = one_ring_ratio(ring, ring_profile, K, EMPIRICAL, config.ring_radius_m)
        record("ring_delay_ratio_empirical", f"K={K}", r, 1.0 / K, 0.02, abs(r * K - 1.0) <= 0.02)

    M, K = DECORRELATION_ARRAY
    cfg = ArrayConfig(M, K)
    trials = config.prop_trials
    samples = sample_beam_channels_dl(rays, cfg, trial_rng(seed, _PHASES), trials)
    corr, var_err = decorrelation_stats(samples, power_matrix(rays, cfg).omega)
    bound = 5.0 / np.sqrt(trials)
    record("decorrelation", f"M={M},K={K}", corr, 0.0, bound, corr < bound)
    record("variance_match", f"M={M},K={K}", var_err, 0.0, 0.05, var_err <= 0.05)

    env = envelope_trend(rays, config.carrier_freq_hz, config.velocity_mps)
    # each ladder step must not exceed the previous one
    for i, ((m, k), v) in enumerate(zip(ENVELOPE_LADDER, env)):
        prev = env[i - 1] if i else v
        record("envelope_rel_std", f"M={m},K={k}", v, prev, 0.0, v <= prev)
    return res


def _scenario_limits(config: ScenarioConfig) -> ScheduleLimits:
    return ScheduleLimits.uniform(config.num_uts, config.bs_beams_per_ut, config.ut_beams_per_ut,
                                  config.total_bs_beams)


def _greedy_point(config: ScenarioConfig, rays, omegas, snr_db: float):
    """Greedy schedule plus its reported and interference-free rates (fresh trials)."""
    seed = config.master_seed
    budget = LinkBudget.from_db(snr_db)
    ev = RateEvaluator.from_rays(rays, config.array, budget, config.rate_trials, (seed, _PHASES))
    sched = greedy_schedule_dl(omegas, _scenario_limits(config), ev)
    report = RateEvaluator.from_rays(rays, config.array, budget, config.report_trials, (seed, _REPORT))
    return sched, report


def run_sumrate_sweep(config: ScenarioConfig) -> ExperimentResult:
    """Greedy DL schedule per SNR point against the interference-free rate of the same schedule."""
    seed = config.master_seed
    res = ExperimentResult("sumrate", config, seed)
    t = Table(("snr_db", "greedy_rate", "ifree_rate", "ratio", "num_bs_beams"))
    res.tables["sumrate"] = t
    rays = [p.rays for p in drop_uts(config, (seed, _RAYS))]
    omegas = [power_matrix(r, config.array) for r in rays]
    prev = -np.inf
    ratio_ok = monotone = True
    for snr_db in config.snr_grid_db:
        sched, report = _greedy_point(config, rays, omegas, snr_db)
        rate = report(sched)
        ifree = report.without_interference()(sched)
        ratio = rate / ifree if ifree > 0 else 1.0
        t.add(float(snr_db), rate, ifree, ratio, sched.num_bs_beams)
        ratio_ok &= 0.0 < ratio <= 1.0 + 1e-12 or (rate == 0.0 and ifree == 0.0)
        monotone &= rate >= prev - 1e-12
        prev = rate
    res.checks["ratio_in_unit_interval"] = bool(ratio_ok)
    res.checks["rate_nondecreasing_in_snr"] = bool(monotone)
    return res


def run_linksim_sweep(config: ScenarioConfig) -> ExperimentResult:
    """Uncoded link metrics for both sync modes over the SNR grid (UT 0)."""
    seed = config.master_seed
    res = ExperimentResult("linksim", config, seed)
    t = Table(("snr_db", "sync_mode", "evm_rms", "ber", "mean_sinr_db", "num_bits"))
    res.tables["linksim"] = t
    rays = generate_cluster_rays(config, 0, (seed, _RAYS))
    profile = UtProfile(rays, config.carrier_freq_hz, config.velocity_mps)
    cfg, ofdm = config.array, config.ofdm
    assignment = strongest_link(rays, cfg, config.link_streams)
    signal_power = ofdm.num_subcarriers  # per-sample transmit power of a full frame
    ber = {}
    for i, snr_db in enumerate(config.snr_grid_db):
        noise = signal_power * 10.0 ** (-snr_db / 10.0)
        for mode in (JOINT, PER_BEAM):
            m = run_link(rays, profile, mode, assignment, ofdm, cfg, noise, (seed, _PHASES, i),
                         bound_mode=config.bound_mode, num_frames=config.link_frames)
            t.add(float(snr_db), mode, m.evm_rms, m.ber, m.mean_sinr_db, m.num_bits)
            ber[snr_db, mode] = m.ber
    if config.max_doppler_hz > 0:
        res.checks["pbs_ber_not_worse"] = all(ber[s, PER_BEAM] <= ber[s, JOINT] for s in config.snr_grid_db)
    return res


def run_spreads(config: ScenarioConfig) -> ExperimentResult:
    """Delay and Doppler spreads per sync mode for UT 0 and several K."""
    seed = config.master_seed
    res = ExperimentResult("spreads", config, seed)
    t = Table(("K", "mode", "bound_mode", "delay_spread_ns", "doppler_spread_hz"))
    res.tables["spreads"] = t
    rays = generate_cluster_rays(config, 0, (seed, _RAYS))
    profile = UtProfile(rays, config.carrier_freq_hz, config.velocity_mps)
    ok = True
    for K in sorted({1, *PROP4_K, config.K}):
        b = offset_bounds(rays, profile, K, config.bound_mode)
        s = {mode: spreads(b, mode) for mode in (JOINT, PER_BEAM)}
        for mode, r in s.items():
            t.add(K, mode, config.bound_mode, r.delay_spread_s * 1e9, r.doppler_spread_hz)
        ok &= s[PER_BEAM].delay_spread_s <= s[JOINT].delay_spread_s
    res.checks["per_beam_delay_not_worse"] = bool(ok)
    return res


def run_schedule(config: ScenarioConfig) -> ExperimentResult:
    """Greedy DL schedules over the SNR grid, with assignments as JSON."""
    seed = config.master_seed
    res = ExperimentResult("schedule", config, seed)
    t = Table(("snr_db", "sum_rate", "interference_free_rate"))
    res.tables["schedule"] = t
    rays = [p.rays for p in drop_uts(config, (seed, _RAYS))]
    omegas = [power_matrix(r, config.array) for r in rays]
    limits = _scenario_limits(config)
    assignments = []
    ok = True
    for snr_db in config.snr_grid_db:
        sched, report = _greedy_point(config, rays, omegas, snr_db)
        t.add(float(snr_db), report(sched), report.without_interference()(sched))
        assignments.append({"snr_db": float(snr_db), "assignment": sched.to_records()})
        ok &= not sched.violations(limits)
    res.documents["assignments"] = json.dumps(assignments, indent=2)
    res.checks["constraints_satisfied"] = bool(ok)
    return res
