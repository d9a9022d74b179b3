"""BDMA beam scheduling and ergodic sum-rate evaluation.

Each UT owns a set of BS beams that no other UT may use, plus a set of its
own beams.  In the downlink the BS beams transmit and the UT beams receive;
in the uplink the roles swap.  Rates assume equal power over the scheduled
transmit beams and single-user decoding with interference treated as noise.

Channel realizations are passed around as arrays shaped
``(trials, U, K, M)`` for the downlink and ``(trials, U, M, K)`` for the
uplink.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channel import ArrayConfig, PowerMatrix, RaySet, cell_indices

DL = "dl"
UL = "ul"
MAX_SEARCH_SPACE = 1_000_000

_LN2 = math.log(2.0)


class ConstraintError(ValueError):
    """An assignment violates the scheduling constraints."""


class SearchSpaceError(RuntimeError):
    """Exhaustive search would exceed the candidate guard."""


@dataclass(frozen=True)
class ScheduleLimits:
    """Maximum numbers of BS-side beams per UT, UT-side beams per UT, and BS-side beams in total."""

    per_ut_bs: tuple[int, ...]
    per_ut_ut: tuple[int, ...]
    total_bs: int

    def __post_init__(self):
        object.__setattr__(self, "per_ut_bs", tuple(int(x) for x in self.per_ut_bs))
        object.__setattr__(self, "per_ut_ut", tuple(int(x) for x in self.per_ut_ut))
        if len(self.per_ut_bs) != len(self.per_ut_ut):
            raise ValueError("per-UT limit vectors differ in length")
        if min(self.per_ut_bs + self.per_ut_ut + (self.total_bs,), default=0) < 0:
            raise ValueError("limits must be nonnegative")

    @classmethod
    def uniform(cls, num_uts: int, bs: int, ut: int, total_bs: int) -> "ScheduleLimits":
        return cls((bs,) * num_uts, (ut,) * num_uts, total_bs)

    @property
    def num_uts(self) -> int:
        return len(self.per_ut_bs)


@dataclass(frozen=True)
class BeamAssignment:
    """Per-UT BS-side and UT-side beam sets for one link direction."""

    bs_beams: tuple[tuple[int, ...], ...]
    ut_beams: tuple[tuple[int, ...], ...]
    link: str = DL

    def __post_init__(self):
        object.__setattr__(self, "bs_beams", tuple(tuple(sorted(int(b) for b in s)) for s in self.bs_beams))
        object.__setattr__(self, "ut_beams", tuple(tuple(sorted(int(b) for b in s)) for s in self.ut_beams))
        if len(self.bs_beams) != len(self.ut_beams):
            raise ValueError("bs and ut beam lists differ in length")
        if self.link not in (DL, UL):
            raise ValueError(f"unknown link {self.link!r}")

    @property
    def num_uts(self) -> int:
        return len(self.bs_beams)

    @property
    def tx_beams(self):
        return self.bs_beams if self.link == DL else self.ut_beams

    @property
    def rx_beams(self):
        return self.ut_beams if self.link == DL else self.bs_beams

    @property
    def num_bs_beams(self) -> int:
        return sum(len(s) for s in self.bs_beams)

    def encoding(self):
        return (self.bs_beams, self.ut_beams)

    def violations(self, limits: ScheduleLimits) -> list[str]:
        out = []
        if limits.num_uts != self.num_uts:
            out.append("limit vectors do not match the number of UTs")
            return out
        seen: dict[int, int] = {}
        for u, s in enumerate(self.bs_beams):
            if len(set(s)) != len(s):
                out.append(f"UT {u} lists a BS beam twice")
            for b in s:
                if b in seen:
                    out.append(f"BS beam {b} shared by UTs {seen[b]} and {u}")
                seen[b] = u
            if len(s) > limits.per_ut_bs[u]:
                out.append(f"UT {u} has {len(s)} BS beams > {limits.per_ut_bs[u]}")
        for u, s in enumerate(self.ut_beams):
            if len(s) > limits.per_ut_ut[u]:
                out.append(f"UT {u} has {len(s)} UT beams > {limits.per_ut_ut[u]}")
        if self.num_bs_beams > limits.total_bs:
            out.append(f"{self.num_bs_beams} BS beams scheduled > {limits.total_bs}")
        return out

    def validate(self, limits: ScheduleLimits) -> "BeamAssignment":
        problems = self.violations(limits)
        if problems:
            raise ConstraintError("; ".join(problems))
        return self

    def to_records(self) -> list[dict]:
        return [{"ut": u, "tx_beams": list(t), "rx_beams": list(r)}
                for u, (t, r) in enumerate(zip(self.tx_beams, self.rx_beams))]

    def to_json(self) -> str:
        return json.dumps(self.to_records())

    @classmethod
    def empty(cls, num_uts: int, link: str = DL) -> "BeamAssignment":
        return cls(((),) * num_uts, ((),) * num_uts, link)


@dataclass(frozen=True)
class LinkBudget:
    """SNR ``rho = P / sigma``; ``snr_linear`` may be per UT (uplink)."""

    snr_linear: float | tuple[float, ...]
    noise_power: float = 1.0

    def __post_init__(self):
        snr = np.atleast_1d(np.asarray(self.snr_linear, float))
        if np.any(snr <= 0) or self.noise_power <= 0:
            raise ValueError("SNR and noise power must be positive")

    @classmethod
    def from_db(cls, snr_db, noise_power: float = 1.0) -> "LinkBudget":
        snr = 10.0 ** (np.asarray(snr_db, float) / 10.0)
        return cls(float(snr) if snr.ndim == 0 else tuple(snr.tolist()), noise_power)

    @property
    def tx_power(self):
        return np.asarray(self.snr_linear, float) * self.noise_power

    def snr_per_ut(self, num_uts: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.snr_linear, float), (num_uts,)).copy()


@dataclass(frozen=True, eq=False)
class RateEstimate:
    sum_rate_bps_hz: float
    per_ut_rates: np.ndarray
    num_trials: int
    std_error: float


# --- channel sources ----------------------------------------------------------


def trial_rng(seed, *keys) -> np.random.Generator:
    """Generator for a deterministic substream ``keys`` of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(keys)))


@dataclass(frozen=True, eq=False)
class RayChannelSampler:
    """Draws approximation-model beam channels for a group of UTs.

    Every trial keeps the ray geometry and powers and redraws all phases.
    Trial ``i`` uses its own substream of the seed, so changing the number of
    trials does not perturb earlier ones.
    """

    rays: Sequence[RaySet]
    cfg: ArrayConfig
    link: str = DL
    _cells: list = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_cells", [cell_indices(r, self.cfg) for r in self.rays])

    @property
    def num_uts(self) -> int:
        return len(self.rays)

    def __call__(self, num_trials: int, rng_seed) -> np.ndarray:
        K, M, U = self.cfg.K, self.cfg.M, len(self.rays)
        counts = [len(r) for r in self.rays]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        phases = np.empty((num_trials, offsets[-1]))
        for i in range(num_trials):
            phases[i] = trial_rng(rng_seed, i).uniform(0.0, 2 * np.pi, offsets[-1])
        shape = (num_trials, U, K, M) if self.link == DL else (num_trials, U, M, K)
        out = np.zeros(shape, complex)
        for u, (rays, (k, m)) in enumerate(zip(self.rays, self._cells)):
            if not counts[u]:
                continue
            amp = np.sqrt(rays.power) * np.exp(1j * phases[:, offsets[u]:offsets[u + 1]])
            flat = np.zeros((num_trials, K * M), complex)
            idx = k * M + m if self.link == DL else m * K + k
            np.add.at(flat, (slice(None), idx), amp)
            out[:, u] = flat.reshape((num_trials,) + shape[2:])
        return out


def fixed_channels(channels) -> Callable[[int, object], np.ndarray]:
    """Sampler that always returns the given realizations (shape (T, U, a, b))."""
    channels = np.asarray(channels, complex)

    def sampler(num_trials, rng_seed=None):
        if num_trials != channels.shape[0]:
            raise ValueError(f"fixed sampler holds {channels.shape[0]} trials, asked for {num_trials}")
        return channels

    return sampler


# --- rates --------------------------------------------------------------------


def _log2det_eye_plus(cols: np.ndarray) -> np.ndarray:
    """log2 det(I + C C^H) for a stack of matrices C (T, n, p)."""
    n = cols.shape[1]
    if n == 0:
        return np.zeros(cols.shape[0])
    if cols.shape[2] == 0:
        return np.zeros(cols.shape[0])
    gram = cols @ np.conj(np.swapaxes(cols, 1, 2))
    gram = gram + np.eye(n)
    _, logdet = np.linalg.slogdet(gram)
    return logdet / _LN2


def _dl_ut_rate(channels_u: np.ndarray, rx, own, all_tx, snr: float, interference: bool) -> np.ndarray:
    """Per-trial DL rate of one UT from its channels (T, K, M)."""
    if not rx or not own:
        return np.zeros(channels_u.shape[0])
    c = np.sqrt(snr / len(all_tx))
    g = channels_u[:, list(rx), :]
    if not interference:
        return _log2det_eye_plus(c * g[:, :, list(own)])
    others = [b for b in all_tx if b not in own]
    return _log2det_eye_plus(c * g[:, :, list(all_tx)]) - _log2det_eye_plus(c * g[:, :, others])


def per_trial_rates(channels: np.ndarray, assignment: BeamAssignment, budget: LinkBudget,
                    interference: bool = True) -> np.ndarray:
    """Rate of every UT in every trial, shape (T, U)."""
    T, U = channels.shape[:2]
    if assignment.num_uts != U:
        raise ConstraintError("assignment and channels disagree on the number of UTs")
    out = np.zeros((T, U))
    if assignment.link == DL:
        all_tx = tuple(b for s in assignment.bs_beams for b in s)
        snr = float(np.asarray(budget.snr_linear))
        for u in range(U):
            out[:, u] = _dl_ut_rate(channels[:, u], assignment.ut_beams[u], assignment.bs_beams[u],
                                    all_tx, snr, interference)
        return out

    snr = budget.snr_per_ut(U)
    for u in range(U):
        rx = list(assignment.bs_beams[u])
        if not rx or not assignment.ut_beams[u]:
            continue
        blocks = {}
        for v in range(U):
            tx = list(assignment.ut_beams[v])
            if tx:
                blocks[v] = np.sqrt(snr[v] / len(tx)) * channels[:, v][:, rx][:, :, tx]
        if interference:
            num = np.concatenate(list(blocks.values()), axis=2)
            rest = [b for v, b in blocks.items() if v != u]
            den = np.concatenate(rest, axis=2) if rest else np.zeros((T, len(rx), 0))
            out[:, u] = _log2det_eye_plus(num) - _log2det_eye_plus(den)
        else:
            out[:, u] = _log2det_eye_plus(blocks[u])
    return out


def _estimate(rates: np.ndarray) -> RateEstimate:
    T = rates.shape[0]
    sums = rates.sum(axis=1)
    se = float(sums.std(ddof=1) / np.sqrt(T)) if T > 1 else 0.0
    per_ut = rates.mean(axis=0)
    return RateEstimate(float(per_ut.sum()), per_ut, T, se)


def _rate(channel_sampler, assignment, budget, num_trials, rng_seed, limits, interference):
    if limits is not None:
        assignment.validate(limits)
    else:
        # disjointness must hold regardless of the caller's limits
        unlimited = ScheduleLimits.uniform(assignment.num_uts, 10**9, 10**9, 10**9)
        assignment.validate(unlimited)
    channels = channel_sampler(num_trials, rng_seed)
    return _estimate(per_trial_rates(channels, assignment, budget, interference))


def sum_rate_dl(channel_sampler, assignment: BeamAssignment, budget: LinkBudget, num_trials: int,
                rng_seed=0, limits: ScheduleLimits | None = None) -> RateEstimate:
    """Monte Carlo ergodic DL sum rate with equal power over all scheduled BS beams."""
    if assignment.link != DL:
        raise ValueError("sum_rate_dl needs a downlink assignment")
    return _rate(channel_sampler, assignment, budget, num_trials, rng_seed, limits, True)


def sum_rate_ul(channel_sampler, assignment: BeamAssignment, budget: LinkBudget, num_trials: int,
                rng_seed=0, limits: ScheduleLimits | None = None) -> RateEstimate:
    """Monte Carlo ergodic UL sum rate; each UT splits its power over its own transmit beams."""
    if assignment.link != UL:
        raise ValueError("sum_rate_ul needs an uplink assignment")
    return _rate(channel_sampler, assignment, budget, num_trials, rng_seed, limits, True)


def interference_free_rate(channel_sampler, assignment: BeamAssignment, budget: LinkBudget,
                           num_trials: int, rng_seed=0,
                           limits: ScheduleLimits | None = None) -> RateEstimate:
    """Sum rate with every cross-UT interference term removed (genie-aided benchmark)."""
    return _rate(channel_sampler, assignment, budget, num_trials, rng_seed, limits, False)


class RateEvaluator:
    """Sum-rate objective over a fixed batch of channel realizations.

    Holding the realizations fixed gives every candidate assignment the same
    random numbers, which keeps greedy comparisons consistent and repeatable.
    """

    def __init__(self, channels: np.ndarray, budget: LinkBudget, link: str = DL,
                 interference: bool = True):
        self.channels = np.asarray(channels, complex)
        self.budget = budget
        self.link = link
        self.interference = interference
        self.calls = 0
        self._ut_cache: dict = {}

    @classmethod
    def from_sampler(cls, channel_sampler, budget: LinkBudget, num_trials: int = 200, rng_seed=0,
                     link: str = DL, interference: bool = True) -> "RateEvaluator":
        return cls(channel_sampler(num_trials, rng_seed), budget, link, interference)

    @classmethod
    def from_rays(cls, rays: Sequence[RaySet], cfg: ArrayConfig, budget: LinkBudget,
                  num_trials: int = 200, rng_seed=0, link: str = DL,
                  interference: bool = True) -> "RateEvaluator":
        return cls.from_sampler(RayChannelSampler(list(rays), cfg, link), budget, num_trials,
                                rng_seed, link, interference)

    def without_interference(self) -> "RateEvaluator":
        """Same realizations and budget, cross-UT interference removed."""
        return RateEvaluator(self.channels, self.budget, self.link, interference=False)

    @property
    def num_uts(self) -> int:
        return self.channels.shape[1]

    def per_ut(self, assignment: BeamAssignment) -> np.ndarray:
        self.calls += 1
        return per_trial_rates(self.channels, assignment, self.budget, self.interference).mean(axis=0)

    def dl_ut_rate(self, u: int, rx: tuple, own: tuple, all_tx: tuple) -> float:
        """Mean DL rate of UT ``u`` alone; memoized, used by the exhaustive search."""
        key = (u, rx, own, all_tx)
        if key not in self._ut_cache:
            snr = float(np.asarray(self.budget.snr_linear))
            self._ut_cache[key] = float(_dl_ut_rate(self.channels[:, u], rx, own, tuple(sorted(all_tx)),
                                                    snr, self.interference).mean())
        return self._ut_cache[key]

    def estimate(self, assignment: BeamAssignment) -> RateEstimate:
        return _estimate(per_trial_rates(self.channels, assignment, self.budget, self.interference))

    def __call__(self, assignment: BeamAssignment) -> float:
        return float(self.per_ut(assignment).sum())


# --- scheduling -----------------------------------------------------------------


def _omega_stack(omegas) -> np.ndarray:
    return np.stack([o.omega if isinstance(o, PowerMatrix) else np.asarray(o, float) for o in omegas])


def bs_norm_order(omegas) -> list[tuple[int, int]]:
    """(UT, BS beam) pairs by decreasing BS-side beam norm; ties go to the lower pair."""
    w = _omega_stack(omegas).sum(axis=1)  # (U, M)
    U, M = w.shape
    pairs = [(u, m) for u in range(U) for m in range(M)]
    return sorted(pairs, key=lambda p: (-w[p], p))


def ut_norm_order(omega) -> list[int]:
    """UT beams of one UT by decreasing UT-side beam norm; ties go to the lower index."""
    w = (omega.omega if isinstance(omega, PowerMatrix) else np.asarray(omega, float)).sum(axis=1)
    return sorted(range(w.size), key=lambda k: (-w[k], k))


def _greedy(omegas, limits: ScheduleLimits, rate_evaluator, link: str, trace: list | None):
    om = _omega_stack(omegas)
    U, K, M = om.shape
    if limits.num_uts != U:
        raise ValueError("limits and power matrices disagree on the number of UTs")
    bs_sets: list[set[int]] = [set() for _ in range(U)]
    all_ut = [tuple(range(K))] * U

    def assignment(ut_sets):
        return BeamAssignment(tuple(tuple(s) for s in bs_sets), tuple(ut_sets), link)

    # phase 1: BS-side beams with every UT-side beam active
    excluded: set[tuple[int, int]] = {(u, m) for u in range(U) if limits.per_ut_bs[u] == 0
                                       for m in range(M)}
    best = 0.0
    if limits.total_bs > 0:
        for u1, m1 in bs_norm_order(om):
            if len(excluded) >= M * U:
                break
            if (u1, m1) in excluded:
                continue
            bs_sets[u1].add(m1)
            r = rate_evaluator(assignment(all_ut))
            if r > best:
                best = r
                if trace is not None:
                    trace.append(("bs", u1, m1, r))
                if sum(len(s) for s in bs_sets) >= limits.total_bs:
                    break
                if len(bs_sets[u1]) >= limits.per_ut_bs[u1]:
                    excluded.update((u1, m) for m in range(M))
                excluded.update((u, m1) for u in range(U))
            else:
                bs_sets[u1].discard(m1)
                excluded.add((u1, m1))

    # phase 2: UT-side beams, one UT at a time in index order
    ut_sets: list[list[int]] = [[] for _ in range(U)]
    best = 0.0
    for u in range(U):
        if limits.per_ut_ut[u] == 0:
            continue
        for k1 in ut_norm_order(om[u]):
            ut_sets[u].append(k1)
            r = rate_evaluator(assignment(ut_sets))
            if r > best:
                best = r
                if trace is not None:
                    trace.append(("ut", u, k1, r))
            else:
                ut_sets[u].pop()
            if len(ut_sets[u]) >= limits.per_ut_ut[u]:
                break
    return assignment(ut_sets).validate(limits)


def greedy_schedule_dl(omegas, limits: ScheduleLimits, rate_evaluator: Callable[[BeamAssignment], float],
                       trace: list | None = None) -> BeamAssignment:
    """Norm-ordered two-phase greedy DL beam scheduling.

    Phase 1 offers (UT, BS beam) pairs in decreasing order of the BS-side beam
    norm, with all UT receive beams active, and keeps a pair only if the sum
    rate strictly increases.  Phase 2 grows each UT's receive set in decreasing
    order of the UT-side beam norm under the same acceptance rule.  Accepted
    steps are appended to ``trace`` as ``(phase, ut, beam, rate)``.
    """
    return _greedy(omegas, limits, rate_evaluator, DL, trace)


def greedy_schedule_ul(omegas, limits: ScheduleLimits, rate_evaluator: Callable[[BeamAssignment], float],
                       trace: list | None = None) -> BeamAssignment:
    """Uplink counterpart: BS receive beams are allocated disjointly in phase 1,
    UT transmit beams per UT in phase 2, with the uplink sum rate as objective."""
    return _greedy(omegas, limits, rate_evaluator, UL, trace)


def _subsets(n: int, max_size: int) -> list[tuple[int, ...]]:
    out = [c for r in range(min(n, max_size) + 1) for c in itertools.combinations(range(n), r)]
    return sorted(out)


def _bs_candidates(U: int, M: int, limits: ScheduleLimits) -> list[tuple[tuple[int, ...], ...]]:
    cands = []
    for owners in itertools.product(range(-1, U), repeat=M):
        sets = tuple(tuple(m for m in range(M) if owners[m] == u) for u in range(U))
        if sum(len(s) for s in sets) > limits.total_bs:
            continue
        if any(len(s) > limits.per_ut_bs[u] for u, s in enumerate(sets)):
            continue
        cands.append(sets)
    return sorted(cands)


def search_space_size(U: int, K: int, M: int, limits: ScheduleLimits) -> int:
    """Upper bound on the number of assignments the exhaustive search visits."""
    n_ut = 1
    for u in range(U):
        n_ut *= sum(math.comb(K, r) for r in range(min(K, limits.per_ut_ut[u]) + 1))
    return (U + 1) ** M * n_ut


def exhaustive_schedule(omegas, limits: ScheduleLimits, rate_evaluator: RateEvaluator,
                        max_candidates: int = MAX_SEARCH_SPACE) -> BeamAssignment:
    """Rate-maximizing assignment by enumeration.

    Ties go to the lexicographically smallest ``(bs_beams, ut_beams)``.  In the
    downlink a UT's receive set only enters its own rate term, so receive sets
    are optimized per UT for each BS-side candidate.
    """
    om = _omega_stack(omegas)
    U, K, M = om.shape
    size = search_space_size(U, K, M, limits)
    if size > max_candidates:
        raise SearchSpaceError(f"{size} candidate assignments exceed the guard of {max_candidates}")
    link = rate_evaluator.link
    ut_options = [_subsets(K, limits.per_ut_ut[u]) for u in range(U)]
    best_rate, best = -np.inf, None
    for bs_sets in _bs_candidates(U, M, limits):
        if link == DL:
            all_tx = tuple(sorted(b for s in bs_sets for b in s))
            ut_sets, total = [], 0.0
            for u in range(U):
                rates = [rate_evaluator.dl_ut_rate(u, opt, bs_sets[u], all_tx) for opt in ut_options[u]]
                # options are sorted, so the first maximizer is the smallest encoding
                i = int(np.argmax(rates))
                ut_sets.append(ut_options[u][i])
                total += rates[i]
            cand = BeamAssignment(bs_sets, tuple(ut_sets), DL)
            if total > best_rate:
                best_rate, best = total, cand
        else:
            for ut_sets in itertools.product(*ut_options):
                cand = BeamAssignment(bs_sets, ut_sets, UL)
                total = rate_evaluator(cand)
                if total > best_rate:
                    best_rate, best = total, cand
    return best.validate(limits)
