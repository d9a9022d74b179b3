"""Joint and per-beam (PBS) time/frequency synchronization.

Offsets seen on UT receive beam ``k`` are bounded by the support of the rays
whose AoA falls in that beam's cell.  Frequency bounds come either from the
closed-form cell image of ``nu_u * sin(phi)`` ("analytic") or from the rays
actually present ("empirical").  Delay bounds are always taken from the rays,
unless a :class:`OneRingDelay` law is supplied in analytic mode.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .channel import (
    SPEED_OF_LIGHT,
    ArrayConfig,
    BeamChannel,
    DomainError,
    RaySet,
    UtProfile,
    beam_index_of,
    cell_indices,
)

JOINT = "joint"
PER_BEAM = "per_beam"
ANALYTIC = "analytic"
EMPIRICAL = "empirical"


class SyncModeError(ValueError):
    pass


@dataclass(frozen=True)
class OneRingDelay:
    """Delay law ``(r/c)(1 + sin(aoa))`` of a scatterer ring of radius ``r``."""

    radius_m: float

    def __call__(self, aoa):
        return self.radius_m / SPEED_OF_LIGHT * (1.0 + np.sin(aoa))

    def cell_bounds(self, K: int) -> tuple[np.ndarray, np.ndarray]:
        # sin(phi) spans [2k/K - 1, 2(k+1)/K - 1] on cell k, and the law is monotone in sin
        k = np.arange(K)
        scale = self.radius_m / SPEED_OF_LIGHT
        return scale * (2.0 * k / K), scale * (2.0 * (k + 1) / K)


@dataclass(frozen=True, eq=False)
class OffsetBounds:
    """Per-receive-beam time/frequency offset ranges and their aggregates.

    Beams with no ray support have ``present[k] == False`` and NaN delay
    bounds.  Analytic frequency bounds are defined for every beam; empirical
    ones only where rays are present.
    """

    tau_min_s: np.ndarray
    tau_max_s: np.ndarray
    nu_min_hz: np.ndarray
    nu_max_hz: np.ndarray
    present: np.ndarray
    bound_mode: str
    max_doppler_hz: float

    @property
    def K(self) -> int:
        return self.present.size

    @property
    def tau_min(self) -> float:
        return float(np.min(self.tau_min_s[self.present])) if self.present.any() else 0.0

    @property
    def tau_max(self) -> float:
        return float(np.max(self.tau_max_s[self.present])) if self.present.any() else 0.0

    @property
    def nu_defined(self) -> np.ndarray:
        """Beams whose frequency bounds are known (all beams in analytic mode)."""
        return ~np.isnan(self.nu_min_hz)

    @property
    def nu_min(self) -> float:
        d = self.nu_defined
        return float(np.min(self.nu_min_hz[d])) if d.any() else 0.0

    @property
    def nu_max(self) -> float:
        d = self.nu_defined
        return float(np.max(self.nu_max_hz[d])) if d.any() else 0.0


@dataclass(frozen=True, eq=False)
class SyncPlan:
    mode: str
    tau_syn_s: np.ndarray | float
    nu_syn_hz: np.ndarray | float

    def per_beam(self, K: int) -> tuple[np.ndarray, np.ndarray]:
        """Adjustments broadcast to ``K`` beams (joint plans repeat their scalar)."""
        if self.mode == JOINT:
            return np.full(K, float(self.tau_syn_s)), np.full(K, float(self.nu_syn_hz))
        tau = np.asarray(self.tau_syn_s, float)
        nu = np.asarray(self.nu_syn_hz, float)
        if tau.size != K:
            raise SyncModeError(f"plan has {tau.size} beams, expected {K}")
        return tau, nu

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "tau_syn_s": np.asarray(self.tau_syn_s).tolist(),
            "nu_syn_hz": np.asarray(self.nu_syn_hz).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class SpreadReport:
    delay_spread_s: float
    doppler_spread_hz: float
    mode: str
    bound_mode: str

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass(frozen=True)
class OfdmConfig:
    num_subcarriers: int
    cp_samples: int
    sample_interval_s: float

    def __post_init__(self):
        if self.num_subcarriers < 1 or self.cp_samples < 0 or self.sample_interval_s <= 0:
            raise DomainError("invalid OFDM configuration")

    @property
    def symbol_duration_s(self) -> float:
        """Useful symbol length ``T_us = N_us * T_s``."""
        return self.num_subcarriers * self.sample_interval_s

    @property
    def cp_duration_s(self) -> float:
        return self.cp_samples * self.sample_interval_s

    @property
    def subcarrier_spacing_hz(self) -> float:
        return 1.0 / self.symbol_duration_s

    @property
    def samples_per_symbol(self) -> int:
        return self.num_subcarriers + self.cp_samples


def _check_mode(value: str, allowed: tuple[str, ...], what: str) -> str:
    if value not in allowed:
        raise SyncModeError(f"unknown {what} {value!r}; expected one of {allowed}")
    return value


def offset_bounds(rays: RaySet, profile: UtProfile, K: int, bound_mode: str = ANALYTIC,
                  delay_law: OneRingDelay | None = None) -> OffsetBounds:
    if int(K) != K or K < 1:
        raise DomainError("K must be a positive integer")
    _check_mode(bound_mode, (ANALYTIC, EMPIRICAL), "bound mode")
    nu_u = profile.max_doppler_hz
    present = np.zeros(K, bool)
    tau_lo = np.full(K, np.nan)
    tau_hi = np.full(K, np.nan)
    nu_lo = np.full(K, np.nan)
    nu_hi = np.full(K, np.nan)

    if len(rays):
        k = beam_index_of(rays.aoa, K)
        nu = nu_u * np.sin(rays.aoa)
        present[np.unique(k)] = True
        # minimum/maximum per beam via ufunc.at on +-inf initialised buffers
        for lo, hi, vals in ((tau_lo, tau_hi, rays.delay), (nu_lo, nu_hi, nu)):
            mn = np.full(K, np.inf)
            mx = np.full(K, -np.inf)
            np.minimum.at(mn, k, vals)
            np.maximum.at(mx, k, vals)
            lo[present] = mn[present]
            hi[present] = mx[present]

    if bound_mode == ANALYTIC:
        kk = np.arange(K)
        nu_lo = (2.0 * kk / K - 1.0) * nu_u
        nu_hi = (2.0 * (kk + 1) / K - 1.0) * nu_u
        if delay_law is not None:
            tau_lo, tau_hi = delay_law.cell_bounds(K)
            present = np.ones(K, bool)
    return OffsetBounds(tau_lo, tau_hi, nu_lo, nu_hi, present, bound_mode, nu_u)


def make_sync_plan(bounds: OffsetBounds, mode: str = PER_BEAM) -> SyncPlan:
    _check_mode(mode, (JOINT, PER_BEAM), "sync mode")
    if mode == JOINT:
        return SyncPlan(JOINT, bounds.tau_min, (bounds.nu_min + bounds.nu_max) / 2.0)
    p = bounds.present
    tau = np.where(p, bounds.tau_min_s, 0.0)
    nu = np.where(p, (bounds.nu_min_hz + bounds.nu_max_hz) / 2.0, 0.0)
    return SyncPlan(PER_BEAM, tau, nu)


def spreads(bounds: OffsetBounds, mode: str = PER_BEAM) -> SpreadReport:
    """Effective delay and Doppler spreads left after synchronization."""
    _check_mode(mode, (JOINT, PER_BEAM), "sync mode")
    p = bounds.present
    d = bounds.nu_defined
    if mode == JOINT:
        d_tau = bounds.tau_max - bounds.tau_min
        d_nu = (bounds.nu_max - bounds.nu_min) / 2.0
    else:
        d_tau = float(np.max(bounds.tau_max_s[p] - bounds.tau_min_s[p])) if p.any() else 0.0
        d_nu = float(np.max((bounds.nu_max_hz[d] - bounds.nu_min_hz[d]) / 2.0)) if d.any() else 0.0
    return SpreadReport(float(d_tau), float(d_nu), mode, bounds.bound_mode)


def one_ring_rays(radius_m: float, num_rays: int, aod_center: float = 0.0,
                  aod_spread: float = np.deg2rad(2.0), rng_seed=0) -> RaySet:
    """Equal-power rays from a scatterer ring around the UT.

    AoAs are uniform over [-pi/2, pi/2]; AoDs are uniform within
    ``aod_center +- aod_spread`` (clipped to the valid range).
    """
    if radius_m <= 0:
        raise DomainError("ring radius must be positive")
    if num_rays < 1:
        raise DomainError("num_rays must be positive")
    rng = np.random.default_rng(rng_seed)
    aoa = rng.uniform(-np.pi / 2, np.pi / 2, num_rays)
    aod = np.clip(aod_center + rng.uniform(-aod_spread, aod_spread, num_rays), -np.pi / 2, np.pi / 2)
    delay = OneRingDelay(radius_m)(aoa)
    power = np.full(num_rays, 1.0 / num_rays)
    return RaySet(power, aoa, aod, delay,
                  rng.uniform(0, 2 * np.pi, num_rays), rng.uniform(0, 2 * np.pi, num_rays))


def _effective_gains(rays: RaySet, profile: UtProfile, plan: SyncPlan, n: int,
                     ofdm: OfdmConfig, K: int, phase: np.ndarray):
    if plan.mode != PER_BEAM:
        raise SyncModeError("effective channels require a per-beam plan")
    if not 0 <= n < ofdm.num_subcarriers:
        raise DomainError("subcarrier index out of range")
    tau_syn, nu_syn = plan.per_beam(K)
    k = beam_index_of(rays.aoa, K)
    ts, vs = tau_syn[k], nu_syn[k]
    nu = profile.max_doppler_hz * np.sin(rays.aoa)
    return (np.sqrt(rays.power) * np.exp(1j * phase)
            * np.exp(2j * np.pi * ts * (nu - vs))
            * np.exp(-2j * np.pi * (n / ofdm.symbol_duration_s) * (rays.delay - ts)))


def effective_channel_dl(rays: RaySet, profile: UtProfile, plan: SyncPlan, n: int,
                         ofdm: OfdmConfig, cfg: ArrayConfig) -> BeamChannel:
    """K x M effective DL beam channel on subcarrier ``n`` after PBS."""
    out = np.zeros((cfg.K, cfg.M), complex)
    if len(rays):
        g = _effective_gains(rays, profile, plan, n, ofdm, cfg.K, rays.phase_dl)
        k, m = cell_indices(rays, cfg)
        np.add.at(out, (k, m), g)
    elif plan.mode != PER_BEAM:
        raise SyncModeError("effective channels require a per-beam plan")
    return BeamChannel(out, 0.0, n, "dl")


def effective_channel_ul(rays: RaySet, profile: UtProfile, plan: SyncPlan, n: int,
                         ofdm: OfdmConfig, cfg: ArrayConfig) -> BeamChannel:
    """M x K effective UL beam channel; PBS is applied per UT transmit beam."""
    out = np.zeros((cfg.M, cfg.K), complex)
    if len(rays):
        g = _effective_gains(rays, profile, plan, n, ofdm, cfg.K, rays.phase_ul)
        k, m = cell_indices(rays, cfg)
        np.add.at(out, (m, k), g)
    elif plan.mode != PER_BEAM:
        raise SyncModeError("effective channels require a per-beam plan")
    return BeamChannel(out, 0.0, n, "ul")
