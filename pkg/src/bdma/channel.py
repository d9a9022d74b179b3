"""Ray-based massive MIMO channel and its beam-domain representation.

A :class:`RaySet` is a finite set of propagation paths (power, AoA, AoD, delay
and independent DL/UL phases); every channel in the package is a finite sum
over one.  Both arrays are half-wavelength ULAs, the UT with ``K`` elements
and the BS with ``M`` elements.  Beam ``k`` of an ``N``-element array covers
the angle cell ``[phi_k, phi_{k+1})`` with ``phi_k = arcsin(2k/N - 1)``; the
last cell is closed on the right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

_ANGLE_EPS = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside its mathematical domain."""


def _check_angles(angles, name: str = "angle") -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    if np.any(~np.isfinite(angles)) or np.any(np.abs(angles) > np.pi / 2 + _ANGLE_EPS):
        raise DomainError(f"{name} must lie in [-pi/2, pi/2]")
    return angles


def _check_positive_int(n, name: str) -> int:
    if int(n) != n or n < 1:
        raise DomainError(f"{name} must be a positive integer, got {n!r}")
    return int(n)


@dataclass(frozen=True)
class ArrayConfig:
    """Antenna counts at the base station (``M``) and the user terminal (``K``)."""

    num_bs_antennas: int
    num_ut_antennas: int

    def __post_init__(self):
        _check_positive_int(self.num_bs_antennas, "num_bs_antennas")
        _check_positive_int(self.num_ut_antennas, "num_ut_antennas")

    @property
    def M(self) -> int:
        return self.num_bs_antennas

    @property
    def K(self) -> int:
        return self.num_ut_antennas


@dataclass(frozen=True)
class Ray:
    power: float
    aoa: float
    aod: float
    delay: float
    phase_dl: float = 0.0
    phase_ul: float = 0.0


@dataclass(frozen=True, eq=False)
class RaySet:
    """Column-oriented, immutable collection of rays."""

    power: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray
    delay: np.ndarray
    phase_dl: np.ndarray
    phase_ul: np.ndarray

    def __post_init__(self):
        cols = {}
        for name in ("power", "aoa", "aod", "delay", "phase_dl", "phase_ul"):
            col = np.array(getattr(self, name), dtype=float).reshape(-1)
            col.setflags(write=False)
            cols[name] = col
            object.__setattr__(self, name, col)
        sizes = {c.size for c in cols.values()}
        if len(sizes) > 1:
            raise ValueError("ray columns must have equal length")
        _check_angles(cols["aoa"], "aoa")
        _check_angles(cols["aod"], "aod")
        if np.any(cols["power"] < 0) or np.any(cols["delay"] < 0):
            raise DomainError("ray powers and delays must be nonnegative")
        for name in ("power", "delay", "phase_dl", "phase_ul"):
            if not np.all(np.isfinite(cols[name])):
                raise DomainError(f"{name} must be finite")

    @classmethod
    def empty(cls) -> "RaySet":
        z = np.zeros(0)
        return cls(z, z, z, z, z, z)

    @classmethod
    def from_rays(cls, rays: Iterable[Ray]) -> "RaySet":
        rays = list(rays)
        if not rays:
            return cls.empty()
        return cls(*(np.array([getattr(r, f) for r in rays]) for f in
                     ("power", "aoa", "aod", "delay", "phase_dl", "phase_ul")))

    def __len__(self) -> int:
        return self.power.size

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> Ray:
        return Ray(float(self.power[i]), float(self.aoa[i]), float(self.aod[i]),
                   float(self.delay[i]), float(self.phase_dl[i]), float(self.phase_ul[i]))

    @property
    def total_power(self) -> float:
        return float(self.power.sum())

    def with_phases(self, phase_dl=None, phase_ul=None) -> "RaySet":
        return replace(
            self,
            phase_dl=self.phase_dl if phase_dl is None else phase_dl,
            phase_ul=self.phase_ul if phase_ul is None else phase_ul,
        )

    def redraw_phases(self, rng: np.random.Generator) -> "RaySet":
        n = len(self)
        return self.with_phases(rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n))

    def concat(self, other: "RaySet") -> "RaySet":
        return RaySet(*(np.concatenate([getattr(self, f), getattr(other, f)]) for f in
                        ("power", "aoa", "aod", "delay", "phase_dl", "phase_ul")))

    def to_json(self) -> str:
        return json.dumps([
            {"power": r.power, "aoa": r.aoa, "aod": r.aod, "delay_s": r.delay,
             "phase_dl": r.phase_dl, "phase_ul": r.phase_ul}
            for r in self
        ])

    @classmethod
    def from_json(cls, text: str) -> "RaySet":
        items = json.loads(text)
        return cls.from_rays(
            Ray(d["power"], d["aoa"], d["aod"], d["delay_s"], d["phase_dl"], d["phase_ul"])
            for d in items
        )


@dataclass(frozen=True)
class UtProfile:
    """Per-UT propagation description: rays plus carrier and velocity."""

    rays: RaySet
    carrier_freq_hz: float
    velocity_mps: float = 0.0
    max_doppler_hz: float = field(default=None)

    def __post_init__(self):
        if self.carrier_freq_hz <= 0:
            raise DomainError("carrier frequency must be positive")
        if self.velocity_mps < 0:
            raise DomainError("velocity must be nonnegative")
        expected = self.carrier_freq_hz * self.velocity_mps / SPEED_OF_LIGHT
        if self.max_doppler_hz is None:
            object.__setattr__(self, "max_doppler_hz", expected)
        elif not np.isclose(self.max_doppler_hz, expected, rtol=1e-9, atol=0.0):
            raise DomainError("max_doppler_hz must equal f_c * v / c")

    @classmethod
    def from_doppler(cls, rays: RaySet, carrier_freq_hz: float, max_doppler_hz: float) -> "UtProfile":
        """Build a profile whose velocity reproduces ``max_doppler_hz``."""
        v = max_doppler_hz * SPEED_OF_LIGHT / carrier_freq_hz
        return cls(rays, carrier_freq_hz, v)

    def with_rays(self, rays: RaySet) -> "UtProfile":
        return replace(self, rays=rays)


# --- geometry ---------------------------------------------------------------


def steering_bs(aod: float, M: int) -> np.ndarray:
    """BS array response ``exp(-j*pi*b*sin(aod))``, ``b = 0..M-1``."""
    aod = float(_check_angles(aod, "aod"))
    M = _check_positive_int(M, "M")
    return np.exp(-1j * np.pi * np.arange(M) * np.sin(aod))


def steering_ut(aoa: float, K: int) -> np.ndarray:
    """UT array response ``exp(-j*pi*k*sin(aoa))``, ``k = 0..K-1``."""
    aoa = float(_check_angles(aoa, "aoa"))
    K = _check_positive_int(K, "K")
    return np.exp(-1j * np.pi * np.arange(K) * np.sin(aoa))


def _steering_matrix(angles: np.ndarray, n: int) -> np.ndarray:
    # one column per angle
    return np.exp(-1j * np.pi * np.arange(n)[:, None] * np.sin(angles)[None, :])


def doppler_of(aoa, profile: UtProfile):
    """Doppler shift of a path arriving at ``aoa`` (Clarke-Jakes, motion along the array)."""
    aoa = _check_angles(aoa, "aoa")
    out = profile.max_doppler_hz * np.sin(aoa)
    return float(out) if out.ndim == 0 else out


def beam_grid(N: int) -> np.ndarray:
    """Boundaries ``arcsin(2i/N - 1)``, ``i = 0..N``, of the beam cells."""
    N = _check_positive_int(N, "N")
    return np.arcsin(np.clip(2.0 * np.arange(N + 1) / N - 1.0, -1.0, 1.0))


def beam_index_of(angle, N: int):
    """Index of the beam cell containing ``angle``.

    Cells are half-open ``[phi_k, phi_{k+1})`` except the last, which also
    contains ``pi/2``.  Accepts scalars or arrays.
    """
    angle = _check_angles(angle)
    N = _check_positive_int(N, "N")
    # tolerance keeps grid points computed through arcsin in their own cell
    idx = np.floor((np.sin(angle) + 1.0) * N / 2.0 + 1e-9).astype(int)
    idx = np.clip(idx, 0, N - 1)
    return int(idx) if idx.ndim == 0 else idx


def cell_indices(rays: RaySet, cfg: ArrayConfig) -> tuple[np.ndarray, np.ndarray]:
    """(UT beam, BS beam) cell of every ray."""
    if len(rays) == 0:
        return np.zeros(0, int), np.zeros(0, int)
    return beam_index_of(rays.aoa, cfg.K), beam_index_of(rays.aod, cfg.M)


@dataclass(frozen=True, eq=False)
class DftBeamformer:
    """Unitary DFT matrix ``V[i, j] = exp(-j*2*pi*i*(j - N/2)/N) / sqrt(N)``."""

    dimension: int
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = _check_positive_int(self.dimension, "dimension")
        i = np.arange(n)[:, None]
        j = np.arange(n)[None, :]
        mat = np.exp(-2j * np.pi * i * (j - n / 2) / n) / np.sqrt(n)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)


def dft_matrix(N: int) -> np.ndarray:
    return DftBeamformer(N).matrix


@dataclass(frozen=True, eq=False)
class BeamChannel:
    """Beam-domain channel matrix at one (time, frequency) point.

    ``entries`` is K x M for the downlink and M x K for the uplink; ``freq_hz``
    holds a subcarrier index when produced by the synchronization module.
    """

    entries: np.ndarray
    time_s: float = 0.0
    freq_hz: float = 0.0
    link: str = "dl"

    def __post_init__(self):
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("beam channel entries must be finite")

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True, eq=False)
class PowerMatrix:
    """K x M matrix of average beam-pair powers."""

    omega: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if omega.ndim != 2 or np.any(omega < 0):
            raise ValueError("power matrix must be a nonnegative 2-D array")
        object.__setattr__(self, "omega", omega)

    @property
    def total(self) -> float:
        return float(self.omega.sum())


# --- channel construction -------------------------------------------------


def _ray_gains(rays: RaySet, profile: UtProfile, t: float, f: float, phase: np.ndarray) -> np.ndarray:
    nu = profile.max_doppler_hz * np.sin(rays.aoa)
    return np.sqrt(rays.power) * np.exp(1j * phase) * np.exp(2j * np.pi * (t * nu - f * rays.delay))


def space_channel_dl(rays: RaySet, profile: UtProfile, t: float, f: float, cfg: ArrayConfig) -> np.ndarray:
    """K x M space-domain DL frequency response at time ``t`` and frequency ``f``."""
    if len(rays) == 0:
        return np.zeros((cfg.K, cfg.M), complex)
    g = _ray_gains(rays, profile, t, f, rays.phase_dl)
    a_ut = _steering_matrix(rays.aoa, cfg.K)
    a_bs = _steering_matrix(rays.aod, cfg.M)
    return (a_ut * g) @ a_bs.T


def beam_channel_exact(rays: RaySet, profile: UtProfile, t: float, f: float, cfg: ArrayConfig,
                       normalize: bool = False) -> BeamChannel:
    """DFT-transformed DL channel ``V_K^H G V_M^*``.

    With ``normalize=True`` the result is divided by ``sqrt(K*M)`` so that a
    ray lying exactly on a beam grid point appears with amplitude ``sqrt(power)``,
    the scale used by the cell approximation.
    """
    g = space_channel_dl(rays, profile, t, f, cfg)
    vk = dft_matrix(cfg.K)
    vm = dft_matrix(cfg.M)
    out = vk.conj().T @ g @ vm.conj()
    if normalize:
        out = out / np.sqrt(cfg.K * cfg.M)
    return BeamChannel(out, t, f, "dl")


def _bin_cells(values: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> np.ndarray:
    flat = rows * shape[1] + cols
    n = shape[0] * shape[1]
    if np.iscomplexobj(values):
        out = (np.bincount(flat, values.real, minlength=n)
               + 1j * np.bincount(flat, values.imag, minlength=n))
    else:
        out = np.bincount(flat, values, minlength=n).astype(float)
    return out.reshape(shape)


def beam_channel_approx_dl(rays: RaySet, profile: UtProfile, t: float, f: float,
                           cfg: ArrayConfig) -> BeamChannel:
    """Cell-sum approximation of the DL beam channel (K x M)."""
    if len(rays) == 0:
        return BeamChannel(np.zeros((cfg.K, cfg.M), complex), t, f, "dl")
    k, m = cell_indices(rays, cfg)
    g = _ray_gains(rays, profile, t, f, rays.phase_dl)
    return BeamChannel(_bin_cells(g, k, m, (cfg.K, cfg.M)), t, f, "dl")


def beam_channel_approx_ul(rays: RaySet, profile: UtProfile, t: float, f: float,
                           cfg: ArrayConfig) -> BeamChannel:
    """Cell-sum approximation of the UL beam channel (M x K), UL phases."""
    if len(rays) == 0:
        return BeamChannel(np.zeros((cfg.M, cfg.K), complex), t, f, "ul")
    k, m = cell_indices(rays, cfg)
    g = _ray_gains(rays, profile, t, f, rays.phase_ul)
    return BeamChannel(_bin_cells(g, m, k, (cfg.M, cfg.K)), t, f, "ul")


def power_matrix(rays: RaySet, cfg: ArrayConfig) -> PowerMatrix:
    if len(rays) == 0:
        return PowerMatrix(np.zeros((cfg.K, cfg.M)))
    k, m = cell_indices(rays, cfg)
    return PowerMatrix(_bin_cells(rays.power, k, m, (cfg.K, cfg.M)))


def beam_norms(omega: PowerMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Average squared norms of each BS beam (column sums) and UT beam (row sums)."""
    return omega.omega.sum(axis=0), omega.omega.sum(axis=1)


def sample_beam_channels_dl(rays: RaySet, cfg: ArrayConfig, rng: np.random.Generator,
                            num_trials: int) -> np.ndarray:
    """``num_trials`` approximation-model DL channels with fresh uniform phases.

    Returns an array of shape (num_trials, K, M).  Deterministic phase factors
    (Doppler, delay, synchronization) are absorbed by the uniform phases, so the
    result has the statistics of the effective channel at any subcarrier.
    """
    out = np.zeros((num_trials, cfg.K, cfg.M), complex)
    if len(rays) == 0:
        return out
    k, m = cell_indices(rays, cfg)
    phases = rng.uniform(0.0, 2 * np.pi, size=(num_trials, len(rays)))
    amp = np.sqrt(rays.power) * np.exp(1j * phases)
    flat = out.reshape(num_trials, -1)
    np.add.at(flat, (slice(None), k * cfg.M + m), amp)
    return out


def envelope_relative_std(entries: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Power-weighted mean over entries of std(|h|)/mean(|h|) across a grid.

    ``entries`` has the grid axes first and the matrix axes last, e.g. shape
    (T, F, K, M).  Entries with zero mean envelope are skipped.
    """
    mats = entries.reshape(-1, *entries.shape[-2:])
    env = np.abs(mats)
    mean = env.mean(axis=0)
    std = env.std(axis=0)
    power = (env ** 2).mean(axis=0) if weights is None else np.asarray(weights, float)
    mask = mean > 0
    if not np.any(mask) or power[mask].sum() == 0:
        return 0.0
    rel = std[mask] / mean[mask]
    return float(np.sum(power[mask] * rel) / power[mask].sum())


def expected_exact_power(rays: RaySet, cfg: ArrayConfig) -> np.ndarray:
    """E|normalized exact beam entry|^2 over independent ray phases.

    Each ray spreads its power over the beams through the normalized Dirichlet
    kernel; with independent phases the powers add.
    """
    def kernel(angles, n):
        # |V_N^H a(angle)|^2 / N for every beam, rows = beams
        a = _steering_matrix(angles, n)
        return np.abs(dft_matrix(n).conj().T @ a) ** 2 / n

    if len(rays) == 0:
        return np.zeros((cfg.K, cfg.M))
    pk = kernel(rays.aoa, cfg.K)
    pm = kernel(rays.aod, cfg.M)
    return (pk * rays.power) @ pm.T
