"""Time-domain OFDM link simulation through the ray channel.

A frame is one pilot OFDM symbol followed by six QPSK data symbols per
scheduled BS beam.  The waveform passes through the ray channel (nearest-sample
delays, continuous Doppler ramp), then joint or per-beam synchronization, DFT
demodulation, least-squares estimation from comb pilots with linear
interpolation, per-subcarrier zero-forcing and hard QPSK decisions.

Sample ``i`` of a waveform sits at absolute time ``i * T_s``; the first sample
is the start of the pilot's cyclic prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ArrayConfig, RaySet, UtProfile, cell_indices
from .scheduling import BeamAssignment, trial_rng
from .sync import (
    ANALYTIC,
    JOINT,
    PER_BEAM,
    OfdmConfig,
    SyncPlan,
    make_sync_plan,
    offset_bounds,
)

NUM_DATA_SYMBOLS = 6
_QPSK_SCALE = 1.0 / np.sqrt(2.0)


class EmptyLinkError(ValueError):
    """No beams scheduled on one side of the link."""


# --- QPSK --------------------------------------------------------------------


def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped unit-magnitude QPSK; bit pairs are (real, imag), 0 -> +."""
    b = np.asarray(bits, np.int8).reshape(-1, 2)
    return _QPSK_SCALE * ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1]))


def qpsk_demodulate(symbols: np.ndarray) -> np.ndarray:
    s = np.asarray(symbols).ravel()
    return np.stack([s.real < 0, s.imag < 0], axis=1).astype(np.int8).ravel()


# --- frames and waveforms ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class OfdmFrame:
    """Pilot plus data symbols for the scheduled transmit beams.

    ``pilot_symbol`` is ``(B, N)`` and ``data_symbols`` is ``(S, B, N)``.
    Beam ``j`` (position in ``beams``) carries its pilots on subcarriers
    ``n = j mod B`` and zeros elsewhere.  ``data_gain`` scales the data
    symbols at modulation so the total data power matches the pilot power.
    """

    pilot_symbol: np.ndarray
    data_symbols: np.ndarray
    beams: tuple[int, ...]
    data_bits: np.ndarray = field(default=None, repr=False)
    data_gain: float = 1.0

    @property
    def num_beams(self) -> int:
        return len(self.beams)

    @property
    def num_subcarriers(self) -> int:
        return self.pilot_symbol.shape[1]

    def pilot_mask(self) -> np.ndarray:
        """Boolean ``(B, N)`` comb layout."""
        B, N = self.pilot_symbol.shape
        return (np.arange(N)[None, :] % B) == np.arange(B)[:, None]

    def symbols(self) -> np.ndarray:
        """All OFDM symbols ``(1 + S, B, N)`` as transmitted."""
        return np.concatenate([self.pilot_symbol[None], self.data_gain * self.data_symbols])

    @classmethod
    def random(cls, beams, num_subcarriers: int, rng: np.random.Generator,
               num_data_symbols: int = NUM_DATA_SYMBOLS) -> "OfdmFrame":
        beams = tuple(int(b) for b in beams)
        B, N = len(beams), int(num_subcarriers)
        if B == 0:
            raise EmptyLinkError("frame needs at least one beam")
        bits = rng.integers(0, 2, size=(num_data_symbols, B, N, 2), dtype=np.int8)
        data = qpsk_modulate(bits).reshape(num_data_symbols, B, N)
        pilot_bits = rng.integers(0, 2, size=(B, N, 2), dtype=np.int8)
        pilot = qpsk_modulate(pilot_bits).reshape(B, N)
        comb = (np.arange(N)[None, :] % B) == np.arange(B)[:, None]
        return cls(np.where(comb, pilot, 0), data, beams, bits, 1.0 / np.sqrt(B))


@dataclass(frozen=True, eq=False)
class Waveform:
    """Baseband samples ``(num_beams, length)`` labelled by beam index."""

    samples: np.ndarray
    beams: tuple[int, ...]
    num_symbols: int
    sample_interval_s: float

    def select(self, beams) -> "Waveform":
        pos = {b: i for i, b in enumerate(self.beams)}
        beams = tuple(int(b) for b in beams)
        return Waveform(self.samples[[pos[b] for b in beams]], beams, self.num_symbols,
                        self.sample_interval_s)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))


@dataclass(frozen=True)
class LinkMetrics:
    evm_rms: float
    sinr_db: np.ndarray
    ber: float
    sync_mode: str
    num_bits: int = 0
    pilot_overhead: float = 1.0 / (1 + NUM_DATA_SYMBOLS)

    @property
    def mean_sinr_db(self) -> float:
        return float(np.mean(self.sinr_db))


# --- modulation --------------------------------------------------------------


def ofdm_modulate(frame: OfdmFrame, ofdm: OfdmConfig) -> Waveform:
    """CP-OFDM: ``x(i T_s) = sum_n X_n exp(j 2 pi n i / N)`` with cyclic prefix."""
    N, cp = ofdm.num_subcarriers, ofdm.cp_samples
    X = frame.symbols()
    if X.shape[-1] != N:
        raise ValueError(f"frame has {X.shape[-1]} subcarriers, config has {N}")
    body = np.fft.ifft(X, axis=-1) * N  # (S, B, N)
    sym = np.concatenate([body[..., N - cp:], body], axis=-1)
    samples = np.transpose(sym, (1, 0, 2)).reshape(frame.num_beams, -1)
    return Waveform(samples, frame.beams, X.shape[0], ofdm.sample_interval_s)


def ofdm_demodulate(waveform: Waveform, ofdm: OfdmConfig) -> np.ndarray:
    """Per-beam, per-symbol subcarrier values ``(num_beams, num_symbols, N)``."""
    N, cp = ofdm.num_subcarriers, ofdm.cp_samples
    L = ofdm.samples_per_symbol
    S = waveform.num_symbols
    x = waveform.samples
    need = S * L
    if x.shape[1] < need:
        x = np.pad(x, ((0, 0), (0, need - x.shape[1])))
    blocks = x[:, :need].reshape(x.shape[0], S, L)[..., cp:]
    return np.fft.fft(blocks, axis=-1) / N


# --- channel and sync --------------------------------------------------------


def channel_apply_dl(waveform: Waveform, rays: RaySet, profile: UtProfile, ofdm: OfdmConfig,
                     cfg: ArrayConfig) -> Waveform:
    """Receive waveforms on all ``K`` UT beams.

    Each ray maps the transmit beam of its AoD cell onto the receive beam of
    its AoA cell with gain ``sqrt(p) exp(j phase_dl)``, a delay rounded to
    the nearest sample and the phase ramp ``exp(j 2 pi nu t)``.
    """
    Ts = ofdm.sample_interval_s
    L = waveform.samples.shape[1]
    d = np.rint(rays.delay / Ts).astype(int) if len(rays) else np.zeros(0, int)
    out = np.zeros((cfg.K, L + (int(d.max()) if d.size else 0)), complex)
    pos = {b: i for i, b in enumerate(waveform.beams)}
    k, m = cell_indices(rays, cfg) if len(rays) else (d, d)
    nu = profile.max_doppler_hz * np.sin(rays.aoa)
    gain = np.sqrt(rays.power) * np.exp(1j * rays.phase_dl)
    for r in range(len(rays)):
        j = pos.get(int(m[r]))
        if j is None:
            continue
        t = (d[r] + np.arange(L)) * Ts
        out[k[r], d[r]:d[r] + L] += gain[r] * np.exp(2j * np.pi * nu[r] * t) * waveform.samples[j]
    return Waveform(out, tuple(range(cfg.K)), waveform.num_symbols, Ts)


def apply_sync(received: Waveform, plan: SyncPlan) -> Waveform:
    """Shift each beam by its time adjustment and remove its frequency adjustment.

    ``output[i] = input[i + s] exp(-j 2 pi (i + s) T_s nu_syn)`` with
    ``s = round(tau_syn / T_s)``.  Per-beam plans are indexed by the beam
    labels of ``received``.
    """
    Ts = received.sample_interval_s
    if plan.mode == PER_BEAM:
        K = np.asarray(plan.tau_syn_s).size
    else:
        K = max(received.beams, default=-1) + 1
    tau, nu = plan.per_beam(K)
    x = received.samples
    L = x.shape[1]
    out = np.zeros_like(x)
    for i, b in enumerate(received.beams):
        s = int(np.rint(tau[b] / Ts))
        n = max(L - s, 0)
        t = (s + np.arange(n)) * Ts
        out[i, :n] = x[i, s:s + n] * np.exp(-2j * np.pi * nu[b] * t)
    return Waveform(out, received.beams, received.num_symbols, Ts)


# --- receiver ----------------------------------------------------------------


def estimate_channel(pilot_rx: np.ndarray, frame: OfdmFrame) -> np.ndarray:
    """LS comb estimates, linearly interpolated to all subcarriers; returns ``(N, R, B)``.

    Real and imaginary parts are interpolated separately; subcarriers beyond
    the outermost pilots hold the nearest pilot estimate.
    """
    R, N = pilot_rx.shape
    B = frame.num_beams
    H = np.zeros((N, R, B), complex)
    n = np.arange(N)
    for j in range(B):
        comb = np.arange(j, N, B)
        ls = pilot_rx[:, comb] / frame.pilot_symbol[j, comb]
        for r in range(R):
            H[:, r, j] = np.interp(n, comb, ls[r].real) + 1j * np.interp(n, comb, ls[r].imag)
    return H


def zf_equalize(Y: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Zero-forcing per subcarrier: ``Y (R, S, N)``, ``H (N, R, B)`` -> ``(S, B, N)``."""
    W = np.linalg.pinv(H)  # (N, B, R)
    return np.einsum("nbr,rsn->sbn", W, Y)


def _sinr_db(err_pow: np.ndarray, sig_pow: np.ndarray) -> np.ndarray:
    tiny = np.finfo(float).tiny
    return 10.0 * np.log10(np.maximum(sig_pow, tiny) / np.maximum(err_pow, tiny))


def run_link(rays: RaySet, profile: UtProfile, plan_mode: str, assignment: BeamAssignment,
             ofdm: OfdmConfig, cfg: ArrayConfig, noise_power: float = 0.0, rng_seed=0, *,
             ut: int = 0, bound_mode: str = ANALYTIC, num_frames: int = 1) -> LinkMetrics:
    """Simulate ``num_frames`` DL frames to UT ``ut`` and report EVM, SINR and BER.

    The UT's scheduled BS beams each carry one stream; its scheduled receive
    beams feed a per-subcarrier zero-forcing detector.  Sync parameters come
    from the rays (``bound_mode`` selects the frequency bounds).  Frames use
    independent substreams of ``rng_seed``.
    """
    tx = assignment.bs_beams[ut]
    rx = assignment.ut_beams[ut]
    if not tx or not rx:
        raise EmptyLinkError("no scheduled beams for this UT")
    if plan_mode not in (JOINT, PER_BEAM):
        raise ValueError(f"unknown sync mode {plan_mode!r}")
    plan = make_sync_plan(offset_bounds(rays, profile, cfg.K, bound_mode), plan_mode)
    N = ofdm.num_subcarriers
    err_pow = np.zeros(N)
    sig_pow = np.zeros(N)
    bit_errors = num_bits = 0
    for f in range(num_frames):
        rng = trial_rng(rng_seed, f)
        frame = OfdmFrame.random(tx, N, rng)
        received = channel_apply_dl(ofdm_modulate(frame, ofdm), rays, profile, ofdm, cfg).select(rx)
        if noise_power > 0:
            x = received.samples
            noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
            received = Waveform(x + np.sqrt(noise_power / 2.0) * noise, received.beams,
                                received.num_symbols, received.sample_interval_s)
        Y = ofdm_demodulate(apply_sync(received, plan), ofdm)
        H = estimate_channel(Y[:, 0, :], frame)
        X_hat = zf_equalize(Y[:, 1:, :], H) / frame.data_gain
        err = np.abs(X_hat - frame.data_symbols) ** 2
        err_pow += err.sum(axis=(0, 1))
        sig_pow += (np.abs(frame.data_symbols) ** 2).sum(axis=(0, 1))
        bits = qpsk_demodulate(X_hat)
        bit_errors += int(np.count_nonzero(bits != frame.data_bits.ravel()))
        num_bits += bits.size
    evm = float(np.sqrt(err_pow.sum() / sig_pow.sum()))
    return LinkMetrics(evm, _sinr_db(err_pow, sig_pow), bit_errors / num_bits, plan_mode, num_bits)
