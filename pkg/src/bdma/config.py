"""Scenario configuration: presets, a flat ``key = value`` file format and hashing."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .channel import SPEED_OF_LIGHT, ArrayConfig
from .sync import ANALYTIC, EMPIRICAL, OfdmConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    carrier_freq_hz: float = 30e9
    M: int = 32
    K: int = 8
    num_uts: int = 4
    bandwidth_hz: float = 100e6
    num_subcarriers: int = 2048
    cp_samples: int = 144
    sample_interval_s: float = 6.51e-9
    num_clusters: int = 4
    subpaths_per_cluster: int = 20
    delay_spread_s: float = 1388.4e-9
    angle_spread_rad: float = float(np.deg2rad(2.0))
    aod_sector_rad: float = float(np.pi / 3)
    cluster_decay_db: float = 3.0
    velocity_mps: float = 30.0
    snr_grid_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    rate_trials: int = 200
    report_trials: int = 2000
    prop_trials: int = 10_000
    ring_rays: int = 100_000
    ring_radius_m: float = 50.0
    link_frames: int = 5
    link_streams: int = 1
    bs_beams_per_ut: int = 4
    ut_beams_per_ut: int = 4
    total_bs_beams: int = 16
    bound_mode: str = ANALYTIC
    master_seed: int = 0
    # declared assumptions, reported with every result
    assumptions: tuple[str, ...] = field(default=(
        "cluster powers decay by cluster_decay_db per cluster",
        "equal subpath powers within a cluster",
        "Laplacian angle offsets clipped to the valid range",
    ), compare=False)

    def __post_init__(self):
        counts = ("M", "K", "num_uts", "num_subcarriers", "num_clusters", "subpaths_per_cluster",
                  "rate_trials", "report_trials", "prop_trials", "ring_rays", "link_frames", "link_streams")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("carrier_freq_hz", "bandwidth_hz", "sample_interval_s", "ring_radius_m"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.cp_samples < 0 or self.velocity_mps < 0 or self.delay_spread_s < 0:
            raise ConfigError("cp_samples, velocity_mps and delay_spread_s must be nonnegative")
        if min(self.bs_beams_per_ut, self.ut_beams_per_ut, self.total_bs_beams) < 0:
            raise ConfigError("beam limits must be nonnegative")
        if not self.snr_grid_db:
            raise ConfigError("snr_grid_db must be non-empty")
        if self.bound_mode not in (ANALYTIC, EMPIRICAL):
            raise ConfigError(f"bound_mode must be {ANALYTIC!r} or {EMPIRICAL!r}")

    @property
    def array(self) -> ArrayConfig:
        return ArrayConfig(self.M, self.K)

    @property
    def ofdm(self) -> OfdmConfig:
        return OfdmConfig(self.num_subcarriers, self.cp_samples, self.sample_interval_s)

    @property
    def max_doppler_hz(self) -> float:
        return self.carrier_freq_hz * self.velocity_mps / SPEED_OF_LIGHT

    def with_overrides(self, **kw) -> "ScenarioConfig":
        unknown = set(kw) - _FIELD_TYPES.keys()
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **{k: _coerce(k, v) for k, v in kw.items()})

    def to_text(self) -> str:
        """Canonical ``key = value`` serialization (parseable by :func:`parse_config`)."""
        lines = []
        for f in fields(self):
            if f.name == "assumptions":
                continue
            v = getattr(self, f.name)
            text = ", ".join(repr(float(x)) for x in v) if isinstance(v, tuple) else repr(v).strip("'")
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_grid_db"] = list(self.snr_grid_db)
        d["assumptions"] = list(self.assumptions)
        return d


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig) if f.name != "assumptions"}


def _coerce(key: str, value):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            f = float(str(value).replace("_", ""))
            if f != int(f):
                raise ValueError
            return int(f)
        if kind == "float":
            return float(value)
        if kind.startswith("tuple"):
            items = value.split(",") if isinstance(value, str) else value
            return tuple(float(x) for x in items if str(x).strip())
        return str(value).strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def _mobility_velocity(carrier_freq_hz: float, ofdm: OfdmConfig, doppler_x_symbol: float = 0.5) -> float:
    return doppler_x_symbol / ofdm.symbol_duration_s * SPEED_OF_LIGHT / carrier_freq_hz


PRESETS: dict[str, ScenarioConfig] = {
    "30ghz": ScenarioConfig(carrier_freq_hz=30e9, M=128, K=32, num_uts=20, total_bs_beams=128),
    "300ghz": ScenarioConfig(carrier_freq_hz=300e9, M=256, K=128, num_uts=20, total_bs_beams=256),
    "desk": ScenarioConfig(),
    "mobility": ScenarioConfig(carrier_freq_hz=30e9, M=128, K=32, num_uts=1,
                               velocity_mps=_mobility_velocity(30e9, OfdmConfig(2048, 144, 6.51e-9))),
    "static": ScenarioConfig(carrier_freq_hz=30e9, M=128, K=32, num_uts=1, velocity_mps=0.0),
}


def parse_config(text: str) -> ScenarioConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, ``preset`` selects the base."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    base = pairs.pop("preset", "desk")
    if base not in PRESETS:
        raise ConfigError(f"unknown preset {base!r}; choose from {sorted(PRESETS)}")
    return PRESETS[base].with_overrides(**pairs)


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> ScenarioConfig:
    cfg = parse_config(Path(path).read_text()) if path else PRESETS["desk"]
    return cfg.with_overrides(**(overrides or {}))
