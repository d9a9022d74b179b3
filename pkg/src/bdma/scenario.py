"""Seeded clustered-ray scenarios and UT drops."""

from __future__ import annotations

import numpy as np

from .channel import ArrayConfig, RaySet, UtProfile, power_matrix
from .config import ScenarioConfig
from .scheduling import BeamAssignment, trial_rng


def rms_delay_spread(rays: RaySet) -> float:
    """Power-weighted RMS delay spread in seconds."""
    p = rays.power / rays.power.sum()
    mean = np.sum(p * rays.delay)
    return float(np.sqrt(max(np.sum(p * rays.delay ** 2) - mean ** 2, 0.0)))


def cluster_powers(num_clusters: int, decay_db: float) -> np.ndarray:
    p = 10.0 ** (-decay_db / 10.0 * np.arange(num_clusters))
    return p / p.sum()


def generate_cluster_rays(config: ScenarioConfig, ut_index: int, rng_seed) -> RaySet:
    """Clustered rays for one UT.

    Cluster delays are exponential draws, sorted and shifted so the first
    cluster arrives at zero, then scaled so the RMS delay spread equals the
    configured value.  Subpaths share their cluster delay and get Laplacian
    angle offsets with the configured RMS spread.
    """
    rng = trial_rng(rng_seed, ut_index)
    nc, ns = config.num_clusters, config.subpaths_per_cluster
    pc = cluster_powers(nc, config.cluster_decay_db)

    d = np.sort(rng.exponential(size=nc))
    d -= d[0]
    spread = np.sqrt(max(np.sum(pc * d ** 2) - np.sum(pc * d) ** 2, 0.0))
    d = d * (config.delay_spread_s / spread) if spread > 0 else np.zeros(nc)

    sector = config.aod_sector_rad
    aod_c = rng.uniform(-sector, sector, nc)
    aoa_c = rng.uniform(-np.pi / 2, np.pi / 2, nc)
    b = config.angle_spread_rad / np.sqrt(2.0)  # Laplacian std = sqrt(2) * scale
    aoa = np.clip(aoa_c[:, None] + rng.laplace(0.0, b, (nc, ns)), -np.pi / 2, np.pi / 2)
    aod = np.clip(aod_c[:, None] + rng.laplace(0.0, b, (nc, ns)), -sector, sector)

    n = nc * ns
    return RaySet(np.repeat(pc / ns, ns), aoa.ravel(), aod.ravel(), np.repeat(d, ns),
                  rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n))


def drop_uts(config: ScenarioConfig, rng_seed=None) -> list[UtProfile]:
    """One profile per UT, each from its own substream of the master seed."""
    seed = config.master_seed if rng_seed is None else rng_seed
    return [UtProfile(generate_cluster_rays(config, u, seed), config.carrier_freq_hz, config.velocity_mps)
            for u in range(config.num_uts)]


def strongest_link(rays: RaySet, cfg: ArrayConfig, num_streams: int = 1,
                   min_share: float = 0.01) -> BeamAssignment:
    """Single-UT assignment for link simulation.

    Transmits on the ``num_streams`` strongest BS beams and receives on every
    UT beam that holds at least ``min_share`` of the power leaving them (and
    at least as many beams as streams).
    """
    om = power_matrix(rays, cfg).omega
    tx = np.argsort(-om.sum(axis=0), kind="stable")[:num_streams]
    rx_power = om[:, tx].sum(axis=1)
    order = np.argsort(-rx_power, kind="stable")
    keep = max(int(np.count_nonzero(rx_power >= min_share * rx_power.sum())), num_streams)
    return BeamAssignment((tuple(tx),), (tuple(order[:keep]),))
