"""Subarray/UE layout and per-link LoS geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from xlmimo.config import ScenarioConfig


@dataclass(frozen=True)
class Topology:
    """Reference-antenna positions of the L subarrays and the K UE drops, shape (·, 3)."""

    sa_positions: np.ndarray
    ue_positions: np.ndarray

    @property
    def L(self) -> int:
        return self.sa_positions.shape[0]

    @property
    def K(self) -> int:
        return self.ue_positions.shape[0]


@dataclass(frozen=True)
class LinkGeometry:
    """K×L tables of UE→SA distances and LoS angles.

    The azimuth is measured from the array broadside (x axis), so that
    ``sin(azimuth) = (y_ue - y_sa) / distance_2d``; the elevation is
    ``atan2(z_sa - z_ue, distance_2d)``.
    """

    distance: np.ndarray
    distance_2d: np.ndarray
    azimuth: np.ndarray
    elevation: np.ndarray


def sa_reference_positions(cfg: ScenarioConfig) -> np.ndarray:
    spacing = cfg.array_length / cfg.L
    y = (np.arange(cfg.L) - (cfg.L - 1) / 2.0) * spacing
    pos = np.zeros((cfg.L, 3))
    pos[:, 1] = y
    pos[:, 2] = cfg.sa_height
    return pos


def build_topology(cfg: ScenarioConfig, rng: np.random.Generator) -> Topology:
    """Lay the SAs along the y axis and drop K UEs uniformly over the square cell."""
    w = cfg.cell_half_width
    ue = np.empty((cfg.K, 3))
    ue[:, :2] = rng.uniform(-w, w, size=(cfg.K, 2))
    ue[:, 2] = cfg.ue_height
    return Topology(sa_positions=sa_reference_positions(cfg), ue_positions=ue)


def link_geometry(topo: Topology) -> LinkGeometry:
    delta = topo.ue_positions[:, None, :] - topo.sa_positions[None, :, :]
    dx, dy, dz = delta[..., 0], delta[..., 1], delta[..., 2]
    d2d = np.hypot(dx, dy)
    dist = np.sqrt(d2d**2 + dz**2)
    # arctan2 equals arcsin(dy / d2d) for d2d > 0 and gives 0 on the array normal
    azimuth = np.arctan2(dy, np.abs(dx))
    elevation = np.arctan2(-dz, d2d)
    return LinkGeometry(distance=dist, distance_2d=d2d, azimuth=azimuth, elevation=elevation)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))
