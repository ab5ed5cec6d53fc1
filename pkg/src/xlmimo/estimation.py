"""Pilot observations, MMSE channel estimates and their error statistics.

Pilot indices are 0-based throughout (``0 .. tau_p - 1``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from xlmimo import kernels
from xlmimo.channel import ChannelStatistics, complex_normal
from xlmimo.config import ScenarioConfig


@dataclass(frozen=True)
class PilotAssignment:
    pilots: np.ndarray
    tau_p: int

    def __post_init__(self):
        pilots = np.asarray(self.pilots, dtype=np.int64)
        if pilots.ndim != 1:
            raise ValueError("pilots must be a 1-D vector")
        if pilots.size and (pilots.min() < 0 or pilots.max() >= self.tau_p):
            raise ValueError("pilot indices must lie in [0, tau_p)")
        pilots.setflags(write=False)
        object.__setattr__(self, "pilots", pilots)

    @property
    def K(self) -> int:
        return self.pilots.size

    @cached_property
    def groups(self) -> list[np.ndarray]:
        """UE indices on each pilot (possibly empty), indexed by pilot."""
        return [np.flatnonzero(self.pilots == t) for t in range(self.tau_p)]

    def sharing_set(self, k: int) -> np.ndarray:
        """UEs using the same pilot as UE ``k``, including ``k``."""
        return self.groups[self.pilots[k]]

    def used_pilots(self) -> np.ndarray:
        return np.unique(self.pilots)


def synthesize_pilot_observation(
    h: np.ndarray, assignment: PilotAssignment, cfg: ScenarioConfig, rng: np.random.Generator
) -> np.ndarray:
    """Despread pilot signals ``y_tl = sum_{i: t_i = t} sqrt(p_i) tau_p h_il + n_tl``.

    ``h`` has shape (n, K, L, N); the result has shape (n, tau_p, L, N) and
    the noise is ``CN(0, tau_p sigma2 I)``.
    """
    noise = complex_normal(rng, (h.shape[0], assignment.tau_p) + h.shape[2:])
    return pilot_observation(h, assignment, cfg, noise)


def pilot_observation(
    h: np.ndarray, assignment: PilotAssignment, cfg: ScenarioConfig, unit_noise: np.ndarray
) -> np.ndarray:
    """As :func:`synthesize_pilot_observation`, with the unit-variance noise supplied."""
    tau_p = assignment.tau_p
    onehot = np.zeros((assignment.K, tau_p))
    onehot[np.arange(assignment.K), assignment.pilots] = np.sqrt(cfg.ue_powers) * tau_p
    y = np.einsum("it,rilm->rtlm", onehot, h)
    return y + np.sqrt(tau_p * cfg.noise_power) * unit_noise


def psi_matrices(
    assignment: PilotAssignment, stats: ChannelStatistics, cfg: ScenarioConfig
) -> np.ndarray:
    """``Psi_tl = sum_{i on t} p_i tau_p R_il + sigma2 I`` for every pilot and SA.

    Shape (tau_p, L, N, N); unused pilots give ``sigma2 I``.
    """
    tau_p = assignment.tau_p
    onehot = np.zeros((assignment.K, tau_p))
    onehot[np.arange(assignment.K), assignment.pilots] = cfg.ue_powers * tau_p
    psi = np.einsum("it,ilmn->tlmn", onehot, stats.R)
    psi += cfg.noise_power * np.eye(stats.N)
    return psi


def psi_matrix(
    assignment: PilotAssignment, stats: ChannelStatistics, cfg: ScenarioConfig, l: int, t: int
) -> np.ndarray:
    members = assignment.groups[t]
    p = cfg.ue_powers
    psi = cfg.noise_power * np.eye(stats.N, dtype=complex)
    for i in members:
        psi = psi + p[i] * assignment.tau_p * stats.R[i, l]
    return psi


def _psi_inv_R(assignment, stats, cfg):
    """``Psi_{t_k l}^-1 R_kl`` for every UE and SA, shape (K, L, N, N)."""
    psi = psi_matrices(assignment, stats, cfg)[assignment.pilots]
    return np.linalg.solve(psi, stats.R)


def mean_pilot_observation(
    assignment: PilotAssignment, stats: ChannelStatistics, cfg: ScenarioConfig
) -> np.ndarray:
    """Expected pilot signal per pilot and SA, shape (tau_p, L, N)."""
    onehot = np.zeros((assignment.K, assignment.tau_p))
    onehot[np.arange(assignment.K), assignment.pilots] = np.sqrt(cfg.ue_powers) * assignment.tau_p
    return np.einsum("it,ilm->tlm", onehot, stats.h_bar)


def estimator_gains(
    assignment: PilotAssignment, stats: ChannelStatistics, cfg: ScenarioConfig
) -> np.ndarray:
    """Linear MMSE gains ``sqrt(p_k) R_kl Psi^-1`` with shape (K, L, N, N)."""
    # R Psi^-1 = (Psi^-1 R)^H since both are Hermitian
    X = _psi_inv_R(assignment, stats, cfg)
    return np.sqrt(cfg.ue_powers)[:, None, None, None] * np.conj(np.swapaxes(X, -1, -2))


def mmse_estimate(
    y: np.ndarray, assignment: PilotAssignment, stats: ChannelStatistics, cfg: ScenarioConfig
) -> np.ndarray:
    """MMSE estimates of every UE's channel at every SA.

    ``y`` is (n, tau_p, L, N) or (tau_p, L, N); returns (n, K, L, N) or
    (K, L, N).
    """
    single = y.ndim == 3
    if single:
        y = y[None]
    gains = estimator_gains(assignment, stats, cfg)
    innov = y - mean_pilot_observation(assignment, stats, cfg)[None]
    hhat = stats.h_bar[None] + np.einsum("klmn,rkln->rklm", gains, innov[:, assignment.pilots])
    return hhat[0] if single else hhat


def error_covariance(
    assignment: PilotAssignment, stats: ChannelStatistics, cfg: ScenarioConfig
) -> np.ndarray:
    """Estimation-error covariances ``C_kl = R_kl - p_k tau_p R_kl Psi^-1 R_kl``, (K, L, N, N)."""
    X = _psi_inv_R(assignment, stats, cfg)
    scale = (cfg.ue_powers * assignment.tau_p)[:, None, None, None]
    C = stats.R - scale * (stats.R @ X)
    return 0.5 * (C + np.conj(np.swapaxes(C, -1, -2)))


def nmse_per_ue(
    assignment: PilotAssignment, stats: ChannelStatistics, cfg: ScenarioConfig
) -> np.ndarray:
    """``NMSE_k = sum_l trace(C_kl) / (N sum_l beta_kl)``.

    The squared-bias term vanishes because the MMSE estimator is unbiased.
    """
    C = error_covariance(assignment, stats, cfg)
    num = np.trace(C, axis1=2, axis2=3).real.sum(axis=1)
    return num / (stats.N * stats.beta.sum(axis=1))


def cost_weights(stats: ChannelStatistics) -> np.ndarray:
    """Per-UE normalisation ``1 / (N sum_l beta_kl)`` of the NMSE cost."""
    return 1.0 / (stats.N * stats.beta.sum(axis=1))


def average_nmse_cost(
    assignment: PilotAssignment, stats: ChannelStatistics, cfg: ScenarioConfig
) -> float:
    """Pilot-assignment cost ``sum_k NMSE_k`` (K times the mean NMSE)."""
    return float(
        kernels.assignment_costs(
            stats.R, cfg.ue_powers, assignment.tau_p, cfg.noise_power, cost_weights(stats), assignment.pilots
        )[0]
    )
