"""Uplink data detection with partial-MMSE combining.

Everything for UE k lives on the subspace of its serving antennas
(dimension ``N * |M_k|``); vectors are restricted by index, not masked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from xlmimo.config import ScenarioConfig
from xlmimo.selection import ServingMap


def restrict_vectors(x: np.ndarray, sas: np.ndarray) -> np.ndarray:
    """Keep the blocks of ``sas`` from (..., L, N) arrays, flattened to (..., |sas| N)."""
    sub = x[..., sas, :]
    return sub.reshape(sub.shape[:-2] + (-1,))


def restrict_covariances(C: np.ndarray, sas: np.ndarray) -> np.ndarray:
    """Block-diagonal restriction of per-SA covariances (..., L, N, N) to ``sas``."""
    N = C.shape[-1]
    n = sas.size
    out = np.zeros(C.shape[:-3] + (n * N, n * N), dtype=C.dtype)
    for j, l in enumerate(sas):
        out[..., j * N : (j + 1) * N, j * N : (j + 1) * N] = C[..., l, :, :]
    return out


def _weighted_error_covariance(C: np.ndarray, p: np.ndarray, sas: np.ndarray) -> np.ndarray:
    """``sum_i p_i C_i`` restricted to ``sas``; C is (K', L, N, N)."""
    return restrict_covariances(np.tensordot(p, C[:, sas], axes=1), np.arange(sas.size))


def pmmse_combiner(
    hhat: np.ndarray, C: np.ndarray, smap: ServingMap, cfg: ScenarioConfig, k: int
) -> np.ndarray:
    """P-MMSE combiner of UE k for each realization.

    ``hhat`` is (n, K, L, N), ``C`` is (K, L, N, N). Returns (n, N |M_k|);
    the second axis is empty when no SA serves UE k.
    """
    sas = smap.serving[k]
    n = hhat.shape[0]
    if sas.size == 0:
        return np.zeros((n, 0), dtype=complex)
    p = cfg.ue_powers
    partners = smap.partners[k]
    H = restrict_vectors(hhat[:, partners], sas)  # (n, |S_k|, d)
    pw = p[partners]
    A = (np.swapaxes(H, 1, 2) * pw) @ np.conj(H)
    A += _weighted_error_covariance(C[partners], pw, sas) + cfg.noise_power * np.eye(H.shape[-1])
    hk = restrict_vectors(hhat[:, k], sas)
    return p[k] * np.linalg.solve(A, hk[..., None])[..., 0]


def sinr_ul(
    hhat: np.ndarray,
    C: np.ndarray,
    smap: ServingMap,
    v: np.ndarray,
    cfg: ScenarioConfig,
    k: int,
) -> np.ndarray:
    """Instantaneous effective SINR of UE k per realization, shape (n,).

    Interference counts all K UEs; the estimation-error term sums
    ``p_i C_i`` over all UEs on k's serving antennas. Unserved UEs and
    ``v = 0`` give SINR 0.
    """
    sas = smap.serving[k]
    n = hhat.shape[0]
    if sas.size == 0:
        return np.zeros(n)
    p = cfg.ue_powers
    H = restrict_vectors(hhat, sas)  # (n, K, d)
    gains = np.abs(H @ np.conj(v)[..., None])[..., 0] ** 2  # |v^H hhat_i|^2
    Z = _weighted_error_covariance(C, p, sas)
    z_term = np.sum(np.conj(v) * (v @ Z.T), axis=1).real
    v_norm2 = np.sum(np.abs(v) ** 2, axis=1)
    signal = p[k] * gains[:, k]
    interference = gains @ p - signal
    denom = interference + z_term + cfg.noise_power * v_norm2
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, signal / denom, 0.0)
    return out


def se_ul(sinr: np.ndarray, cfg: ScenarioConfig) -> float:
    """Achievable SE ``(tau_u / tau_c) E[log2(1 + SINR)]`` over realizations."""
    return float(cfg.prelog * np.mean(np.log2(1.0 + np.asarray(sinr))))


def uplink_sinr(hhat: np.ndarray, C: np.ndarray, smap: ServingMap, cfg: ScenarioConfig) -> np.ndarray:
    """P-MMSE SINR samples for every UE, shape (n, K)."""
    n, K = hhat.shape[:2]
    out = np.zeros((n, K))
    for k in range(K):
        if smap.serving[k].size == 0:
            continue
        v = pmmse_combiner(hhat, C, smap, cfg, k)
        out[:, k] = sinr_ul(hhat, C, smap, v, cfg, k)
    return out


def uplink_data_signal(
    h: np.ndarray, symbols: np.ndarray, unit_noise: np.ndarray, cfg: ScenarioConfig
) -> np.ndarray:
    """Received data signal ``sum_i h_i s_i + n`` at all SAs, shape (n, L, N).

    ``h`` is (n, K, L, N), ``symbols`` (n, K), ``unit_noise`` (n, L, N) ~ CN(0, 1).
    """
    return np.einsum("rilm,ri->rlm", h, symbols) + np.sqrt(cfg.noise_power) * unit_noise


def estimate_symbol(y_ul: np.ndarray, v: np.ndarray, smap: ServingMap, k: int) -> np.ndarray:
    """Soft estimate ``v_k^H y`` over UE k's serving antennas, shape (n,)."""
    sas = smap.serving[k]
    if sas.size == 0:
        return np.zeros(y_ul.shape[0], dtype=complex)
    return np.einsum("rm,rm->r", np.conj(v), restrict_vectors(y_ul, sas))


@dataclass(frozen=True)
class MetricsRecord:
    """Per-UE metrics of one PA method on one drop."""

    nmse: np.ndarray
    se: np.ndarray
    n_serving: np.ndarray
    cost: float

    @property
    def served(self) -> np.ndarray:
        return self.n_serving > 0

    @property
    def sum_se(self) -> float:
        return float(np.sum(self.se))

    @property
    def min_se(self) -> float:
        return float(np.min(self.se))

    @property
    def max_se(self) -> float:
        return float(np.max(self.se))

    @property
    def avg_nmse(self) -> float:
        return float(np.mean(self.nmse))
