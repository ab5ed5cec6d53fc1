"""Probabilistic LoS/NLoS channel model for subarray-based XL-MIMO.

Per link (k, l) the channel is ``h_kl = alpha_kl * h_los_kl + h_nlos_kl`` with
a Bernoulli LoS indicator, a deterministic planar-wave LoS term and a
spatially correlated Rayleigh NLoS term ``CN(0, R_kl)``. Large-scale gains
carry correlated log-normal shadowing.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from xlmimo.config import ScenarioConfig
from xlmimo.scenario import LinkGeometry, Topology, pairwise_distances


class ChannelError(RuntimeError):
    pass


class QuadratureWarning(RuntimeWarning):
    pass


class ShadowingWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# LoS visibility
# ---------------------------------------------------------------------------


def los_probability(d: np.ndarray | float) -> np.ndarray | float:
    """Urban-micro LoS probability as a function of the UE–SA distance (m)."""
    d = np.asarray(d, dtype=float)
    decay = np.exp(-d / 36.0)
    p = np.minimum(18.0 / d, 1.0) * (1.0 - decay) + decay
    p = np.clip(p, 0.0, 1.0)
    return p if p.ndim else float(p)


def sample_visibility(geom: LinkGeometry, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli LoS indicators ``alpha`` (K×L, int8), independent across links."""
    p = los_probability(geom.distance)
    return (rng.random(p.shape) < p).astype(np.int8)


# ---------------------------------------------------------------------------
# correlated shadowing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShadowField:
    """Shadow fading in dB for the LoS and NLoS components, K×L each."""

    los_db: np.ndarray
    nlos_db: np.ndarray

    @property
    def los(self) -> np.ndarray:
        return 10.0 ** (self.los_db / 10.0)

    @property
    def nlos(self) -> np.ndarray:
        return 10.0 ** (self.nlos_db / 10.0)


def shadow_cross_covariance(
    topo: Topology, geom: LinkGeometry, delta: float, sigma_sf: float
) -> np.ndarray:
    """Cross-covariance of the dB shadowing over all K·L links.

    Rows/columns are ordered ``k * L + l``. The entry for links (k, l) and
    (i, j) depends on the four distances d_kj, d_il, UE k–UE i and SA l–SA j;
    its diagonal reduces to ``sigma_sf**2 * (1 - exp(-d_kl/delta))**2``.
    """
    d = geom.distance
    K, L = d.shape
    e = np.exp(-d / delta)
    a = 1.0 - e
    scale = a / np.sqrt(1.0 + e)
    e_ue = np.exp(-pairwise_distances(topo.ue_positions) / delta)
    e_sa = np.exp(-pairwise_distances(topo.sa_positions) / delta)
    # indices [k, l, i, j]
    coupling = (
        e[:, None, None, :]  # d_kj
        + e.T[None, :, :, None]  # d_il
        + e_ue[:, None, :, None]
        + e_sa[None, :, None, :]
    )
    cov = 0.5 * sigma_sf**2 * scale[:, :, None, None] * scale[None, None, :, :] * coupling
    cov = cov.reshape(K * L, K * L)
    return 0.5 * (cov + cov.T)


def shadow_factor(cov: np.ndarray, max_escalations: int = 3) -> np.ndarray:
    """Lower Cholesky factor of ``cov``, adding escalating diagonal jitter if needed."""
    n = cov.shape[0]
    top = float(np.max(np.diag(cov))) if n else 0.0
    if top <= 0.0:
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eps = 1e-10 * top
    for _ in range(max_escalations + 1):
        try:
            factor = np.linalg.cholesky(cov + eps * np.eye(n))
        except np.linalg.LinAlgError:
            eps *= 10.0
            continue
        warnings.warn(
            f"shadow covariance not PSD; added diagonal jitter {eps:.3e}",
            ShadowingWarning,
            stacklevel=2,
        )
        return factor
    raise ChannelError("shadow covariance factorization failed after jitter escalation")


def sample_shadowing(
    cov: np.ndarray, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Jointly Gaussian dB values with covariance ``cov``.

    Returns shape ``(n,)`` or ``(size, n)``.
    """
    factor = shadow_factor(cov)
    n = cov.shape[0]
    z = rng.standard_normal(n if size is None else (size, n))
    return z @ factor.T


def draw_shadow_fields(
    topo: Topology, geom: LinkGeometry, cfg: ScenarioConfig, rng: np.random.Generator
) -> ShadowField:
    """Independent LoS and NLoS shadow fields sharing the spatial structure."""
    K, L = geom.distance.shape
    unit = shadow_cross_covariance(topo, geom, cfg.decorr_distance, 1.0)
    factor = shadow_factor(unit)
    z = rng.standard_normal((2, K * L))
    f = z @ factor.T
    return ShadowField(
        los_db=cfg.sigma_sf_los * f[0].reshape(K, L),
        nlos_db=cfg.sigma_sf_nlos * f[1].reshape(K, L),
    )


# ---------------------------------------------------------------------------
# LoS component
# ---------------------------------------------------------------------------


def array_response(phi, theta, N: int, d_over_lambda: float) -> np.ndarray:
    """ULA response ``exp(-j 2 pi n (d/lambda) sin(phi) / cos(theta))``, n = 0..N-1.

    ``phi`` and ``theta`` broadcast; the antenna axis is appended last.
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    cos_t = np.cos(theta)
    if np.any(np.abs(cos_t) < 1e-9):
        raise ChannelError("elevation too close to ±π/2")
    u = np.sin(phi) / cos_t
    n = np.arange(N)
    return np.exp(-2j * np.pi * d_over_lambda * u[..., None] * n)


def los_channel(
    geom: LinkGeometry, x_los: np.ndarray, cfg: ScenarioConfig
) -> tuple[np.ndarray, np.ndarray]:
    """LoS gain ``beta0 X / d^2`` and the LoS vector for every link."""
    beta_los = cfg.beta0 * x_los / geom.distance**2
    phase = np.exp(-2j * np.pi * geom.distance / cfg.wavelength)
    a = array_response(geom.azimuth, geom.elevation, cfg.N, cfg.d_over_lambda)
    h_los = (np.sqrt(beta_los) * phase)[..., None] * a
    return beta_los, h_los


def nlos_lsf(geom: LinkGeometry, x_nlos: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    return cfg.beta0 * x_nlos / geom.distance**cfg.gamma


# ---------------------------------------------------------------------------
# NLoS spatial correlation
# ---------------------------------------------------------------------------

PHI_RANGE = (-np.pi, np.pi)
THETA_RANGE = (-np.pi / 2, np.pi / 2)
MAX_REFINEMENTS = 3


@lru_cache(maxsize=8)
def _axis_rule(n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return half * x + 0.5 * (hi + lo), half * w


@lru_cache(maxsize=6)
def _phase_powers(n: int, N: int, d_over_lambda: float) -> np.ndarray:
    """``exp(-j 2 pi m (d/lambda) sin(phi)/cos(theta))`` on the n×n grid, m = 1..N-1."""
    phi, _ = _axis_rule(n, *PHI_RANGE)
    theta, _ = _axis_rule(n, *THETA_RANGE)
    u = np.sin(phi)[:, None] / np.cos(theta)[None, :]
    base = np.exp(-2j * np.pi * d_over_lambda * u)
    out = np.empty((max(N - 1, 0), n, n), dtype=complex)
    if N > 1:
        out[0] = base
        for m in range(1, N - 1):
            out[m] = out[m - 1] * base
    return out


def _axis_weights(nodes, weights, mean, sigma):
    """Quadrature weights of a Gaussian renormalised over the integration interval.

    Shape (links, nodes). For ``sigma == 0`` there is no quadrature: the
    returned mask selects links handled as point masses.
    """
    mean = np.atleast_1d(mean)
    if sigma == 0:
        return None
    g = weights[None, :] * np.exp(-0.5 * ((nodes[None, :] - mean[:, None]) / sigma) ** 2)
    mass = g.sum(axis=1, keepdims=True)
    if np.any(mass <= 0):
        raise ChannelError("angular density has no mass inside the integration range")
    return g / mass


def _lag_correlations(phi_bar, theta_bar, sigma_phi, sigma_theta, N, d_over_lambda, n):
    """Normalised correlations ``r_m = E[exp(-j 2 pi m (d/lambda) u)]``, shape (links, N)."""
    links = phi_bar.shape[0]
    r = np.ones((links, N), dtype=complex)
    if N == 1:
        return r
    m = np.arange(1, N)
    if sigma_phi == 0 and sigma_theta == 0:
        u = np.sin(phi_bar) / np.cos(theta_bar)
        r[:, 1:] = np.exp(-2j * np.pi * d_over_lambda * u[:, None] * m)
        return r
    if sigma_phi == 0 or sigma_theta == 0:
        # one-dimensional rule along the spread axis, point mass on the other
        if sigma_phi == 0:
            nodes, w = _axis_rule(n, *THETA_RANGE)
            wt = _axis_weights(nodes, w, theta_bar, sigma_theta)
            u = np.sin(phi_bar)[:, None] / np.cos(nodes)[None, :]
        else:
            nodes, w = _axis_rule(n, *PHI_RANGE)
            wt = _axis_weights(nodes, w, phi_bar, sigma_phi)
            u = np.sin(nodes)[None, :] / np.cos(theta_bar)[:, None]
        ph = np.exp(-2j * np.pi * d_over_lambda * u[:, None, :] * m[None, :, None])
        r[:, 1:] = np.einsum("kmi,ki->km", ph, wt)
        return r
    phi_nodes, phi_w = _axis_rule(n, *PHI_RANGE)
    theta_nodes, theta_w = _axis_rule(n, *THETA_RANGE)
    w_phi = _axis_weights(phi_nodes, phi_w, phi_bar, sigma_phi)
    w_theta = _axis_weights(theta_nodes, theta_w, theta_bar, sigma_theta)
    powers = _phase_powers(n, N, d_over_lambda)
    for i in range(N - 1):
        r[:, i + 1] = np.einsum("kj,kj->k", w_phi @ powers[i], w_theta)
    return r


def _toeplitz_hermitian(r: np.ndarray) -> np.ndarray:
    """Matrices with ``[m, n] = r[m - n]`` for m ≥ n and conjugate symmetry."""
    N = r.shape[-1]
    idx = np.arange(N)
    lag = idx[:, None] - idx[None, :]
    out = r[..., np.abs(lag)]
    upper = lag < 0
    out[..., upper] = np.conj(out[..., upper])
    return out


def spatial_correlation(
    beta_nlos,
    phi_bar,
    theta_bar,
    sigma_phi: float,
    sigma_theta: float,
    N: int,
    d_over_lambda: float,
    quad_points: int = 200,
    tol: float = 1e-4,
) -> np.ndarray:
    """NLoS spatial correlation matrices for one or many links.

    The angular density is a separable Gaussian centred on the LoS angles,
    restricted to ``phi in [-pi, pi]``, ``theta in (-pi/2, pi/2)`` and
    renormalised there, so ``trace(R) = N * beta_nlos``. The double
    integral is a tensor Gauss–Legendre rule, doubled until the relative
    Frobenius change of every link drops below ``tol`` (at most three
    doublings; a :class:`QuadratureWarning` is issued otherwise).

    Returns an array of shape ``beta_nlos.shape + (N, N)``, Hermitian and
    Toeplitz.
    """
    beta = np.asarray(beta_nlos, dtype=float)
    shape = beta.shape
    phi_bar = np.broadcast_to(np.asarray(phi_bar, dtype=float), shape).ravel()
    theta_bar = np.broadcast_to(np.asarray(theta_bar, dtype=float), shape).ravel()
    if sigma_phi < 0 or sigma_theta < 0:
        raise ChannelError("angular standard deviations must be non-negative")

    n = quad_points
    r = _lag_correlations(phi_bar, theta_bar, sigma_phi, sigma_theta, N, d_over_lambda, n)
    degenerate = sigma_phi == 0 and sigma_theta == 0
    if not degenerate and N > 1:
        pending = np.arange(phi_bar.size)
        for _ in range(MAX_REFINEMENTS):
            n *= 2
            finer = _lag_correlations(
                phi_bar[pending], theta_bar[pending], sigma_phi, sigma_theta, N, d_over_lambda, n
            )
            # Frobenius norm of a Toeplitz matrix from its lags
            mult = np.concatenate(([N], 2 * (N - np.arange(1, N))))
            diff = np.sqrt(np.sum(mult * np.abs(finer - r[pending]) ** 2, axis=1))
            norm = np.sqrt(np.sum(mult * np.abs(finer) ** 2, axis=1))
            r[pending] = finer
            pending = pending[diff > tol * norm]
            if pending.size == 0:
                break
        else:
            warnings.warn(
                f"spatial-correlation quadrature did not converge for {pending.size} link(s) "
                f"at {n}×{n} points",
                QuadratureWarning,
                stacklevel=2,
            )
    R = _toeplitz_hermitian(r) * beta.ravel()[:, None, None]
    return R.reshape(shape + (N, N))


def hermitian_sqrt(R: np.ndarray) -> np.ndarray:
    """Hermitian square root with negative eigenvalues clipped to zero."""
    w, V = np.linalg.eigh(R)
    w = np.sqrt(np.clip(w, 0.0, None))
    return (V * w[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


# ---------------------------------------------------------------------------
# channel statistics and realizations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelStatistics:
    """First and second order statistics of every UE–SA channel (one drop).

    Shapes: ``alpha``, ``beta_*`` (K, L); ``h_bar`` (K, L, N);
    ``R`` and ``R_sqrt`` (K, L, N, N).
    """

    alpha: np.ndarray
    beta_los: np.ndarray
    beta_nlos: np.ndarray
    h_bar: np.ndarray
    R: np.ndarray
    R_sqrt: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return self.alpha * self.beta_los + self.beta_nlos

    @property
    def K(self) -> int:
        return self.alpha.shape[0]

    @property
    def L(self) -> int:
        return self.alpha.shape[1]

    @property
    def N(self) -> int:
        return self.h_bar.shape[-1]

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.alpha, self.beta_los, self.beta_nlos, self.h_bar, self.R):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def channel_statistics(
    geom: LinkGeometry, alpha: np.ndarray, shadows: ShadowField, cfg: ScenarioConfig
) -> ChannelStatistics:
    beta_los, h_los = los_channel(geom, shadows.los, cfg)
    beta_nlos = nlos_lsf(geom, shadows.nlos, cfg)
    R = spatial_correlation(
        beta_nlos,
        geom.azimuth,
        geom.elevation,
        cfg.sigma_phi,
        cfg.sigma_theta,
        cfg.N,
        cfg.d_over_lambda,
        cfg.quadrature_points,
        cfg.quadrature_tol,
    )
    h_bar = alpha[..., None] * h_los
    return ChannelStatistics(
        alpha=alpha,
        beta_los=beta_los,
        beta_nlos=beta_nlos,
        h_bar=h_bar,
        R=R,
        R_sqrt=hermitian_sqrt(R),
    )


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian samples."""
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def sample_channel(
    stats: ChannelStatistics, rng: np.random.Generator, n_realizations: int = 1
) -> np.ndarray:
    """Draw ``h_kl = h_bar_kl + R_kl^(1/2) z``; returns shape (n, K, L, N)."""
    z = complex_normal(rng, (n_realizations,) + stats.h_bar.shape)
    return stats.h_bar[None] + np.einsum("klmn,rkln->rklm", stats.R_sqrt, z)


def save_statistics(stats: ChannelStatistics, path: str | Path) -> None:
    np.savez(
        path,
        alpha=stats.alpha,
        beta_los=stats.beta_los,
        beta_nlos=stats.beta_nlos,
        h_bar=stats.h_bar,
        R=stats.R,
        R_sqrt=stats.R_sqrt,
    )


def load_statistics(path: str | Path) -> ChannelStatistics:
    with np.load(path) as data:
        return ChannelStatistics(**{k: data[k] for k in data.files})
