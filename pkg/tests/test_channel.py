import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xlmimo.channel import (
    ChannelError,
    QuadratureWarning,
    ShadowField,
    array_response,
    channel_statistics,
    draw_shadow_fields,
    load_statistics,
    los_channel,
    los_probability,
    nlos_lsf,
    sample_channel,
    sample_shadowing,
    sample_visibility,
    save_statistics,
    shadow_cross_covariance,
    shadow_factor,
    spatial_correlation,
)
from xlmimo.config import ScenarioConfig
from xlmimo.scenario import LinkGeometry, Topology, build_topology, link_geometry

from conftest import make_stats, random_covariances


def _drop(cfg, seed=0):
    rng = np.random.default_rng(seed)
    topo = build_topology(cfg, rng)
    return topo, link_geometry(topo)


# LoS probability and visibility


@pytest.mark.parametrize("d, expected", [(10.0, 1.0), (18.0, 1.0), (36.0, 0.6839397205857212)])
def test_los_probability_values(d, expected):
    assert los_probability(d) == pytest.approx(expected, rel=1e-14)


def test_los_probability_in_unit_interval():
    p = los_probability(np.geomspace(1e-3, 1e4, 500))
    assert np.all((p >= 0) & (p <= 1))


def test_visibility_all_ones_when_close_and_deterministic():
    d = np.full((3, 4), 12.0)
    geom = LinkGeometry(d, d, np.zeros_like(d), np.zeros_like(d))
    assert np.all(sample_visibility(geom, np.random.default_rng(0)) == 1)
    cfg = ScenarioConfig(K=20)
    _, g = _drop(cfg)
    a = sample_visibility(g, np.random.default_rng(9))
    b = sample_visibility(g, np.random.default_rng(9))
    assert np.array_equal(a, b) and set(np.unique(a)) <= {0, 1}


# shadowing


def test_shadow_diagonal_equals_marginal_variance():
    cfg = ScenarioConfig(K=10, L=25)
    topo, g = _drop(cfg, 3)
    cov = shadow_cross_covariance(topo, g, 9.0, 4.0)
    expected = 16.0 * (1.0 - np.exp(-g.distance.ravel() / 9.0)) ** 2
    np.testing.assert_allclose(np.diag(cov), expected, rtol=1e-14)


def test_shadow_covariance_symmetric_and_vanishes_far_apart():
    sa = np.array([[0.0, 0.0, 10.0], [0.0, 5e4, 10.0]])
    ue = np.array([[1e4, 0.0, 1.5], [1e4, 5e4, 1.5]])
    far = Topology(sa, ue)
    g = link_geometry(far)
    cov = shadow_cross_covariance(far, g, 9.0, 3.0)
    assert np.array_equal(cov, cov.T)
    # rows k*L + l; only pairs with distinct UEs and distinct SAs decouple
    c = cov.reshape(2, 2, 2, 2)
    assert abs(c[0, 0, 1, 1]) < 1e-100 and abs(c[0, 1, 1, 0]) < 1e-100
    assert c[0, 0, 0, 1] == pytest.approx(0.5 * 9.0, rel=1e-12)


def test_zero_covariance_gives_unit_shadowing():
    f = sample_shadowing(np.zeros((6, 6)), np.random.default_rng(0))
    assert np.all(f == 0)
    assert np.all(ShadowField(f.reshape(2, 3), f.reshape(2, 3)).los == 1.0)


def test_shadow_sample_covariance_matches():
    cfg = ScenarioConfig(K=3, L=4)
    topo, g = _drop(cfg, 11)
    cov = shadow_cross_covariance(topo, g, 9.0, 3.0)
    samples = sample_shadowing(cov, np.random.default_rng(2), size=100_000)
    emp = np.cov(samples, rowvar=False)
    dominant = np.abs(cov) > 0.1 * np.max(np.abs(cov))
    np.testing.assert_allclose(emp[dominant], cov[dominant], rtol=0.05)


def test_shadow_factor_jitter_escalation_warns():
    v = np.array([1.0, 1.0, 1.0])
    singular = np.outer(v, v) - 1e-12 * np.eye(3)
    with pytest.warns(RuntimeWarning, match="jitter"):
        L = shadow_factor(singular)
    assert np.allclose(L @ L.T, singular, atol=1e-8)
    with pytest.raises(ChannelError):
        shadow_factor(-np.eye(3) + 2e-3 * np.ones((3, 3)) + np.diag([2.0, 0, 0]))


def test_shadow_fields_deterministic_and_scaled():
    cfg = ScenarioConfig(K=4, L=6)
    topo, g = _drop(cfg)
    a = draw_shadow_fields(topo, g, cfg, np.random.default_rng(1))
    b = draw_shadow_fields(topo, g, cfg, np.random.default_rng(1))
    assert np.array_equal(a.los_db, b.los_db) and np.array_equal(a.nlos_db, b.nlos_db)


# LoS component and gains


def test_array_response_values():
    assert np.all(array_response(0.0, 0.3, 5, 0.5) == 1.0)
    a = array_response(np.pi / 6, 0.0, 2, 0.5)
    assert a[1] == pytest.approx(-1j, abs=1e-15)
    b = array_response(np.array([0.3, -1.2]), np.array([0.1, 0.7]), 8, 0.5)
    np.testing.assert_allclose(np.abs(b), 1.0, rtol=1e-15)
    with pytest.raises(ChannelError, match="elevation too close to ±π/2"):
        array_response(0.1, np.pi / 2, 4, 0.5)


def _geom(d, phi=0.2, theta=0.1):
    d = np.atleast_2d(np.asarray(d, dtype=float))
    return LinkGeometry(d, d, np.full_like(d, phi), np.full_like(d, theta))


def test_los_gain_and_norm():
    cfg = ScenarioConfig()
    beta, h = los_channel(_geom([[1.0, 2.0, 4.0]]), np.ones((1, 3)), cfg)
    assert beta[0, 0] == pytest.approx(8.9125e-4, rel=1e-15)
    assert beta[0, 1] == pytest.approx(beta[0, 2] * 4, rel=1e-14)
    np.testing.assert_allclose(np.sum(np.abs(h) ** 2, axis=-1), cfg.N * beta, rtol=1e-13)


def test_nlos_gain():
    cfg = ScenarioConfig()
    assert nlos_lsf(_geom([[100.0]]), np.ones((1, 1)), cfg)[0, 0] == pytest.approx(8.9125e-12, rel=1e-14)
    d = np.array([[7.0, 55.0]])
    x_los, x_nlos = np.array([[1.3, 0.4]]), np.array([[0.8, 2.5]])
    ratio = nlos_lsf(_geom(d), x_nlos, cfg) / los_channel(_geom(d), x_los, cfg)[0]
    np.testing.assert_allclose(ratio, d ** (2 - cfg.gamma) * x_nlos / x_los, rtol=1e-13)


# spatial correlation


def _brute_force_correlation(phi_bar, theta_bar, sigma, N, dl, n=4001):
    """Trapezoid rule on a dense uniform grid over the integration box."""
    phi = np.linspace(-np.pi, np.pi, n)
    theta = np.linspace(-np.pi / 2 + 1e-9, np.pi / 2 - 1e-9, n)
    f_phi = np.exp(-0.5 * ((phi - phi_bar) / sigma) ** 2)
    f_theta = np.exp(-0.5 * ((theta - theta_bar) / sigma) ** 2)
    keep_p, keep_t = f_phi > 1e-300, f_theta > 1e-300
    phi, f_phi = phi[keep_p], f_phi[keep_p]
    theta, f_theta = theta[keep_t], f_theta[keep_t]
    P, T = np.meshgrid(phi, theta, indexing="ij")
    w = np.outer(f_phi, f_theta)
    u = np.sin(P) / np.cos(T)
    mass = np.trapezoid(np.trapezoid(w, theta, axis=1), phi)
    R = np.empty((N, N), dtype=complex)
    for m in range(N):
        for k in range(N):
            g = w * np.exp(-2j * np.pi * dl * (m - k) * u)
            R[m, k] = np.trapezoid(np.trapezoid(g, theta, axis=1), phi) / mass
    return R


@pytest.mark.parametrize("phi_bar, theta_bar", [(0.3, 0.2), (-1.0, 0.05), (1.2, 0.6)])
def test_quadrature_matches_dense_grid(phi_bar, theta_bar):
    sigma = math.radians(10.0)
    R = spatial_correlation(1.0, phi_bar, theta_bar, sigma, sigma, 4, 0.5)
    ref = _brute_force_correlation(phi_bar, theta_bar, sigma, 4, 0.5)
    assert np.linalg.norm(R - ref) / np.linalg.norm(ref) < 1e-5


def test_correlation_degenerate_is_rank_one():
    R = spatial_correlation(2e-9, 0.4, 0.2, 0.0, 0.0, 4, 0.5)
    a = array_response(0.4, 0.2, 4, 0.5)
    np.testing.assert_allclose(R, 2e-9 * np.outer(a, np.conj(a)), rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-1.5, 1.5),
    st.floats(0.01, 1.2),
    st.floats(0.01, 0.5),
    st.integers(1, 8),
)
def test_correlation_invariants(phi_bar, theta_bar, sigma, N):
    beta = 3e-10
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureWarning)
        R = spatial_correlation(beta, phi_bar, theta_bar, sigma, sigma, N, 0.5)
    assert np.allclose(R, np.conj(R.T), rtol=0, atol=1e-25)
    assert np.min(np.linalg.eigvalsh(R)) >= -1e-10 * np.trace(R).real
    assert np.trace(R).real == pytest.approx(N * beta, rel=1e-2)
    for lag in range(N):
        diag = np.diagonal(R, offset=-lag)
        assert np.allclose(diag, diag[0], rtol=0, atol=1e-22)
    assert np.allclose(np.diag(R).real, beta, rtol=1e-3)


def test_batched_correlation_shape():
    beta = np.full((2, 3), 1e-9)
    R = spatial_correlation(beta, np.zeros((2, 3)), np.full((2, 3), 0.1), 0.17, 0.17, 4, 0.5)
    assert R.shape == (2, 3, 4, 4)


def test_nonconvergence_warns():
    with pytest.warns(QuadratureWarning):
        spatial_correlation(1.0, 0.5, 1.45, 0.17, 0.17, 8, 0.5, quad_points=20, tol=1e-14)


# statistics and realizations


def _stats(cfg, seed=0):
    rng = np.random.default_rng(seed)
    topo = build_topology(cfg, rng)
    g = link_geometry(topo)
    alpha = sample_visibility(g, rng)
    shadows = draw_shadow_fields(topo, g, cfg, rng)
    return channel_statistics(g, alpha, shadows, cfg)


def test_statistics_invariants():
    cfg = ScenarioConfig(K=5, L=8)
    s = _stats(cfg, 4)
    N = cfg.N
    np.testing.assert_allclose(np.sum(np.abs(s.h_bar) ** 2, axis=-1), s.alpha * N * s.beta_los, rtol=1e-12)
    np.testing.assert_allclose(s.beta, s.alpha * s.beta_los + s.beta_nlos)
    np.testing.assert_allclose(np.trace(s.R, axis1=2, axis2=3).real / N, s.beta_nlos, rtol=1e-10)
    assert np.all(s.h_bar[s.alpha == 0] == 0)
    np.testing.assert_allclose(s.R_sqrt @ s.R_sqrt, s.R, atol=1e-12 * np.max(np.abs(s.R)))


def test_zero_covariance_realization_is_mean():
    rng = np.random.default_rng(0)
    h_bar = rng.standard_normal((2, 3, 4)) + 0j
    s = make_stats(np.zeros((2, 3, 4, 4)), h_bar=h_bar, alpha=np.ones((2, 3)), beta_los=np.ones((2, 3)))
    h = sample_channel(s, rng, 5)
    assert np.array_equal(h, np.broadcast_to(h_bar, h.shape))


def test_realization_moments():
    rng = np.random.default_rng(7)
    R = random_covariances(rng, 1, 2, 4, scale=1.0)
    h_bar = np.array([[[1.0, 1j, -0.5, 0.2], [0.0, 0.0, 0.0, 0.0]]])
    beta_los = np.sum(np.abs(h_bar) ** 2, axis=-1) / 4
    s = make_stats(R, h_bar=h_bar, alpha=[[1, 0]], beta_los=beta_los)
    h = sample_channel(s, np.random.default_rng(8), 100_000)
    mean = h.mean(axis=0)
    assert np.linalg.norm(mean[0, 0] - h_bar[0, 0]) < 0.01 * np.linalg.norm(h_bar[0, 0])
    for l in range(2):
        x = h[:, 0, l] - h_bar[0, l]
        emp = x.T @ np.conj(x) / x.shape[0]
        assert np.linalg.norm(emp - R[0, l]) / np.linalg.norm(R[0, l]) < 0.03
    power = np.mean(np.sum(np.abs(h) ** 2, axis=-1), axis=0) / 4
    np.testing.assert_allclose(power, s.beta, rtol=0.02)


def test_statistics_round_trip(tmp_path):
    s = _stats(ScenarioConfig(K=3, L=4), 2)
    save_statistics(s, tmp_path / "stats.npz")
    t = load_statistics(tmp_path / "stats.npz")
    assert t.checksum() == s.checksum()
    assert np.array_equal(t.R_sqrt, s.R_sqrt)
