import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bubbledyn.errors import InvalidParameter
from bubbledyn.gaussian import (
    GaussianLaw,
    chi2_divergence,
    covariance_schedule,
    density,
    flow_matrix,
    relaxation_rate,
    stationary_law,
    transition_cov,
    transition_law,
    turning_cov,
    turning_transition_law,
)
from bubbledyn.model import ModelParams

from .oracles import (
    chi2_by_quadrature,
    sigma_quadrature,
    sigma_stationary_lyapunov,
    turning_cov_quadrature,
)

osc = st.tuples(st.floats(0.1, 4.0), st.floats(0.2, 15.0), st.floats(0.1, 3.0)).filter(
    lambda p: p[0] < 3.9 * p[1])


def test_stationary_reference(ref):
    S = stationary_law(ref).cov
    np.testing.assert_allclose(S, [[3, -12.5], [-12.5, 62.5]], rtol=1e-12)
    np.testing.assert_allclose(S, sigma_stationary_lyapunov(1, 5, 1), rtol=1e-10)
    np.testing.assert_allclose(transition_cov(ref, 60.0), sigma_quadrature(1, 5, 1, 60.0), rtol=1e-8)


def test_t_zero_is_point_mass(ref):
    law = transition_law(ref, [1.0, 2.0], 0.0)
    np.testing.assert_array_equal(law.mean, [1, 2])
    np.testing.assert_array_equal(law.cov, np.zeros((2, 2)))
    with pytest.raises(InvalidParameter):
        density(ref, [1, 2], 0.0, [1, 2])


@settings(max_examples=40, deadline=None)
@given(osc, st.floats(0.2, 8.0))
def test_closed_form_cov_matches_quadrature(p, t):
    a, b, c = p
    S = covariance_schedule(ModelParams(a, b, c)).Sigma(t)
    Q = sigma_quadrature(a, b, c, t)
    scale = np.sqrt(np.outer(np.diag(Q), np.diag(Q)))
    assert np.max(np.abs(S - Q) / scale) < 1e-7


@settings(max_examples=40, deadline=None)
@given(osc, st.floats(1e-4, 8.0))
def test_transition_cov_matches_quadrature_at_all_times(p, t):
    a, b, c = p
    S = transition_cov(ModelParams(a, b, c), t)
    Q = sigma_quadrature(a, b, c, t)
    scale = np.sqrt(np.outer(np.diag(Q), np.diag(Q)))
    assert np.max(np.abs(S - Q) / scale) < 1e-8


@settings(max_examples=30, deadline=None)
@given(osc, st.floats(0.05, 3.0), st.floats(0.05, 3.0))
def test_chapman_kolmogorov(p, s, t):
    params = ModelParams(*p)
    F = flow_matrix(params, t)
    lhs = transition_cov(params, s + t)
    rhs = F @ transition_cov(params, s) @ F.T + transition_cov(params, t)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-8, atol=1e-12 * np.abs(lhs).max())
    np.testing.assert_allclose(flow_matrix(params, s + t), flow_matrix(params, s) @ F, rtol=1e-9, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(osc)
def test_cov_is_psd_and_increasing(p):
    params = ModelParams(*p)
    prev = np.zeros((2, 2))
    for t in (0.1, 0.5, 2.0, 10.0):
        S = transition_cov(params, t)
        assert np.linalg.eigvalsh(S).min() >= -1e-10 * np.abs(S).max()
        assert np.linalg.eigvalsh(S - prev).min() >= -1e-9 * np.abs(S).max()
        prev = S


def test_turning_cov_values():
    S = turning_cov(0.0, math.pi)
    assert S[0, 0] == pytest.approx(math.pi, rel=1e-12)
    np.testing.assert_allclose(S, turning_cov_quadrature(1e-12, math.pi), rtol=1e-9, atol=1e-10)
    S = turning_cov(0.5, 1.0)
    expect = math.exp(-1) * (math.cos(2) + 0.5 * math.sin(2)) / 2.5 - 1 / 2.5
    assert S[0, 1] == pytest.approx(expect, rel=1e-12)
    val, _ = integrate.quad(lambda s: -math.exp(-s) * math.sin(2 * s), 0, 1)
    assert S[0, 1] == pytest.approx(val, rel=1e-10)


@pytest.mark.parametrize("rho", [0.0, 1e-9, 1e-7, 2e-6, 0.05, 0.2294157338705618, 1.5])
@pytest.mark.parametrize("t", [1e-3, 0.3, 2.0, 7.0])
def test_turning_cov_against_quadrature(rho, t):
    S = turning_cov(rho, t)
    Q = turning_cov_quadrature(rho, t)
    scale = np.sqrt(np.outer(np.diag(Q), np.diag(Q)))
    assert np.max(np.abs(S - Q) / scale) < 1e-8


def test_turning_transition_law_mean():
    law = turning_transition_law(0.3, [1.0, 0.0], math.pi / 2)
    np.testing.assert_allclose(law.mean, [0.0, math.exp(-0.3 * math.pi / 2)], atol=1e-15)


def test_density_integrates_to_one(ref):
    law = transition_law(ref, [1.0, 0.0], 0.7)
    sd = np.sqrt(np.diag(law.cov))
    xs = np.linspace(law.mean[0] - 9 * sd[0], law.mean[0] + 9 * sd[0], 401)
    ys = np.linspace(law.mean[1] - 9 * sd[1], law.mean[1] + 9 * sd[1], 401)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    p = density(ref, [1.0, 0.0], 0.7, np.stack([X, Y], -1))
    total = integrate.trapezoid(integrate.trapezoid(p, ys, axis=1), xs)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_relative_density_is_ratio(ref):
    z = np.array([0.3, -1.0])
    rel = density(ref, [1, 0], 1.0, z, relative=True)
    st_ = stationary_law(ref)
    d = z - st_.mean
    p_inf = math.exp(-0.5 * d @ np.linalg.solve(st_.cov, d)) / (2 * math.pi * math.sqrt(np.linalg.det(st_.cov)))
    assert rel == pytest.approx(density(ref, [1, 0], 1.0, z) / p_inf, rel=1e-10)


def test_chi2_examples():
    one = GaussianLaw(np.zeros(1), np.eye(1))
    assert chi2_divergence(one, one) == 0.0
    j = chi2_divergence(GaussianLaw(np.zeros(1), [[1.2]]), one)
    assert j == pytest.approx(math.sqrt(1 / math.sqrt(0.96) - 1), rel=1e-12)
    assert j == pytest.approx(0.1435992, abs=1e-7)
    assert j == pytest.approx(chi2_by_quadrature(1.2, 1.0), rel=1e-8)
    assert chi2_divergence(GaussianLaw(np.zeros(1), [[3.0]]), one) == math.inf


def test_chi2_monte_carlo(rng):
    # E_mu[(dmu~/dmu - 1)^2] by sampling, 1-D (1.2 vs 1)
    x = rng.standard_normal(2_000_000)
    ratio = np.exp(-x * x / 2.4) / math.sqrt(1.2) / np.exp(-x * x / 2)
    j = math.sqrt(np.mean((ratio - 1) ** 2))
    assert j == pytest.approx(0.1435992, rel=0.02)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 1.9), st.floats(0.3, 1.9), st.floats(-0.5, 0.5))
def test_chi2_2d_matches_quadrature_when_diagonalizable(s1, s2, corr):
    # a 2-D law with independent coordinates factorizes: 1 + J^2 is a product
    S = np.diag([1.0, 1.0])
    St = np.diag([s1, s2])
    j = chi2_divergence(GaussianLaw(np.zeros(2), St), GaussianLaw(np.zeros(2), S))
    j1, j2 = chi2_by_quadrature(s1, 1.0), chi2_by_quadrature(s2, 1.0)
    assert 1 + j * j == pytest.approx((1 + j1 * j1) * (1 + j2 * j2), rel=1e-7)


def test_chi2_rejects_means():
    with pytest.raises(InvalidParameter):
        chi2_divergence(GaussianLaw(np.ones(1), np.eye(1)), GaussianLaw(np.zeros(1), np.eye(1)))


def test_relaxation_rate(ref):
    fit = relaxation_rate(ref, np.linspace(4, 12, 81))
    assert fit.target == -1.0
    assert fit.relative_error < 0.05


def test_gaussian_law_validation():
    with pytest.raises(InvalidParameter):
        GaussianLaw(np.zeros(2), [[1, 0.5], [0.4, 1]])
    with pytest.raises(InvalidParameter):
        GaussianLaw(np.zeros(2), [[1, 2], [2, 1]])
