import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubbledyn.errors import InvalidParameter
from bubbledyn.hitting import (
    check_bounds,
    compare_with_matched_ou,
    default_window,
    fit_rate,
    noiseless_return_time,
    return_time_samples,
    sector_exit_samples,
    survival_curve,
    theorem_bounds,
)
from bubbledyn.model import ModelParams, sector_angles, spectral

from .oracles import first_zero_dense


@pytest.mark.parametrize("z0", [(1.0, 0.0), (0.5, 2.0), (2.0, -3.0)])
def test_noiseless_return_time(z0):
    p = ModelParams(1, 5, 0)
    tau = first_zero_dense(1, 5, np.array(z0))
    assert noiseless_return_time(p, z0) == pytest.approx(tau, abs=1e-12)
    s = return_time_samples(p, z0, 1e-3, 5.0, 3)
    assert not s.censored.any()
    np.testing.assert_allclose(s.tau, tau, atol=1e-5)


def test_return_time_rejects_bad_start(ref):
    with pytest.raises(InvalidParameter):
        return_time_samples(ref, [0.0, 1.0], 0.01, 1.0, 10)
    with pytest.raises(InvalidParameter):
        sector_exit_samples(ref, (0, 1), [1.0, 2.0], 0.01, 1.0, 10)


def test_survival_trivial():
    c = survival_curve(np.full(200, 10.0), np.linspace(0, 5, 11))
    np.testing.assert_array_equal(c.survival, 1.0)
    with pytest.warns(UserWarning, match="only 1 samples"):
        c = survival_curve(np.array([1.0]), np.array([0.0, 0.5, 0.999, 1.0]))
    np.testing.assert_array_equal(c.survival, [1, 1, 1, 0])
    with pytest.raises(InvalidParameter):
        survival_curve(np.array([]))


def test_survival_starts_at_one_and_is_monotone(ref):
    s = return_time_samples(ref, [1, 0], 0.005, 6.0, 2000, seed=4)
    c = survival_curve(s)
    assert c.survival[0] == 1.0
    assert np.all(np.diff(c.survival) <= 0)
    assert np.all((c.ci_lo <= c.survival) & (c.survival <= c.ci_hi))


def test_exponential_self_test(rng):
    tau = rng.exponential(0.5, 100_000)
    c = survival_curve(tau, np.linspace(0, 4, 401))
    fit = fit_rate(c, (0.1, 3.0))
    assert fit.lambda_hat == pytest.approx(2.0, abs=0.05)
    assert abs(fit.lambda_hat - 2.0) < 3 * fit.stderr + 1e-3


def test_fit_rate_window_errors(rng):
    c = survival_curve(rng.exponential(1.0, 500), np.linspace(0, 3, 31))
    with pytest.raises(InvalidParameter):
        fit_rate(c, (10.0, 20.0))
    with pytest.raises(InvalidParameter):
        fit_rate(c)


def test_half_plane_sector_reproduces_return_time(ref):
    a = return_time_samples(ref, [1, 0], 0.01, 5.0, 500, seed=9)
    b = sector_exit_samples(ref, ("-inf", "inf"), [1, 0], 0.01, 5.0, 500, seed=9)
    np.testing.assert_array_equal(a.tau, b.tau)


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 0.4), st.floats(0.6, 4))
def test_sector_nesting_pathwise(a1, a2):
    p = ModelParams(1, 5, 1)
    z0 = [1.0, 0.5]
    half = return_time_samples(p, z0, 0.01, 4.0, 64, seed=2)
    sub = sector_exit_samples(p, (a1, a2), z0, 0.01, 4.0, 64, seed=2)
    inner = sector_exit_samples(p, (a1 / 2 + 0.25, a2 / 2 + 0.25), z0, 0.01, 4.0, 64, seed=2)
    assert np.all(sub.tau <= half.tau + 1e-12)
    assert np.all(inner.tau <= sub.tau + 1e-12)


def test_sector_rate_exceeds_half_plane(ref):
    sec = sector_angles(ref, -1, 2)
    half = return_time_samples(ref, [1, 0], 0.002, 8.0, 4000, seed=5)
    sub = sector_exit_samples(ref, sec, [1, 0], 0.0005, 1.0, 4000, seed=5)
    w = spectral(ref).omega
    fh = fit_rate(survival_curve(half), omega=w)
    cs = survival_curve(sub)
    fs = fit_rate(cs, omega=w)
    assert fs.lambda_hat > fh.lambda_hat
    rep = check_bounds(cs, fs, ref, sec)
    assert rep["rate_at_least_bound"] and rep["survival_below_envelope"]


def test_theorem_bounds_values(ref):
    b = theorem_bounds(ref)
    assert b["lower"] == pytest.approx(math.log(2) / math.pi * math.sqrt(4.75))
    assert b["upper_4omega"] == pytest.approx(8.717798, abs=1e-6)
    assert b["upper_sharp"] == pytest.approx(3 * math.sqrt(4.75) + 1)
    assert theorem_bounds(ModelParams(1, 1.7))["upper_sharp"] is None


def test_default_window_fallback(rng):
    c = survival_curve(rng.exponential(0.01, 2000))
    lo, hi = default_window(c, omega=1.0)
    assert lo < hi


def test_u_turn_time(ref):
    sec = sector_angles(ref, 0, 1)
    assert sec.u_turn_time == pytest.approx((sec.theta_tilde1 - sec.theta_tilde2) / spectral(ref).omega)


@pytest.mark.slow
def test_matched_ou_comparison(ref):
    cmp = compare_with_matched_ou(ref, n_paths=4000, seed=1)
    assert cmp.bubble_faster and cmp.separated
    again = compare_with_matched_ou(ref, n_paths=4000, seed=1)
    assert again.bubble.lambda_hat == cmp.bubble.lambda_hat


@pytest.mark.slow
def test_dt_refinement(ref):
    w = spectral(ref).omega
    kw = dict(horizon=8.0, n_paths=20_000, seed=3)
    f1 = fit_rate(survival_curve(return_time_samples(ref, [1, 0], 0.01 / w, **kw)), omega=w)
    f2 = fit_rate(survival_curve(return_time_samples(ref, [1, 0], 0.005 / w, **kw)), omega=w)
    assert abs(f1.lambda_hat - f2.lambda_hat) < math.hypot(f1.stderr, f2.stderr)
