import math

import numpy as np
import pytest

from bubbledyn.errors import InvalidParameter
from bubbledyn.gaussian import stationary_law
from bubbledyn.persistence import conditioned_stationary_cloud, fleming_viot, qsd_exponentiality


@pytest.fixture(scope="module")
def fv():
    from bubbledyn.model import ModelParams

    return fleming_viot(ModelParams(1, 5, 1), n_particles=800, t_run=15.0, t_burn=3.0, seed=3)


def test_fv_in_bounds(fv):
    assert fv.in_bounds
    assert fv.lambda0_hat > 0 and fv.stderr > 0
    assert fv.conjecture_ratio == pytest.approx(fv.lambda0_hat / (math.log(2) / math.pi * math.sqrt(4.75)))


def test_fv_cloud_in_domain(fv):
    assert fv.cloud.shape == (800, 2)
    assert np.all(fv.cloud[:, 0] > 0)
    assert fv.cloud[:, 0].mean() > 0


def test_fv_kill_rate_stable(fv):
    h1, h2 = fv.half_rates
    se_half = fv.stderr * math.sqrt(2)
    assert abs(h1 - h2) < 3 * math.hypot(se_half, se_half)


def test_fv_deterministic(ref):
    a = fleming_viot(ref, n_particles=200, t_run=2.0, t_burn=0.5, seed=1)
    b = fleming_viot(ref, n_particles=200, t_run=2.0, t_burn=0.5, seed=1)
    assert a.lambda0_hat == b.lambda0_hat
    np.testing.assert_array_equal(a.cloud, b.cloud)


def test_fv_validation(ref):
    with pytest.raises(InvalidParameter):
        fleming_viot(ref, n_particles=50)
    with pytest.raises(InvalidParameter):
        fleming_viot(ref, n_particles=200, t_burn=2.0, t_run=1.0)
    with pytest.raises(InvalidParameter):
        fleming_viot(ref.with_c(0.0), n_particles=200)
    with pytest.raises(InvalidParameter):
        fleming_viot(ref, n_particles=200, init=np.array([[-1.0, 0.0]]))


def test_conditioned_cloud(ref, rng):
    z = conditioned_stationary_cloud(ref, 50_000, rng)
    assert np.all(z[:, 0] > 0)
    # reflection keeps the second moments of the stationary law
    np.testing.assert_allclose(np.cov(z.T, bias=True) + np.outer(z.mean(0), z.mean(0)), stationary_law(ref).cov,
                               rtol=0.05)


def test_qsd_start_is_exponential(fv, ref):
    rep = qsd_exponentiality(ref, fv.cloud, 0.005, n_paths=3000, seed=4, lambda0=fv.lambda0_hat)
    assert rep.ks_pvalue > 0.01
    assert rep.memoryless


def test_dirac_start_is_not_exponential(ref):
    rep = qsd_exponentiality(ref, [[1.0, 0.0]], 0.005, n_paths=3000, seed=4)
    assert rep.ks_pvalue < 0.01
