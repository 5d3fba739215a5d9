"""Fleming-Viot estimation of the persistence rate of {x > 0} and of the
quasi-stationary law, with an exponentiality check of exit times started
from that law."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import _kernels
from .errors import InvalidParameter, SimulationAborted
from .gaussian import psd_sqrt, stationary_law
from .hitting import exit_times, theorem_bounds
from .model import ModelParams, require_oscillatory
from .simulate import INITIAL, NORMALS, UNIFORMS, as_policy, exact_step

__all__ = ["FVResult", "fleming_viot", "ExponentialityReport", "qsd_exponentiality", "conditioned_stationary_cloud"]

CHUNK_STEPS = 128


@dataclass(frozen=True)
class FVResult:
    lambda0_hat: float
    stderr: float
    cloud: np.ndarray
    n_particles: int
    dt: float
    t_burn: float
    t_run: float
    batch_rates: np.ndarray
    half_rates: tuple
    kills: np.ndarray
    bounds: dict
    seed: Optional[int]

    @property
    def conjecture_ratio(self) -> float:
        """lambda0_hat over (ln 2 / pi) omega."""
        return self.lambda0_hat / self.bounds["lower"]

    @property
    def in_bounds(self) -> bool:
        up = self.bounds["upper_sharp"] or self.bounds["upper_4omega"]
        return self.bounds["lower"] <= self.lambda0_hat <= up

    def as_dict(self) -> dict:
        return {
            "lambda0_hat": self.lambda0_hat,
            "stderr": self.stderr,
            "conjecture_ratio": self.conjecture_ratio,
            "bounds": self.bounds,
            "in_bounds": self.in_bounds,
            "half_rates": list(self.half_rates),
            "settings": {"n_particles": self.n_particles, "dt": self.dt, "t_burn": self.t_burn,
                         "t_run": self.t_run, "n_batches": int(self.batch_rates.size), "seed": self.seed},
        }


def conditioned_stationary_cloud(params: ModelParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws of the stationary law conditioned on x > 0 (the law is symmetric, so reflect)."""
    L = psd_sqrt(stationary_law(params).cov)
    z = rng.standard_normal((n, 2)) @ L.T
    z[z[:, 0] < 0] *= -1.0
    z[z[:, 0] == 0, 0] = np.finfo(float).tiny
    return z


def fleming_viot(params: ModelParams, n_particles: int = 5000, dt: Optional[float] = None,
                 t_burn: Optional[float] = None, t_run: Optional[float] = None, seed=0,
                 n_batches: int = 20, init: Optional[np.ndarray] = None) -> FVResult:
    """Particles advance by exact steps; those with x <= 0 jump onto a uniform survivor.

    lambda0_hat = (kills after burn-in) / (n (t_run - t_burn)); the stderr is
    from batch means over ``n_batches`` equal slices of the post-burn-in run.
    Exits are tested at step ends only, so dt is the bias knob (default
    0.005/omega); burn-in defaults to 10/omega and the run ends at 60/omega.
    """
    sp = require_oscillatory(params)
    if params.c == 0:
        raise InvalidParameter("invariant c>0 violated: a noiseless ensemble never resamples")
    if n_particles < 100:
        raise InvalidParameter(f"invariant n_particles>=100 violated (n={n_particles})")
    dt = dt if dt is not None else 0.005 / sp.omega
    t_burn = t_burn if t_burn is not None else 10.0 / sp.omega
    t_run = t_run if t_run is not None else 60.0 / sp.omega
    if not (t_run > t_burn > 0):
        raise InvalidParameter(f"invariant t_run>t_burn>0 violated (t_burn={t_burn}, t_run={t_run})")
    if not dt > 0:
        raise InvalidParameter(f"invariant dt>0 violated (dt={dt!r})")
    policy = as_policy(seed)
    key = policy.key
    g_init = policy.stream(0, INITIAL, key)
    g_norm = policy.stream(0, NORMALS, key)
    g_unif = policy.stream(0, UNIFORMS, key)
    if init is None:
        z = conditioned_stationary_cloud(params, n_particles, g_init)
    else:
        init = np.asarray(init, dtype=float)
        if np.any(init[:, 0] <= 0):
            raise InvalidParameter("initial particles must satisfy x>0")
        z = init[g_init.integers(0, init.shape[0], n_particles)].copy()
    z = np.ascontiguousarray(z)
    Phi, L = exact_step(params, dt)
    n_burn = int(round(t_burn / dt))
    n_steps = int(round(t_run / dt))
    kills = np.empty(n_steps, dtype=np.int64)
    done = 0
    while done < n_steps:
        m = min(CHUNK_STEPS, n_steps - done)
        normals = g_norm.standard_normal((m, n_particles, 2))
        unif = g_unif.random((m, n_particles))
        k = _kernels.fleming_viot_steps(Phi, L, z, normals, unif)
        if np.any(k < 0):
            at = done + int(np.argmax(k < 0))
            raise SimulationAborted(f"all {n_particles} particles left {{x>0}} in the same step (step {at})")
        kills[done:done + m] = k
        done += m
    run = kills[n_burn:]
    T = run.size * dt
    lam = run.sum() / (n_particles * T)
    nb = max(2, min(int(n_batches), run.size))
    edges = np.linspace(0, run.size, nb + 1).astype(int)
    br = np.array([run[edges[i]:edges[i + 1]].sum() / (n_particles * (edges[i + 1] - edges[i]) * dt)
                   for i in range(nb)])
    se = float(br.std(ddof=1) / math.sqrt(nb))
    h = run.size // 2
    halves = (run[:h].sum() / (n_particles * h * dt), run[h:].sum() / (n_particles * (run.size - h) * dt))
    return FVResult(float(lam), se, z.copy(), n_particles, dt, t_burn, t_run, br, tuple(map(float, halves)),
                    kills, theorem_bounds(params), policy.seed)


@dataclass(frozen=True)
class ExponentialityReport:
    ks_statistic: float
    ks_pvalue: float
    lambda_ref: float
    lambda_mle: float
    lambda_mle_stderr: float
    lambda_after: float
    lambda_after_stderr: float
    t_cut: float
    n_paths: int
    n_censored: int

    @property
    def memoryless(self) -> bool:
        """Rate on the excess over t_cut agrees with the overall rate within 2 stderr."""
        se = math.hypot(self.lambda_mle_stderr, self.lambda_after_stderr)
        return abs(self.lambda_after - self.lambda_mle) <= 2.0 * se

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {"memoryless": self.memoryless}


def qsd_exponentiality(params: ModelParams, qsd_sample, dt: float, horizon: Optional[float] = None,
                       n_paths: int = 10000, seed=0, lambda0: Optional[float] = None,
                       t_cut: float = 1.0) -> ExponentialityReport:
    """Exit times of fresh paths started from resampled cloud points, tested against Exp(lambda0).

    Without ``lambda0`` the reference rate is the MLE of the sampled times.
    A single-point sample gives the Dirac start used as a negative control.
    """
    sp = require_oscillatory(params)
    pts = np.atleast_2d(np.asarray(qsd_sample, dtype=float))
    if np.any(pts[:, 0] <= 0):
        raise InvalidParameter("start points must satisfy x>0")
    policy = as_policy(seed)
    g = policy.stream(1, INITIAL, policy.key)
    z0 = pts[g.integers(0, pts.shape[0], n_paths)]
    ref = lambda0
    if horizon is None:
        horizon = 25.0 / (ref if ref else math.log(2.0) / math.pi * sp.omega)
    Phi, L = exact_step(params, dt)
    es = exit_times(Phi, L, np.array([[1.0, 0.0]]), z0, dt, horizon, n_paths, policy)
    tau = es.tau
    n_c = es.n_censored
    # censored times enter the exponential MLE as exposure only
    lam = (n_paths - n_c) / tau.sum()
    lam_se = lam / math.sqrt(max(n_paths - n_c, 1))
    if ref is None:
        ref = lam
    tail = tau[tau > t_cut]
    ev = int(np.count_nonzero(~es.censored[tau > t_cut]))
    lam_after = ev / (tail - t_cut).sum() if tail.size else math.nan
    lam_after_se = lam_after / math.sqrt(max(ev, 1)) if tail.size else math.nan
    ks = stats.kstest(es.uncensored, "expon", args=(0.0, 1.0 / ref))
    return ExponentialityReport(float(ks.statistic), float(ks.pvalue), float(ref), float(lam), float(lam_se),
                                float(lam_after), float(lam_after_se), float(t_cut), int(n_paths), int(n_c))
