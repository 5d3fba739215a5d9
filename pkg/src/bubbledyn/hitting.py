"""First-passage Monte Carlo: return times to {x = 0}, sector exits, survival
curves with exact binomial bands, exponential tail fits and bound checks."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .errors import InvalidParameter
from .model import AngularSector, ModelParams, Slope, drift_system, require_oscillatory, sector_angles
from .simulate import NORMALS, UNIFORMS, RngPolicy, as_policy, exact_step, matched_ou_theta

__all__ = [
    "ExitSamples",
    "SurvivalCurve",
    "RateFit",
    "exit_times",
    "return_time_samples",
    "sector_exit_samples",
    "ou_return_time_samples",
    "survival_curve",
    "fit_rate",
    "default_window",
    "theorem_bounds",
    "check_bounds",
    "compare_with_matched_ou",
    "noiseless_return_time",
]

CHUNK_STEPS = 256


@dataclass(frozen=True)
class ExitSamples:
    tau: np.ndarray  # exit times; horizon for censored paths
    censored: np.ndarray
    horizon: float
    dt: float
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return self.tau.size

    @property
    def n_censored(self) -> int:
        return int(self.censored.sum())

    @property
    def uncensored(self) -> np.ndarray:
        return self.tau[~self.censored]


def exit_times(Phi, L, G, z0, dt, horizon, n_paths, stream=0, threads=1, bb_var=None,
               first_path=0) -> ExitSamples:
    """First time the exact-stepped paths leave {G z > 0} (row-wise), up to the horizon.

    Each path draws its normals from its own counter stream in consecutive
    chunks, and stops drawing once it has exited.
    """
    if not dt > 0:
        raise InvalidParameter(f"invariant dt>0 violated (dt={dt!r})")
    if not horizon > 0:
        raise InvalidParameter(f"invariant horizon>0 violated (horizon={horizon!r})")
    if n_paths < 1:
        raise InvalidParameter("n_paths must be >= 1")
    policy = as_policy(stream)
    key = policy.key
    Phi = np.ascontiguousarray(Phi, dtype=float)
    L = np.ascontiguousarray(L, dtype=float)
    G = np.ascontiguousarray(np.atleast_2d(G), dtype=float)
    z0 = np.asarray(z0, dtype=float)
    if z0.ndim == 1:
        z0 = np.broadcast_to(z0, (n_paths, 2))
    if np.any(z0 @ G.T <= 0):
        raise InvalidParameter("initial state must lie strictly inside the domain")
    use_bb = bb_var is not None and np.any(np.asarray(bb_var) > 0)
    bbv = np.ascontiguousarray(bb_var if use_bb else np.zeros(G.shape[0]), dtype=float)
    n_total = int(math.ceil(horizon / dt - 1e-9))
    ids = np.arange(first_path, first_path + n_paths)
    B = policy.block_size

    def run(start):
        stop = min(start + B, n_paths)
        nb = stop - start
        z = np.ascontiguousarray(z0[start:stop], dtype=float).copy()
        alive = np.ones(nb, dtype=np.uint8)
        tau = np.full(nb, horizon)
        gens = [policy.stream(i, NORMALS, key) for i in ids[start:stop]]
        ugens = [policy.stream(i, UNIFORMS, key) for i in ids[start:stop]] if use_bb else None
        done = 0
        while done < n_total and alive.any():
            m = min(CHUNK_STEPS, n_total - done)
            normals = np.zeros((m, nb, 2))
            unif = np.zeros((m if use_bb else 0, nb))
            for j in np.flatnonzero(alive):
                normals[:, j, :] = gens[j].standard_normal((m, 2))
                if use_bb:
                    unif[:, j] = ugens[j].random(m)
            _kernels.exit_scan(Phi, L, G, z, alive, tau, done * dt, dt, normals, bbv, unif)
            done += m
        tau = np.minimum(tau, horizon)
        return tau, alive.astype(bool)

    starts = list(range(0, n_paths, B))
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    tau = np.concatenate([p[0] for p in parts])
    cens = np.concatenate([p[1] for p in parts])
    return ExitSamples(tau, cens, float(horizon), float(dt), policy.seed)


def _bb_var(params: ModelParams, G) -> np.ndarray:
    Q = drift_system(params).Q
    return np.einsum("ki,ij,kj->k", G, Q, G)


def return_time_samples(params: ModelParams, z0, dt: float, horizon: float, n_paths: int, seed=0,
                        threads: int = 1, bb_correction: bool = False) -> ExitSamples:
    """Samples of tau = inf{t >= 0 : X_t = 0} from z0 with x0 > 0.

    The crossing time is linearly interpolated inside the step where X changes
    sign. ``bb_correction`` adds the Brownian-bridge probability of an unseen
    crossing; X carries no direct noise in the bubble model at the time scale of
    a step beyond c dB, so this is only approximate and off by default.
    """
    z0 = np.asarray(z0, dtype=float)
    if not z0[0] > 0:
        raise InvalidParameter(f"invariant x0>0 violated (x0={z0[0]!r})")
    G = np.array([[1.0, 0.0]])
    Phi, L = exact_step(params, dt)
    bb = _bb_var(params, G) if bb_correction else None
    return exit_times(Phi, L, G, z0, dt, horizon, n_paths, seed, threads, bb)


def sector_exit_samples(params: ModelParams, sector, z0, dt: float, horizon: float, n_paths: int, seed=0,
                        threads: int = 1, bb_correction: bool = False) -> ExitSamples:
    if not isinstance(sector, AngularSector):
        sector = sector_angles(params, *sector)
    z0 = np.asarray(z0, dtype=float)
    if not sector.contains(z0):
        raise InvalidParameter(f"initial state {z0.tolist()} is not strictly inside the sector")
    G = sector.constraints()
    Phi, L = exact_step(params, dt)
    bb = _bb_var(params, G) if bb_correction else None
    return exit_times(Phi, L, G, z0, dt, horizon, n_paths, seed, threads, bb)


def ou_return_time_samples(params: ModelParams, x0: float, dt: float, horizon: float, n_paths: int, seed=0,
                           threads: int = 1, bb_correction: bool = True) -> ExitSamples:
    """Return times to 0 of the matched OU dX = -theta X dt + c dB (exact AR(1) steps)."""
    if not x0 > 0:
        raise InvalidParameter(f"invariant x0>0 violated (x0={x0!r})")
    th = matched_ou_theta(params)
    phi = math.exp(-th * dt)
    sd = params.c * math.sqrt(-math.expm1(-2.0 * th * dt) / (2.0 * th))
    Phi = np.array([[phi, 0.0], [0.0, 0.0]])
    L = np.array([[sd, 0.0], [0.0, 0.0]])
    G = np.array([[1.0, 0.0]])
    bb = np.array([params.c**2]) if bb_correction else None
    return exit_times(Phi, L, G, np.array([x0, 0.0]), dt, horizon, n_paths, seed, threads, bb)


# ---------------------------------------------------------------- survival and fits


@dataclass(frozen=True)
class SurvivalCurve:
    t_grid: np.ndarray
    survival: np.ndarray
    n_paths: int
    n_censored: int
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    horizon: float
    tail_quantile: float  # 0.999 quantile of the uncensored times
    level: float = 0.95


def _clopper_pearson(k, n, level):
    al = 1.0 - level
    k = np.asarray(k)
    lo = np.where(k > 0, stats.beta.ppf(al / 2, np.maximum(k, 1), n - k + 1), 0.0)
    hi = np.where(k < n, stats.beta.ppf(1 - al / 2, k + 1, np.maximum(n - k, 1)), 1.0)
    return lo, hi


def survival_curve(samples, t_grid=None, level: float = 0.95) -> SurvivalCurve:
    """Empirical P(tau > t) with exact (Clopper-Pearson) pointwise bands.

    ``samples`` is an ExitSamples or a plain array of uncensored times. Censored
    paths count as survivors up to the horizon; the grid is cut at the horizon.
    """
    if isinstance(samples, ExitSamples):
        tau, cens, horizon = samples.tau, samples.censored, samples.horizon
    else:
        tau = np.asarray(samples, dtype=float).ravel()
        cens = np.zeros(tau.size, dtype=bool)
        horizon = float(tau.max()) if tau.size else 0.0
    n = tau.size
    if n == 0:
        raise InvalidParameter("survival curve needs at least one sample")
    if n < 100:
        warnings.warn(f"only {n} samples; survival bands will be wide", stacklevel=2)
    if t_grid is None:
        t_grid = np.linspace(0.0, horizon, 401)
    t_grid = np.asarray(t_grid, dtype=float)
    t_grid = t_grid[t_grid <= horizon]
    unc = np.sort(tau[~cens])
    deaths = np.searchsorted(unc, t_grid, side="right")
    k = n - deaths
    surv = k / n
    lo, hi = _clopper_pearson(k, n, level)
    q = float(np.quantile(unc, 0.999)) if unc.size else horizon
    return SurvivalCurve(t_grid, surv, n, int(cens.sum()), lo, hi, horizon, q, level)


@dataclass(frozen=True)
class RateFit:
    lambda_hat: float
    window: tuple
    stderr: float
    r_squared: float
    n_points: int
    intercept: float

    @property
    def ci(self):
        return (self.lambda_hat - 1.96 * self.stderr, self.lambda_hat + 1.96 * self.stderr)

    def as_dict(self):
        return {
            "lambda_hat": self.lambda_hat,
            "stderr": self.stderr,
            "window": list(self.window),
            "r_squared": self.r_squared,
            "n_points": self.n_points,
            "intercept": self.intercept,
            "ci95": list(self.ci),
        }


def default_window(curve: SurvivalCurve, omega: float) -> tuple:
    """[3/omega, 0.999 quantile of the uncensored times] (cut at the horizon).

    When exits are so fast that 3/omega is past most of the tail, the window
    starts at the time the survival first drops below 1/2 instead.
    """
    hi = min(curve.tail_quantile, curve.horizon)
    lo = 3.0 / omega
    if lo >= 0.8 * hi:
        below = np.flatnonzero(curve.survival < 0.5)
        lo = float(curve.t_grid[below[0]]) if below.size else 0.0
    return (lo, hi)


def fit_rate(curve: SurvivalCurve, window=None, omega: Optional[float] = None) -> RateFit:
    """Weighted least squares of ln S(t) on t over the window.

    Weights are 1/Var(ln S(t)) = n S / (1 - S). Because the curve points share
    samples, the slope stderr uses the sandwich form with the exact empirical
    covariance Cov(ln S(s), ln S(t)) = (1 - S(s)) / (n S(s)), s <= t.
    """
    if window is None:
        if omega is None:
            raise InvalidParameter("fit_rate needs a window or omega for the default window")
        window = default_window(curve, omega)
    lo, hi = float(window[0]), float(window[1])
    t, S = curve.t_grid, curve.survival
    if not (lo < hi) or lo > t[-1] or hi < t[0]:
        raise InvalidParameter(f"fit window [{lo}, {hi}] lies outside the data range [{t[0]}, {t[-1]}]")
    sel = (t >= lo) & (t <= hi) & (S > 0) & (S < 1)
    if sel.sum() < 5:
        raise InvalidParameter(f"fit window [{lo}, {hi}] holds {int(sel.sum())} usable points; need >= 5")
    tt, ss, n = t[sel], S[sel], curve.n_paths
    y = np.log(ss)
    var = (1.0 - ss) / (n * ss)
    w = 1.0 / var
    X = np.column_stack([np.ones_like(tt), tt])
    XtW = X.T * w
    M = np.linalg.inv(XtW @ X)
    beta = M @ (XtW @ y)
    smin = np.minimum.outer(tt, tt)
    Sm = np.interp(smin, tt, ss)
    cov = (1.0 - Sm) / (n * Sm)
    V = M @ (XtW @ cov @ XtW.T) @ M
    resid = y - X @ beta
    ybar = np.sum(w * y) / np.sum(w)
    r2 = 1.0 - np.sum(w * resid**2) / np.sum(w * (y - ybar) ** 2)
    return RateFit(float(-beta[1]), (lo, hi), float(math.sqrt(max(V[1, 1], 0.0))), float(r2), int(sel.sum()),
                   float(beta[0]))


# ---------------------------------------------------------------- bounds


def theorem_bounds(params: ModelParams) -> dict:
    """Analytic bounds on the persistence rate of the half-plane {x > 0}."""
    sp = require_oscillatory(params)
    w = sp.omega
    lower = math.log(2.0) / math.pi * w
    cond = (1.0 + 1.0 / math.sqrt(2.0)) * params.a <= params.b
    return {
        "omega": w,
        "lower": lower,
        "upper_4omega": 4.0 * w,
        "upper_sharp": (3.0 + params.a / w) * w if cond else None,
        "sharp_condition_holds": cond,
    }


def check_bounds(curve: SurvivalCurve, fit: RateFit, params: ModelParams, sector: Optional[AngularSector] = None) -> dict:
    """Verdicts: survival under 2 exp(-rate t) (within the band) and the fitted rate inside the bounds."""
    b = theorem_bounds(params)
    rate = b["lower"] if sector is None else sector.rate_bound
    env = 2.0 * np.exp(-rate * curve.t_grid)
    survival_ok = bool(np.all(curve.ci_lo <= env))
    worst = float(np.max(curve.survival - env))
    upper = b["upper_sharp"] if b["upper_sharp"] is not None else b["upper_4omega"]
    out = {
        "envelope_rate": rate,
        "survival_below_envelope": survival_ok,
        "max_survival_minus_envelope": worst,
        "lambda_hat": fit.lambda_hat,
        "stderr": fit.stderr,
    }
    if sector is None:
        out.update({
            "lower": b["lower"],
            "upper": upper,
            "upper_4omega": b["upper_4omega"],
            "rate_in_bounds": bool(b["lower"] <= fit.lambda_hat <= upper),
            "rate_in_theorem_sandwich": bool(b["lower"] <= fit.lambda_hat <= b["upper_4omega"]),
        })
    else:
        out.update({"sector_rate_bound": rate, "rate_at_least_bound": bool(fit.lambda_hat >= rate)})
    return out


@dataclass(frozen=True)
class OUComparison:
    bubble: RateFit
    ou: RateFit
    bubble_curve: SurvivalCurve
    ou_curve: SurvivalCurve
    bubble_samples: ExitSamples
    ou_samples: ExitSamples

    @property
    def bubble_faster(self) -> bool:
        return self.bubble.lambda_hat > self.ou.lambda_hat

    @property
    def separated(self) -> bool:
        return self.bubble.ci[0] > self.ou.ci[1]


def compare_with_matched_ou(params: ModelParams, x0: float = 1.0, dt: Optional[float] = None,
                            horizon: Optional[float] = None, n_paths: int = 20000, seed=0, threads: int = 1,
                            ou_dt: Optional[float] = None, ou_horizon: Optional[float] = None) -> OUComparison:
    sp = require_oscillatory(params)
    dt = dt or 0.01 / sp.omega
    horizon = horizon or 12.0
    th = matched_ou_theta(params)
    ou_dt = ou_dt or 0.01
    ou_horizon = ou_horizon or 12.0 / th
    pol = as_policy(seed)
    bs = return_time_samples(params, [x0, 0.0], dt, horizon, n_paths, pol, threads)
    os_ = ou_return_time_samples(params, x0, ou_dt, ou_horizon, n_paths, RngPolicy(pol.seed + 1, pol.block_size),
                                 threads)
    bc = survival_curve(bs)
    oc = survival_curve(os_)
    bf = fit_rate(bc, omega=sp.omega)
    of = fit_rate(oc, window=(2.0 / th, min(oc.tail_quantile, oc.horizon)))
    return OUComparison(bf, of, bc, oc, bs, os_)


def noiseless_return_time(params: ModelParams, z0) -> float:
    """First zero of t -> (e^{At} z0)_1 for the oscillatory noiseless flow."""
    sp = require_oscillatory(params)
    z0 = np.asarray(z0, dtype=float)
    if not z0[0] > 0:
        raise InvalidParameter(f"invariant x0>0 violated (x0={z0[0]!r})")
    B = drift_system(params).A + 0.5 * params.a * np.eye(2)
    # x(t) = e^{-at/2} (x0 cos(wt) + (B z0)_0 sin(wt)/w) = e^{-at/2} R cos(wt - phi), |phi| < pi/2
    phi = math.atan2((B @ z0)[0] / sp.omega, z0[0])
    return (math.pi / 2.0 + phi) / sp.omega
