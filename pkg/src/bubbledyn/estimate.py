"""Inference from one discretely observed price path.

Volatility comes from the quadratic variation. (a, b) come from the
continuous-time likelihood with the hidden speculative state rebuilt from the
path for each trial b; the a-direction is profiled out in closed form.
The pseudo-period is estimated twice: from the fitted drift, and from the
mean spacing of zero crossings separated by epsilon-excursions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .errors import InvalidParameter

__all__ = [
    "ObservedSeries",
    "EstimationResult",
    "CrossingSkeleton",
    "EpochComparison",
    "quadratic_variation_c",
    "y_process",
    "log_likelihood",
    "profile_a",
    "profile_loglik",
    "mle",
    "pseudo_period",
    "moment_b_prior",
    "crossing_skeleton",
    "hitting_period",
    "epoch_compare",
]


@dataclass(frozen=True)
class ObservedSeries:
    """Values x_k = X(t0 + k dt) on a uniform grid."""

    dt: float
    x: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=float).ravel())
        if x.size < 2:
            raise InvalidParameter(f"invariant len(x)>=2 violated (len={x.size})")
        if not np.all(np.isfinite(x)):
            raise InvalidParameter("series contains non-finite values")
        if not self.dt > 0 or not math.isfinite(self.dt):
            raise InvalidParameter(f"invariant dt>0 violated (dt={self.dt!r})")
        object.__setattr__(self, "x", x)

    @classmethod
    def from_times(cls, t, x, rtol: float = 1e-6) -> "ObservedSeries":
        t = np.asarray(t, dtype=float)
        if t.size < 2:
            raise InvalidParameter("need at least two time stamps")
        d = np.diff(t)
        dt = float((t[-1] - t[0]) / (t.size - 1))
        if np.any(np.abs(d - dt) > rtol * max(abs(dt), 1e-300) + 1e-12):
            raise InvalidParameter("time stamps are not on a uniform grid")
        return cls(dt, x, float(t[0]))

    @classmethod
    def from_trajectory(cls, traj, path: int = 0) -> "ObservedSeries":
        return cls(traj.dt * traj.record_every, traj.x[path])

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def t_total(self) -> float:
        return self.dt * (self.n - 1)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def scaled(self, factor: float) -> "ObservedSeries":
        return ObservedSeries(self.dt, self.x * factor, self.t0)

    def subsample(self, every: int) -> "ObservedSeries":
        return ObservedSeries(self.dt * every, self.x[::every], self.t0)


def _series(s, dt=None) -> ObservedSeries:
    if isinstance(s, ObservedSeries):
        return s
    if dt is None:
        raise InvalidParameter("a bare array needs dt")
    return ObservedSeries(dt, s)


def quadratic_variation_c(series: ObservedSeries) -> float:
    """c_hat = sqrt(sum of squared increments / elapsed time)."""
    if series.n < 100:
        raise InvalidParameter(f"invariant len(x)>=100 violated (len={series.n})")
    dx = np.diff(series.x)
    return math.sqrt(float(dx @ dx) / series.t_total)


def y_process(series: ObservedSeries, b: float, form: str = "increments", y0: Optional[float] = None) -> np.ndarray:
    """The speculative state Y^b rebuilt from the path, X taken piecewise linear between samples.

    ``increments``: Y = b M - b X with M(t) = int_0^t e^{-b(t-s)} dX_s, updated by
    M_{k+1} = e^{-b dt} M_k + dX_k (1 - e^{-b dt}) / (b dt).
    ``by_parts``: Y = -b e^{-bt} X_0 - b^2 int_0^t e^{-b(t-s)} X_s ds, with the
    integral updated exactly over each linear piece.
    Both start from Y_0 = ``y0``, by default -b X_0 (no memory before the first sample).
    """
    b = float(b)
    if not b > 0:
        raise InvalidParameter(f"invariant b>0 violated (b={b!r})")
    x = series.x
    dt = series.dt
    e = math.exp(-b * dt)
    y0 = -b * x[0] if y0 is None else float(y0)
    if form == "increments":
        gain = -math.expm1(-b * dt) / (b * dt)
        m = _kernels.exp_recursion(e, np.diff(x) * gain, (y0 + b * x[0]) / b)
        return b * m - b * x
    if form == "by_parts":
        e0 = -math.expm1(-b * dt) / b
        e1 = (-math.expm1(-b * dt) - b * dt * e) / (b * b)
        drive = x[1:] * e0 - np.diff(x) / dt * e1
        i = _kernels.exp_recursion(e, drive, 0.0)
        decay = np.exp(-b * dt * np.arange(series.n))
        return decay * y0 - b * b * i
    raise InvalidParameter(f"form must be 'increments' or 'by_parts', got {form!r}")


def _integral(f, dt, rule):
    if rule == "trapezoid":
        return dt * (f.sum() - 0.5 * (f[0] + f[-1]))
    if rule == "left":
        return dt * f[:-1].sum()
    raise InvalidParameter(f"rule must be 'trapezoid' or 'left', got {rule!r}")


@dataclass(frozen=True)
class _Moments:
    """Path functionals the likelihood is quadratic in, for one b."""

    b: float
    t: float
    xx: float  # int X^2
    xy: float  # int X Y
    yy: float  # int Y^2
    boundary: float  # X_t Y_t - X_0 Y_0
    ito: float  # (X_t^2 - X_0^2 - t) / 2

    def loglik(self, a: float) -> float:
        k = self.b - a
        drift2 = k * k * self.xx + 2 * k * self.xy + self.yy
        return (k * self.ito + self.boundary + self.b * self.b * self.xx + self.b * self.xy - 0.5 * drift2)

    def a_profile(self) -> float:
        if not self.xx > 0:
            return math.nan
        return self.b + (self.xy - self.ito) / self.xx


def _moments(series, b, rule="trapezoid", y0=None):
    x = series.x
    y = y_process(series, b, y0=y0)
    t = series.t_total
    return _Moments(float(b), t, _integral(x * x, series.dt, rule), _integral(x * y, series.dt, rule),
                    _integral(y * y, series.dt, rule), float(x[-1] * y[-1] - x[0] * y[0]),
                    0.5 * float(x[-1] ** 2 - x[0] ** 2 - t))


def log_likelihood(series: ObservedSeries, a: float, b: float, rule: str = "trapezoid",
                   y0: Optional[float] = None) -> float:
    """Log-likelihood of (a, b) for unit noise, free of stochastic integrals.

    (b-a)/2 (X_t^2 - X_0^2 - t) + X_t Y_t - X_0 Y_0
      + int b^2 X^2 + b X Y - 1/2 ((b-a) X + Y)^2 ds.
    Divide the series by c_hat first when c is not 1.
    """
    if not (a > 0 and b > 0):
        raise InvalidParameter(f"invariant a>0, b>0 violated (a={a!r}, b={b!r})")
    return _moments(series, b, rule, y0).loglik(float(a))


def profile_a(series: ObservedSeries, b: float, rule: str = "trapezoid") -> float:
    """argmax over a of the log-likelihood at fixed b: b + (int XY + (t - X_t^2 + X_0^2)/2) / int X^2."""
    return _moments(series, b, rule).a_profile()


def profile_loglik(series: ObservedSeries, b: float, rule: str = "trapezoid") -> tuple:
    m = _moments(series, b, rule)
    a = m.a_profile()
    return a, m.loglik(a)


def pseudo_period(a: float, b: float) -> float:
    """2 pi / omega with omega^2 = a b - a^2/4; nan outside the oscillatory regime."""
    w2 = a * (b - a / 4.0)
    return 2.0 * math.pi / math.sqrt(w2) if w2 > 0 else math.nan


@dataclass(frozen=True)
class EstimationResult:
    a_hat: float
    b_hat: float
    c_hat: float
    T_hat_ml: float
    T_hat_eps: Optional[float]
    loglik: float
    b_grid: np.ndarray = field(repr=False)
    a_profile: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)
    on_boundary: bool = False
    converged: bool = True
    epsilon: Optional[float] = None
    n_crossings: int = 0

    def as_dict(self) -> dict:
        return {
            "a_hat": self.a_hat, "b_hat": self.b_hat, "c_hat": self.c_hat,
            "T_hat_ml": self.T_hat_ml, "T_hat_eps": self.T_hat_eps, "loglik": self.loglik,
            "on_boundary": self.on_boundary, "converged": self.converged,
            "epsilon": self.epsilon, "n_crossings": self.n_crossings,
            "b_grid": [float(v) for v in self.b_grid],
            "a_profile": [float(v) for v in self.a_profile],
            "profile_loglik": [float(v) for v in self.profile],
        }


def moment_b_prior(series: ObservedSeries) -> float:
    """Rough b from the autocorrelation trough and the variance, using a << b.

    The first trough of the autocorrelation sits near half a period, so
    omega ~ pi / lag; then omega^2 ~ a b and Var X ~ b / (2 a^2) (unit noise)
    give b ~ (2 Var X omega^4)^(1/3). Falls back to 1 when there is no trough.
    """
    x = series.x - series.x.mean()
    n = x.size
    spec = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(spec * spec.conj())[:n]
    if not acf[0] > 0:
        return 1.0
    acf = acf / acf[0]
    down = np.flatnonzero((acf[1:-1] < acf[:-2]) & (acf[1:-1] <= acf[2:]) & (acf[1:-1] < 0))
    if down.size == 0:
        return 1.0
    lag = (down[0] + 1) * series.dt
    w = math.pi / lag
    return (2.0 * float(np.var(series.x)) * w**4) ** (1.0 / 3.0)


def mle(series: ObservedSeries, b_grid: Optional[Sequence[float]] = None, b_prior: Optional[float] = None,
        normalize: bool = True, rule: str = "trapezoid", epsilon: Optional[float] = None) -> EstimationResult:
    """Profile maximum likelihood of (a, b), plus both pseudo-period estimates.

    For each b on the grid a is profiled in closed form; the best grid point
    is refined by bounded Brent search between its neighbours. The default grid
    is 60 points on [0.5, 4] * b_prior; without ``b_prior`` a moment estimate is used.
    An optimum on the grid's edge sets ``on_boundary`` and warns.
    """
    c_hat = quadratic_variation_c(series)
    s = series.scaled(1.0 / c_hat) if normalize and c_hat > 0 else series
    if b_grid is None:
        bp = moment_b_prior(s) if b_prior is None else float(b_prior)
        b_grid = np.linspace(0.5 * bp, 4.0 * bp, 60)
    grid = np.asarray(b_grid, dtype=float)
    if grid.size < 10 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise InvalidParameter("b_grid must be positive, increasing, with at least 10 points")
    prof = [profile_loglik(s, b, rule) for b in grid]
    a_prof = np.array([p[0] for p in prof])
    ll = np.array([p[1] for p in prof])
    if not np.any(np.isfinite(ll)):
        raise InvalidParameter("likelihood is undefined on the whole grid (degenerate series)")
    i = int(np.nanargmax(ll))
    edge = i in (0, grid.size - 1)
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda b: -profile_loglik(s, b, rule)[1], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-8 * hi})
    b_hat, best = (float(res.x), -float(res.fun)) if res.success and -res.fun >= ll[i] else (float(grid[i]), ll[i])
    a_hat = profile_a(s, b_hat, rule)
    if edge:
        warnings.warn(f"likelihood maximum at the edge of the b grid (b={b_hat:.6g}); widen the grid",
                      RuntimeWarning, stacklevel=2)
    eps = c_hat * math.sqrt(series.dt) if epsilon is None else epsilon
    sk = crossing_skeleton(series, eps) if eps > 0 else None
    t_eps = sk.period if sk is not None and sk.n_crossings >= 5 else None
    ok = bool(res.success and a_hat > 0 and b_hat > 0)
    return EstimationResult(float(a_hat), b_hat, c_hat, pseudo_period(a_hat, b_hat), t_eps, float(best), grid,
                            a_prof, ll, bool(edge), ok, float(eps), sk.n_crossings if sk is not None else 0)


@dataclass(frozen=True)
class CrossingSkeleton:
    """Zero-crossing times tau_k (tau_0 = start) alternating with epsilon-excursion times r_k."""

    tau: np.ndarray
    r: np.ndarray
    epsilon: float
    t_total: float

    @property
    def n_crossings(self) -> int:
        return self.tau.size - 1

    @property
    def period(self) -> float:
        """2 (tau_N - tau_0) / N; nan without crossings."""
        n = self.n_crossings
        return 2.0 * (self.tau[-1] - self.tau[0]) / n if n > 0 else math.nan


def crossing_skeleton(series: ObservedSeries, epsilon: Optional[float] = None) -> CrossingSkeleton:
    """tau_0 = 0; r_k = first sample at or after tau_k with |X| >= eps;
    tau_{k+1} = first sign change after r_k, placed by linear interpolation.

    Times are relative to the first sample. The default eps is c_hat sqrt(dt).
    """
    if epsilon is None:
        epsilon = quadratic_variation_c(series) * math.sqrt(series.dt)
    if not epsilon > 0:
        raise InvalidParameter(f"invariant epsilon>0 violated (epsilon={epsilon!r})")
    tau, r = _kernels.crossing_scan(series.x, series.dt, float(epsilon))
    return CrossingSkeleton(np.asarray(tau), np.asarray(r), float(epsilon), series.t_total)


def hitting_period(series: ObservedSeries, epsilon: Optional[float] = None, min_crossings: int = 5) -> float:
    """Twice the mean spacing of consecutive skeleton crossings."""
    sk = crossing_skeleton(series, epsilon)
    if sk.n_crossings < min_crossings:
        raise InvalidParameter(f"invariant N_t>={min_crossings} violated (N_t={sk.n_crossings})")
    return sk.period


@dataclass(frozen=True)
class EpochComparison:
    chi: float
    chi_tilde: float
    ratio_a: float  # a_1 / a_2
    ratio_b: float  # b_1 / b_2

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _mean_square(s) -> float:
    x = np.asarray(s.x if isinstance(s, ObservedSeries) else s, dtype=float).ravel()
    if x.size == 0:
        raise InvalidParameter("empty series")
    if x.size == 1:
        return float(x[0] ** 2)
    f = x * x
    return float((f.sum() - 0.5 * (f[0] + f[-1])) / (x.size - 1))


def epoch_compare(series_1, series_2, t0: float, t1: float, t2: float, periods_1: float = 3.0,
                  periods_2: float = 0.25) -> EpochComparison:
    """Relative (a, b) of two epochs under a << b, from visible periods and mean squared level.

    Epoch 1 spans [t0, t1] and shows ``periods_1`` oscillations; epoch 2 spans
    [t1, t2] and shows ``periods_2``. Then a1 b1 = chi a2 b2 with
    chi = ((periods_1/periods_2)(t2-t1)/(t1-t0))^2, and b1/a1^2 = chi_tilde b2/a2^2
    with chi_tilde the ratio of time-averaged X^2. Solving the pair gives
    a1/a2 = (chi/chi_tilde)^(1/3) and b1/b2 = chi^(2/3) chi_tilde^(1/3).
    """
    if not (t0 < t1 < t2):
        raise InvalidParameter(f"invariant t0<t1<t2 violated ({t0}, {t1}, {t2})")
    if not (periods_1 > 0 and periods_2 > 0):
        raise InvalidParameter("period counts must be positive")
    chi = (periods_1 / periods_2 * (t2 - t1) / (t1 - t0)) ** 2
    m1, m2 = _mean_square(series_1), _mean_square(series_2)
    if m2 == 0:
        raise InvalidParameter("second series is identically zero: chi_tilde undefined")
    ct = m1 / m2
    return EpochComparison(chi, ct, (chi / ct) ** (1.0 / 3.0), chi ** (2.0 / 3.0) * ct ** (1.0 / 3.0))
