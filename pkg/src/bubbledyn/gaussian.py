"""Closed-form Gaussian laws of the bubble diffusion and of its turning frame.

Transition laws, the stationary law, Lebesgue densities, the chi-square type
divergence J between centred Gaussians and the relaxation-rate fit built on
it. In the oscillatory regime the covariance comes from the trigonometric
closed form Sigma_t = R_0 - exp(-a t) R_t; the other regimes integrate the
Lyapunov ODE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh, expm

from .errors import InvalidParameter
from .model import ModelParams, Regime, drift_system, require_oscillatory, spectral

__all__ = [
    "GaussianLaw",
    "CovarianceSchedule",
    "covariance_schedule",
    "flow_matrix",
    "transition_cov",
    "transition_law",
    "stationary_law",
    "turning_flow",
    "turning_cov",
    "turning_transition_law",
    "density",
    "chi2_divergence",
    "RelaxationFit",
    "relaxation_rate",
    "van_loan",
    "psd_sqrt",
]


@dataclass(frozen=True)
class GaussianLaw:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        S = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if S.shape != (m.size, m.size):
            raise InvalidParameter(f"covariance shape {S.shape} does not match mean size {m.size}")
        if not np.allclose(S, S.T, rtol=1e-12, atol=1e-300):
            raise InvalidParameter("covariance must be symmetric")
        S = 0.5 * (S + S.T)
        scale = max(np.abs(S).max(), 1e-300)
        if np.linalg.eigvalsh(S).min() < -1e-10 * scale:
            raise InvalidParameter("covariance must be positive semidefinite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", S)

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        L = psd_sqrt(self.cov)
        return self.mean + rng.standard_normal((n, self.dim)) @ L.T


def psd_sqrt(S: np.ndarray) -> np.ndarray:
    """A factor L with L L^T = S for a symmetric PSD matrix (eigen-based, tolerates rank deficiency)."""
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return np.ascontiguousarray(V * np.sqrt(np.clip(w, 0.0, None)))


def van_loan(A: np.ndarray, Q: np.ndarray, dt: float):
    """Exact one-step transition (Phi, Cov) of dZ = A Z dt + dM with d<M> = Q dt."""
    d = A.shape[0]
    M = np.zeros((2 * d, 2 * d))
    M[:d, :d] = -A
    M[:d, d:] = Q
    M[d:, d:] = A.T
    F = expm(M * dt)
    Phi = np.ascontiguousarray(F[d:, d:].T)
    cov = Phi @ F[:d, d:]
    return Phi, 0.5 * (cov + cov.T)


# ---------------------------------------------------------------- original frame


@dataclass(frozen=True)
class CovarianceSchedule:
    """The oscillatory-regime covariance schedule Sigma_t = R_0 - exp(-a t) R_t."""

    params: ModelParams
    omega: float
    alpha: float
    beta: float

    @property
    def prefactor(self) -> float:
        a, b, c = self.params.a, self.params.b, self.params.c
        return c * c / (4.0 * a * b - a * a)

    def R(self, t):
        a, b = self.params.a, self.params.b
        t = np.asarray(t, dtype=float)
        ph = -self.alpha - 2.0 * self.omega * t
        q = math.sqrt(a / b)
        k = self.prefactor
        r11 = k * (b * b / a) * (2.0 + q * np.cos(2.0 * self.beta + ph))
        # off-diagonal: integrate e^{-as} sin(beta - w s) sin(w s) directly
        r12 = k * (b**3 / a) * (2.0 * math.cos(self.beta) + q * np.cos(self.beta + ph))
        r22 = k * (b**4 / a) * (2.0 + q * np.cos(ph))
        return np.stack([np.stack([r11, r12], -1), np.stack([r12, r22], -1)], -2)

    def r(self, t):
        """First entry of R_t (X-marginal)."""
        return self.R(t)[..., 0, 0]

    @property
    def Sigma_inf(self) -> np.ndarray:
        return stationary_law(self.params).cov

    def Sigma(self, t):
        t = np.asarray(t, dtype=float)
        return self.R(0.0) - np.exp(-self.params.a * t)[..., None, None] * self.R(t)


def covariance_schedule(params: ModelParams) -> CovarianceSchedule:
    sp = require_oscillatory(params)
    a, b = params.a, params.b
    alpha = math.atan2(-sp.omega / math.sqrt(a * b), -math.sqrt(a) / (2.0 * math.sqrt(b))) % (2.0 * math.pi)
    beta = math.atan2(sp.omega / b, (a - 2.0 * b) / (2.0 * b)) % (2.0 * math.pi)
    return CovarianceSchedule(params, sp.omega, alpha, beta)


def flow_matrix(params: ModelParams, t: float) -> np.ndarray:
    """exp(A t)."""
    sp = spectral(params)
    if sp.regime is Regime.OSCILLATORY:
        w = sp.omega
        B = drift_system(params).A + 0.5 * params.a * np.eye(2)
        return math.exp(-0.5 * params.a * t) * (math.cos(w * t) * np.eye(2) + (math.sin(w * t) / w) * B)
    return expm(drift_system(params).A * t)


def _lyapunov_cov(params: ModelParams, t: float) -> np.ndarray:
    ds = drift_system(params)
    A, Q = ds.A, ds.Q

    def rhs(_, s):
        S = s.reshape(2, 2)
        return (A @ S + S @ A.T + Q).ravel()

    scale = max(stationary_law(params).cov.max(), 1e-300)
    sol = solve_ivp(rhs, (0.0, t), np.zeros(4), method="RK45", rtol=1e-10, atol=1e-14 * scale)
    S = sol.y[:, -1].reshape(2, 2)
    return 0.5 * (S + S.T)


def transition_cov(params: ModelParams, t: float) -> np.ndarray:
    if t < 0:
        raise InvalidParameter(f"invariant t>=0 violated (t={t!r})")
    if t == 0 or params.c == 0:
        return np.zeros((2, 2))
    if params.regime is Regime.OSCILLATORY:
        sched = covariance_schedule(params)
        if t * max(params.a, sched.omega) < 1.0:
            # R_0 - e^{-at} R_t cancels at short times; the block exponential keeps relative accuracy
            ds = drift_system(params)
            S = van_loan(ds.A, ds.Q, t)[1]
        else:
            S = sched.Sigma(t)
        return 0.5 * (S + S.T)
    return _lyapunov_cov(params, t)


def transition_law(params: ModelParams, z0, t: float) -> GaussianLaw:
    z0 = np.asarray(z0, dtype=float)
    return GaussianLaw(flow_matrix(params, t) @ z0, transition_cov(params, t))


def stationary_law(params: ModelParams) -> GaussianLaw:
    a, b, c = params.a, params.b, params.c
    S = (c * c / (2.0 * a * a)) * np.array([[a + b, -b * b], [-b * b, b**3]])
    return GaussianLaw(np.zeros(2), S)


def density(params: ModelParams, z0, t: float, z, relative: bool = False):
    """Transition density p_t(z0, z).

    Lebesgue density by default; ``relative=True`` returns the density with
    respect to the stationary law (both are Gaussian ratios of the same laws).
    """
    if not t > 0:
        raise InvalidParameter(f"invariant t>0 violated (t={t!r}): the law at t=0 is a point mass")
    law = transition_law(params, z0, t)
    z = np.asarray(z, dtype=float)
    logp = _gauss_logpdf(z, law.mean, law.cov)
    if relative:
        st = stationary_law(params)
        logp = logp - _gauss_logpdf(z, st.mean, st.cov)
    return np.exp(logp)


def _gauss_logpdf(z, m, S):
    Sinv = _inv2(S)
    d = z - m
    q = np.einsum("...i,ij,...j->...", d, Sinv, d)
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    return -0.5 * q - 0.5 * math.log(det) - math.log(2.0 * math.pi)


def _inv2(S):
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    if not abs(det) > 1e-300:
        raise InvalidParameter("2x2 matrix is numerically singular (|det|<1e-300)")
    return np.array([[S[1, 1], -S[0, 1]], [-S[1, 0], S[0, 0]]]) / det


# ---------------------------------------------------------------- turning frame

_SMALL_T = 0.5


@lru_cache(maxsize=1)
def _gl_nodes(n: int = 40):
    return np.polynomial.legendre.leggauss(n)


def _decay_integral(rho: float, t: float) -> float:
    """(1 - exp(-2 rho t)) / (2 rho), continuous at rho = 0."""
    x = 2.0 * rho * t
    if abs(rho) < 1e-6 and abs(x) < 2e-3:
        return t * (1.0 - x / 2.0 + x * x / 6.0 - x**3 / 24.0 + x**4 / 120.0)
    return -math.expm1(-x) / (2.0 * rho)


def turning_flow(rho: float, t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return math.exp(-rho * t) * np.array([[c, -s], [s, c]])


def turning_cov(rho: float, t: float) -> np.ndarray:
    """Covariance of the turning process after time t from a fixed start."""
    if t < 0:
        raise InvalidParameter(f"invariant t>=0 violated (t={t!r})")
    if t == 0:
        return np.zeros((2, 2))
    if t < _SMALL_T:
        # the closed form cancels to O(t^3); integrate the exact integrand instead
        x, w = _gl_nodes()
        s = 0.5 * t * (x + 1.0)
        w = 0.5 * t * w * np.exp(-2.0 * rho * s)
        sn, cs = np.sin(s), np.cos(s)
        s11 = np.dot(w, 2.0 * sn * sn)
        s12 = -np.dot(w, 2.0 * sn * cs)
        s22 = np.dot(w, 2.0 * cs * cs)
        return np.array([[s11, s12], [s12, s22]])
    e = math.exp(-2.0 * rho * t)
    f = _decay_integral(rho, t)
    h = 2.0 * (1.0 + rho * rho)
    osc = e * (math.sin(2 * t) - rho * math.cos(2 * t)) / h
    s11 = f - osc - rho / h
    s12 = e * (math.cos(2 * t) + rho * math.sin(2 * t)) / h - 1.0 / h
    s22 = f + osc + rho / h
    return np.array([[s11, s12], [s12, s22]])


def turning_transition_law(rho: float, z0, t: float) -> GaussianLaw:
    z0 = np.asarray(z0, dtype=float)
    return GaussianLaw(turning_flow(rho, t) @ z0, turning_cov(rho, t))


# ---------------------------------------------------------------- divergence


def _j_from_s(s: np.ndarray) -> float:
    if np.any(s >= 1.0) or np.any(s <= -1.0):
        return math.inf
    j2 = math.expm1(-0.5 * float(np.sum(np.log1p(-s * s))))
    return math.sqrt(max(j2, 0.0))


def _is_pd(M: np.ndarray, tol: float = 1e-12) -> bool:
    M = 0.5 * (M + M.T)
    scale = max(np.abs(M).max(), 1e-300)
    try:
        np.linalg.cholesky(M - tol * scale * np.eye(M.shape[0]))
    except np.linalg.LinAlgError:
        return False
    return True


def chi2_divergence(law_tilde: GaussianLaw, law: GaussianLaw, *, cov_diff=None) -> float:
    """J(mu~, mu) = sqrt(int (dmu~/dmu - 1)^2 dmu) for centred Gaussians.

    ``cov_diff`` may carry Sigma~ - Sigma computed without cancellation.
    Returns ``math.inf`` when Sigma~^{-1} - Sigma^{-1}/2 is not positive definite.
    """
    St, S = law_tilde.cov, law.cov
    if np.any(law_tilde.mean != 0) or np.any(law.mean != 0):
        raise InvalidParameter("J is defined here for centred laws only (both means must be zero)")
    if not (_is_pd(St) and _is_pd(S)):
        raise InvalidParameter("both covariances must be positive definite")
    if not _is_pd(np.linalg.inv(St) - 0.5 * np.linalg.inv(S)):
        return math.inf
    D = St - S if cov_diff is None else np.atleast_2d(np.asarray(cov_diff, dtype=float))
    s = eigh(0.5 * (D + D.T), S, eigvals_only=True)
    return _j_from_s(s)


@dataclass(frozen=True)
class RelaxationFit:
    slope: float
    intercept: float
    marginal_slope: float
    target: float
    t_grid: np.ndarray
    log_j: np.ndarray
    log_j_marginal: np.ndarray

    @property
    def relative_error(self) -> float:
        return abs(self.slope - self.target) / abs(self.target)


def relaxation_rate(params: ModelParams, t_grid) -> RelaxationFit:
    """Least-squares slope of ln J(mu_t, mu) in t (joint and X-marginal)."""
    sp = require_oscillatory(params)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 5:
        raise InvalidParameter("relaxation fit needs at least 5 grid points")
    if params.c == 0:
        raise InvalidParameter("invariant c>0 violated: laws are degenerate when c=0")
    sched = covariance_schedule(params)
    mu = stationary_law(params)
    nu = GaussianLaw(np.zeros(1), mu.cov[:1, :1])
    lj, ljm = [], []
    for t in t_grid:
        Rt = sched.R(t)
        e = math.exp(-params.a * t)
        law_t = GaussianLaw(np.zeros(2), sched.Sigma(t))
        j = chi2_divergence(law_t, mu, cov_diff=-e * Rt)
        nu_t = GaussianLaw(np.zeros(1), law_t.cov[:1, :1])
        jm = chi2_divergence(nu_t, nu, cov_diff=-e * Rt[:1, :1])
        if not (math.isfinite(j) and math.isfinite(jm)):
            raise InvalidParameter(f"J is infinite at t={t!r}; move the grid later in time")
        lj.append(math.log(j))
        ljm.append(math.log(jm))
    lj, ljm = np.array(lj), np.array(ljm)
    slope, icpt = np.polyfit(t_grid, lj, 1)
    mslope, _ = np.polyfit(t_grid, ljm, 1)
    return RelaxationFit(float(slope), float(icpt), float(mslope), 2.0 * sp.l, t_grid, lj, ljm)
