"""Independent reference computations used by the tests.

Nothing here imports the closed forms under test: covariances come from
brute-force quadrature of the stochastic convolution, conditioning from
generic joint-Gaussian algebra, and so on.
"""

import math

import numpy as np
from scipy import integrate, linalg


def drift(a, b, c):
    return np.array([[b - a, 1.0], [-b * b, -b]]), np.array([c, 0.0])


def sigma_quadrature(a, b, c, t):
    """int_0^t e^{As} C C^T e^{A^T s} ds by adaptive vector quadrature."""
    A, C = drift(a, b, c)

    def f(s):
        v = linalg.expm(A * s) @ C
        return np.outer(v, v).ravel()

    val, _ = integrate.quad_vec(f, 0.0, t, epsabs=1e-14, epsrel=1e-12)
    return val.reshape(2, 2)


def sigma_stationary_lyapunov(a, b, c):
    A, C = drift(a, b, c)
    return linalg.solve_continuous_lyapunov(A, -np.outer(C, C))


def turning_cov_quadrature(rho, t):
    """Covariance of the turning process after time t from the origin."""

    def f(s):
        R = np.array([[math.cos(s), -math.sin(s)], [math.sin(s), math.cos(s)]])
        v = math.exp(-rho * s) * (R @ np.array([0.0, math.sqrt(2.0)]))
        return np.outer(v, v).ravel()

    val, _ = integrate.quad_vec(f, 0.0, t, epsabs=1e-15, epsrel=1e-12)
    return val.reshape(2, 2)


def turning_flow(rho, t):
    return math.exp(-rho * t) * np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def condition_on_end(rho, z0, zT, T, u):
    """Law of Z_{uT} given Z_0 = z0, Z_T = zT from the 4x4 joint covariance."""
    s = u * T
    Ss = turning_cov_quadrature(rho, s)
    Sv = turning_cov_quadrature(rho, T - s)
    F = turning_flow(rho, T - s)
    m_s = turning_flow(rho, s) @ z0
    m_T = F @ m_s
    C_sT = Ss @ F.T
    C_TT = F @ Ss @ F.T + Sv
    K = np.linalg.solve(C_TT.T, C_sT.T).T
    return m_s + K @ (zT - m_T), Ss - K @ C_sT.T


def chi2_by_quadrature(var_tilde, var):
    """J for two centred 1-D normals: sqrt(int p~^2 / p dx - 1)."""

    def f(x):
        # p~^2 / p in logs so the tails do not underflow to 0/0
        lt = -x * x / (2 * var_tilde) - 0.5 * math.log(2 * math.pi * var_tilde)
        lp = -x * x / (2 * var) - 0.5 * math.log(2 * math.pi * var)
        return math.exp(2 * lt - lp)

    val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
    return math.sqrt(val - 1.0)


def first_zero_dense(a, b, z0, t_max=10.0, n=2_000_001):
    """First sign change of the noiseless x(t) on a dense grid, refined by bisection."""
    A, _ = drift(a, b, 0.0)
    w, V = np.linalg.eig(A)
    Vi = np.linalg.inv(V)
    t = np.linspace(0.0, t_max, n)
    x = ((V[0, :] * (Vi @ z0)) * np.exp(np.outer(t, w))).sum(axis=1).real
    i = int(np.flatnonzero((x[:-1] > 0) & (x[1:] <= 0))[0])

    def xf(s):
        return float((linalg.expm(A * s) @ z0)[0])

    from scipy.optimize import brentq

    return brentq(xf, t[i], t[i + 1], xtol=1e-14)


def y_riemann(x, dt, b, y0=None):
    """Y_t = b sum_j e^{-b(t - s_j)} dX_j - b X_t with midpoint weights, O(n^2)-free via cumulative sums."""
    x = np.asarray(x, dtype=float)
    n = x.size
    t = dt * np.arange(n)
    dx = np.diff(x)
    mid = t[:-1] + dt / 2
    out = np.empty(n)
    y0 = -b * x[0] if y0 is None else y0
    m0 = (y0 + b * x[0]) / b
    for k in range(n):
        out[k] = b * (np.sum(np.exp(-b * (t[k] - mid[:k])) * dx[:k]) + math.exp(-b * t[k]) * m0) - b * x[k]
    return out


def polar_factor_symbolic(kind):
    """Lg/g for the certificate family from the Cartesian generator, by sympy.

    Returns a lambdified function (rho, r, theta) -> Lg/g built from g
    written in polar coordinates and the chain rule, with unit second-order
    coefficient (full convention).
    """
    import sympy as sp

    r, th, rho = sp.symbols("r theta rho", real=True)
    x, y = sp.symbols("x y", real=True)
    if kind == "elliptic_left":
        beta, gamma, n = (1 - sp.sqrt(3)) / 4, sp.cos(th), 1
    elif kind == "elliptic_right":
        beta, gamma, n = (sp.sin(2 * th) - sp.sqrt(3)) / 4, sp.cos(th), 1
    elif kind == "hypo_left":
        beta, gamma, n = sp.Rational(-1, 2), -sp.sin(2 * th), 2
    elif kind == "hypo_right":
        beta, gamma, n = sp.Rational(-1, 2), sp.cos(sp.pi / 4 + th) ** 2, 2
    else:
        raise ValueError(kind)
    g = r**n * gamma * sp.exp(beta * r**2)
    # Cartesian derivatives through the polar chain rule
    rr, tt = sp.sqrt(x**2 + y**2), sp.atan2(y, x)
    G = g.subs({r: rr, th: tt})
    Gx, Gy = sp.diff(G, x), sp.diff(G, y)
    Gyy = sp.diff(G, y, 2)
    drift_part = (-rho * x - y) * Gx + (x - rho * y) * Gy
    if kind.startswith("elliptic"):
        L = drift_part + sp.diff(G, x, 2) + Gyy
    else:
        L = drift_part + Gyy
    ratio = L / G
    f = sp.lambdify((rho, x, y), ratio, "numpy")
    return lambda rho_, r_, th_: f(rho_, r_ * np.cos(th_), r_ * np.sin(th_))
