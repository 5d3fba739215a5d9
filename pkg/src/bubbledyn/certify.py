"""Spectral certificate functions for exits from angular sectors, and their
numerical verification.

A certificate is g(r, theta) = r^n gamma(theta) exp(beta(theta) r^2), positive
on an angular domain and zero on its boundary, with L g >= -lambda g. Two are
provided:

- ``elliptic_certificate``: the fully noisy rotation d xi = (-rho + J) xi dt + sqrt(2) dW
  on the half-plane (-pi/2, pi/2), rate 2 sqrt(3) + rho;
- ``hypo_certificate``: the turning process, noise on v only, on the sector
  (-pi/2, pi/4), rate 3 + 2 rho.

``verify_certificate`` checks each certificate three ways: the closed-form
factor decomposition, the generic polar derivative ratios fed to the polar
generator, and central finite differences of the Cartesian generator applied
to the Cartesian form of g. The last route is computed for the full
second-order coefficient and for the halved one, and the report says which
one the factors match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameter
from .model import ModelParams, require_oscillatory

__all__ = [
    "Certificate",
    "elliptic_certificate",
    "hypo_certificate",
    "evaluate_factors",
    "generator_ratio",
    "cartesian_generator",
    "VerificationReport",
    "verify_certificate",
    "kink_check",
    "boundedness_scan",
    "RateBounds",
    "rate_bounds",
]

SQRT3 = math.sqrt(3.0)
KINK_GAP = 0.02
EDGE_GAP = 0.05
CONVENTIONS = ("full", "half")


@dataclass(frozen=True)
class Certificate:
    """g(r, theta) = r^n gamma(theta) exp(beta(theta) r^2) with L g >= -rate g on the domain.

    ``ang`` maps a theta array to the six arrays (gamma, gamma', gamma'',
    beta, beta', beta''), using the piece on the left of each kink at the kink
    itself.  ``cartesian`` is the same function written in (x, y) and set to
    zero off the domain.
    """

    kind: str
    rho: float
    n: int
    domain: tuple
    kinks: tuple
    rate: float
    ang: Callable = field(repr=False)
    cartesian: Callable = field(repr=False)
    noise: tuple = (1.0, 1.0)  # diffusion weights on d2/dx2 and d2/dy2 (full convention)

    def gamma(self, theta):
        return self.ang(np.asarray(theta, dtype=float))[0]

    def beta(self, theta):
        return self.ang(np.asarray(theta, dtype=float))[3]

    def g(self, r, theta):
        r = np.asarray(r, dtype=float)
        gm, _, _, bt, _, _ = self.ang(np.asarray(theta, dtype=float))
        return r**self.n * gm * np.exp(bt * r * r)


def _check_rho(rho):
    rho = float(rho)
    if not rho >= 0 or not math.isfinite(rho):
        raise InvalidParameter(f"invariant rho>=0 violated (rho={rho!r})")
    return rho


def _elliptic_ang(theta):
    th = np.asarray(theta, dtype=float)
    right = th > math.pi / 4
    s2, c2 = np.sin(2 * th), np.cos(2 * th)
    beta = np.where(right, (s2 - SQRT3) / 4.0, (1.0 - SQRT3) / 4.0)
    db = np.where(right, c2 / 2.0, 0.0)
    d2b = np.where(right, -s2, 0.0)
    return np.cos(th), -np.sin(th), -np.cos(th), beta, db, d2b


def _elliptic_xy(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    f = x * np.exp(-(SQRT3 - 1.0) / 4.0 * (x * x + y * y)) * np.exp(-((x - y) ** 2) / 4.0 * (y >= x))
    return np.where(x > 0, f, 0.0)


def _hypo_ang(theta):
    th = np.asarray(theta, dtype=float)
    left = th <= -math.pi / 4
    s2, c2 = np.sin(2 * th), np.cos(2 * th)
    p = math.pi / 4 + th
    gm = np.where(left, -s2, np.cos(p) ** 2)
    dg = np.where(left, -2.0 * c2, -np.sin(2 * p))
    d2g = np.where(left, 4.0 * s2, -2.0 * np.cos(2 * p))
    z = np.zeros_like(th)
    return gm, dg, d2g, z - 0.5, z, z


def _hypo_xy(u, v):
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    poly = np.where(v <= -u, -2.0 * u * v, 0.5 * (u - v) ** 2)
    inside = (u > 0) & (v < u)
    return np.where(inside, poly * np.exp(-0.5 * (u * u + v * v)), 0.0)


def elliptic_certificate(rho: float) -> Certificate:
    """n=1, gamma = cos, beta flat at (1-sqrt3)/4 then (sin 2theta - sqrt3)/4 past pi/4."""
    rho = _check_rho(rho)
    return Certificate("elliptic", rho, 1, (-math.pi / 2, math.pi / 2), (math.pi / 4,), 2.0 * SQRT3 + rho,
                       _elliptic_ang, _elliptic_xy, (1.0, 1.0))


def hypo_certificate(rho: float) -> Certificate:
    """n=2, beta = -1/2, gamma = -sin 2theta below -pi/4 and cos^2(pi/4 + theta) above."""
    rho = _check_rho(rho)
    return Certificate("hypoelliptic", rho, 2, (-math.pi / 2, math.pi / 4), (-math.pi / 4,), 3.0 + 2.0 * rho,
                       _hypo_ang, _hypo_xy, (0.0, 1.0))


def _check_theta(cert, theta, gap=KINK_GAP):
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    lo, hi = cert.domain
    if np.any((th <= lo) | (th >= hi)):
        raise InvalidParameter(f"angles must lie strictly inside the domain ({lo:.6g}, {hi:.6g})")
    for k in cert.kinks:
        if np.any(np.abs(th - k) < gap):
            raise InvalidParameter(f"angle within {gap} of the kink at {k:.6g}, where g is not C2")
    return th


def evaluate_factors(cert: Certificate, theta_grid, kink_gap: float = 0.0) -> dict:
    """Closed-form angular factors: psi1, psi2 (elliptic) or phi1, phi2, phi3 (hypoelliptic).

    Lg/g = psi1 r^2 + psi2, respectively phi1 r^2 + phi2 + phi3 / r^2.
    Points closer than ``kink_gap`` to a kink are rejected, as is the kink itself.
    """
    th = _check_theta(cert, theta_grid, kink_gap)
    if any(np.any(th == k) for k in cert.kinks):
        raise InvalidParameter("evaluation at a kink: the second derivatives jump there")
    rho = cert.rho
    gm, dg, d2g, b, db, d2b = cert.ang(th)
    s, c = np.sin(th), np.cos(th)
    if cert.kind == "elliptic":
        psi1 = -2 * rho * b + db + 4 * b * b + db * db
        psi2 = -rho + 8 * b - (1 + 2 * db) * np.tan(th) + d2b
        return {"theta": th, "psi1": psi1, "psi2": psi2}
    n = cert.n
    q = dg / gm
    phi1 = -2 * rho * b + db + (2 * s * b + c * db) ** 2
    phi2 = (-n * rho + b * ((4 * n + 2) * s * s + 2 * c * c) + (1 + 2 * db * c * c + 4 * b * s * c) * q
            + d2b * c * c + 2 * (n + 1) * c * s * db)
    phi3 = (n * n - n) * s * s + c * c * (n + d2g / gm) + 2 * (n - 1) * s * c * q
    return {"theta": th, "phi1": phi1, "phi2": phi2, "phi3": phi3}


def factor_ratio(cert: Certificate, r, theta) -> np.ndarray:
    """Lg/g from the factor decomposition, broadcast over r and theta."""
    f = evaluate_factors(cert, theta)
    r = np.asarray(r, dtype=float)
    if cert.kind == "elliptic":
        return f["psi1"] * r * r + f["psi2"]
    return f["phi1"] * r * r + f["phi2"] + f["phi3"] / (r * r)


def generator_ratio(cert: Certificate, r, theta, convention: str = "full") -> np.ndarray:
    """Lg/g from the polar generator applied to the generic log-derivative ratios of g.

    Independent of the factor algebra: it only uses the ratios
    d_r g/g, d_rr g/g, d_theta g/g, d_r theta g/(r g), d_theta theta g/(r^2 g)
    and the polar form of the second-order part, scaled by 1 (``full``) or 1/2
    (``half``).
    """
    k = _scale(convention)
    th = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    gm, dg, d2g, b, db, d2b = cert.ang(th)
    n = cert.n
    q, q2 = dg / gm, d2g / gm
    gr = n / r + 2 * b * r
    grr = (n * n - n) / (r * r) + 4 * r * r * b * b + (4 * n + 2) * b
    gt = db * r * r + q
    grt = 2 * b * db * r * r + ((2 + n) * db + 2 * q * b) + n * q / (r * r)  # d_r theta g / (r g)
    gtt = db * db * r * r + (d2b + 2 * db * q) + q2 / (r * r)  # d_theta theta g / (r^2 g)
    first = -cert.rho * r * gr + gt
    if cert.kind == "elliptic":
        return first + k * (grr + gr / r + gtt)
    s, c = np.sin(th), np.cos(th)
    # d2/dv2 in polar coordinates
    second = s * s * grr - 2 * s * c * gt / (r * r) + 2 * s * c * grt + c * c * gr / r + c * c * gtt
    return first + k * second


def _scale(convention):
    if convention not in CONVENTIONS:
        raise InvalidParameter(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    return 1.0 if convention == "full" else 0.5


def cartesian_generator(cert: Certificate, x, y, h: float = 1e-4, convention: str = "full") -> np.ndarray:
    """L g at (x, y) by central finite differences of the Cartesian g.

    Drift is (-rho x - y, x - rho y); the second-order part is
    w_x d2/dx2 + w_y d2/dy2 with the certificate's noise weights, halved under
    the ``half`` convention.
    """
    k = _scale(convention)
    if not h > 0:
        raise InvalidParameter(f"invariant fd_step>0 violated (h={h!r})")
    f = cert.cartesian
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    f0 = f(x, y)
    fxp, fxm = f(x + h, y), f(x - h, y)
    fyp, fym = f(x, y + h), f(x, y - h)
    fx = (fxp - fxm) / (2 * h)
    fy = (fyp - fym) / (2 * h)
    fxx = (fxp - 2 * f0 + fxm) / (h * h)
    fyy = (fyp - 2 * f0 + fym) / (h * h)
    rho = cert.rho
    wx, wy = cert.noise
    return (-rho * x - y) * fx + (x - rho * y) * fy + k * (wx * fxx + wy * fyy)


def default_grids(cert: Certificate, n_r: int = 40, n_theta: int = 181):
    lo, hi = cert.domain
    th = np.linspace(lo + EDGE_GAP, hi - EDGE_GAP, n_theta)
    for k in cert.kinks:
        th = th[np.abs(th - k) >= KINK_GAP]
    return np.linspace(0.2, 5.0, n_r), th


def kink_check(cert: Certificate, r_values=(0.5, 1.0, 2.0), h: float = 1e-5) -> dict:
    """g and its gradient are continuous across each kink; the second angular derivative is not.

    Returns the largest jumps in (gamma, gamma', beta, beta') from the closed
    forms, and in the Cartesian gradient from one-sided differences along
    the kink ray.
    """
    out = {}
    for k in cert.kinks:
        left = np.array(cert.ang(np.array([k]))).ravel()
        right = np.array(cert.ang(np.array([np.nextafter(k, math.inf)]))).ravel()
        closed = float(np.max(np.abs(left[[0, 1, 3, 4]] - right[[0, 1, 3, 4]])))
        second = float(np.max(np.abs(left[[2, 5]] - right[[2, 5]])))
        grad_jump = 0.0
        for r in r_values:
            x, y = r * math.cos(k), r * math.sin(k)
            # normal direction to the kink ray, pointing toward larger theta
            nx, ny = -math.sin(k), math.cos(k)
            f = cert.cartesian
            f0 = float(f(x, y))
            plus = (-3 * f0 + 4 * float(f(x + h * nx, y + h * ny)) - float(f(x + 2 * h * nx, y + 2 * h * ny))) / (2 * h)
            minus = (3 * f0 - 4 * float(f(x - h * nx, y - h * ny)) + float(f(x - 2 * h * nx, y - 2 * h * ny))) / (2 * h)
            grad_jump = max(grad_jump, abs(plus - minus) / max(1.0, abs(plus)))
        out[float(k)] = {"first_order_jump": closed, "second_order_jump": second, "normal_derivative_jump": grad_jump,
                         "c1": closed < 1e-12 and grad_jump < 1e-6}
    return out


def boundedness_scan(cert: Certificate, r_max: float = 100.0, n_r: int = 2001, n_theta: int = 181) -> dict:
    """sup of g over r in [0, r_max] and a theta grid; bounded if the maximizer is well inside."""
    lo, hi = cert.domain
    th = np.linspace(lo, hi, n_theta)[1:-1]
    r = np.linspace(0.0, r_max, n_r)
    G = cert.g(r[:, None], th[None, :])
    i, j = np.unravel_index(np.argmax(G), G.shape)
    sup = float(G[i, j])
    edge = float(G[-1].max())
    return {"sup": sup, "argmax_r": float(r[i]), "argmax_theta": float(th[j]), "value_at_r_max": edge,
            "beta_max": float(cert.beta(th).max()),
            "bounded": bool(math.isfinite(sup) and edge <= 1e-6 * sup and r[i] < 0.5 * r_max)}


@dataclass(frozen=True)
class VerificationReport:
    kind: str
    rho: float
    rate: float
    fd_step: float
    tolerance: float
    n_points: int
    min_margin: float  # min over the grid of Lg/g + rate (closed form)
    factor_minima: dict
    polar_discrepancy: float  # factors vs polar generator, full convention
    convention_discrepancy: dict  # factors vs Cartesian finite differences, per convention
    matching_convention: Optional[str]
    richardson: float  # |FD(h) - FD(h/2)| on Lg/g, matching convention
    worst_point: tuple  # (r, theta) of the largest discrepancy, matching convention
    kinks: dict
    bounded: dict
    passed: bool
    failures: tuple = ()

    @property
    def oracle_discrepancy(self) -> float:
        key = self.matching_convention or "full"
        return self.convention_discrepancy[key]

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["kinks"] = {str(k): v for k, v in self.kinks.items()}
        d["worst_point"] = list(self.worst_point)
        d["failures"] = list(self.failures)
        d["oracle_discrepancy"] = self.oracle_discrepancy
        d["verdict"] = "pass" if self.passed else "fail"
        return d


def verify_certificate(cert: Certificate, r_grid=None, theta_grid=None, fd_step: float = 1e-4,
                       tolerance: float = 1e-5, margin_tolerance: float = 1e-8) -> VerificationReport:
    """Check L g >= -rate g on a polar grid and cross-check the closed form against two oracles.

    Discrepancies are |oracle - closed| / max(1, |closed|) on Lg/g. The check
    passes when the factors are nonnegative where required, the margin
    Lg/g + rate is at least -``margin_tolerance``, the Cartesian oracle under
    one convention agrees to ``tolerance``, g is C1 across kinks and bounded.
    """
    if not fd_step > 0:
        raise InvalidParameter(f"invariant fd_step>0 violated (fd_step={fd_step!r})")
    r0, t0 = default_grids(cert)
    r = np.asarray(r0 if r_grid is None else r_grid, dtype=float)
    th = _check_theta(cert, t0 if theta_grid is None else theta_grid)
    if np.any(r <= 0):
        raise InvalidParameter("radii must be positive")
    R, TH = np.meshgrid(r, th, indexing="ij")
    closed = factor_ratio(cert, R, TH)
    fac = evaluate_factors(cert, th)
    minima = {k: float(v.min()) for k, v in fac.items() if k != "theta"}
    margin = float((closed + cert.rate).min())
    denom = np.maximum(1.0, np.abs(closed))
    polar = float(np.max(np.abs(generator_ratio(cert, R, TH, "full") - closed) / denom))
    X, Y = R * np.cos(TH), R * np.sin(TH)
    G = cert.cartesian(X, Y)
    disc, fd = {}, {}
    for conv in CONVENTIONS:
        fd[conv] = cartesian_generator(cert, X, Y, fd_step, conv) / G
        disc[conv] = float(np.max(np.abs(fd[conv] - closed) / denom))
    match = min(disc, key=disc.get)
    match = match if disc[match] <= tolerance else None
    use = match or "full"
    err = np.abs(fd[use] - closed) / denom
    wi = np.unravel_index(np.argmax(err), err.shape)
    half = cartesian_generator(cert, X, Y, fd_step / 2, use) / G
    rich = float(np.max(np.abs(half - fd[use]) / denom))
    kinks = kink_check(cert)
    bnd = boundedness_scan(cert)
    fails = []
    nonneg = ("psi1",) if cert.kind == "elliptic" else ("phi1", "phi3")
    for k in nonneg:
        if minima[k] < -1e-10:
            fails.append(f"{k} negative (min {minima[k]:.3e})")
    if margin < -margin_tolerance:
        mi = np.unravel_index(np.argmin(closed + cert.rate), closed.shape)
        fails.append(f"Lg/g + rate = {margin:.3e} at r={R[mi]:.6g}, theta={TH[mi]:.6g}")
    if polar > tolerance:
        fails.append(f"factor algebra disagrees with the polar generator ({polar:.3e})")
    if match is None:
        fails.append(f"no convention matches the finite-difference oracle; worst at r={R[wi]:.6g}, "
                     f"theta={TH[wi]:.6g} ({disc[use]:.3e})")
    if not all(v["c1"] for v in kinks.values()):
        fails.append("g is not C1 across a kink")
    if not bnd["bounded"]:
        fails.append("g is not numerically bounded on r in [0, 100]")
    return VerificationReport(cert.kind, cert.rho, cert.rate, float(fd_step), float(tolerance), int(closed.size),
                              margin, minima, polar, disc, match, rich, (float(R[wi]), float(TH[wi])), kinks, bnd,
                              not fails, tuple(fails))


@dataclass(frozen=True)
class RateBounds:
    """Persistence-rate interval of {x > 0} in original time units."""

    lower: float
    upper: float
    upper_available: bool
    omega: float
    rho: float
    certified_rate: float  # 3 + 2 rho, the turning-clock rate of the hypoelliptic certificate

    def __iter__(self):
        yield self.lower
        yield self.upper if self.upper_available else None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def rate_bounds(params: ModelParams) -> RateBounds:
    """lower = (ln 2/pi) omega; upper = (3 + a/omega) omega, usable when (1 + 1/sqrt2) a <= b.

    The upper value is always computed; ``upper_available`` flags whether its
    condition holds.
    """
    sp = require_oscillatory(params)
    w = sp.omega
    cond = (1.0 + 1.0 / math.sqrt(2.0)) * params.a <= params.b
    cert = 3.0 + 2.0 * sp.rho
    return RateBounds(math.log(2.0) / math.pi * w, (3.0 + params.a / w) * w, bool(cond), w, sp.rho, cert)
