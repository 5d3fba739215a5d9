"""Parameters, eigenstructure, linear changes of frame and memory kernels.

The bubble diffusion is the two-dimensional linear SDE

    dZ_t = A Z_t dt + C dB_t,   A = [[b - a, 1], [-b^2, -b]],   C = (c, 0)^T

where X (first coordinate) is the log-price deviation and Y the memory
drift. Everything in the package is built on the objects defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.special import gammaincc

from .errors import InvalidParameter, NotOscillatoryError

__all__ = [
    "Regime",
    "ModelParams",
    "SpectralData",
    "DriftSystem",
    "TurningTransform",
    "MemoryKernel",
    "Slope",
    "AngularSector",
    "spectral",
    "drift_system",
    "turning_transform",
    "sector_angles",
    "kernel_weights",
    "memory_drift_system",
    "J2",
]

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


class Regime(str, Enum):
    OSCILLATORY = "oscillatory"
    CRITICAL = "critical"
    OVERDAMPED = "overdamped"


@dataclass(frozen=True)
class ModelParams:
    """The triple (a, b, c): restoring rate, memory decay rate, volatility."""

    a: float
    b: float
    c: float = 1.0

    def __post_init__(self):
        for name in ("a", "b", "c"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise InvalidParameter(f"{name} must be a finite real, got {v!r}")
        if not self.a > 0:
            raise InvalidParameter(f"invariant a>0 violated (a={self.a!r})")
        if not self.b > 0:
            raise InvalidParameter(f"invariant b>0 violated (b={self.b!r})")
        if not self.c >= 0:
            raise InvalidParameter(f"invariant c>=0 violated (c={self.c!r})")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "c", float(self.c))

    @property
    def regime(self) -> Regime:
        disc = self.a * self.a - 4.0 * self.a * self.b
        if disc < 0:
            return Regime.OSCILLATORY
        if disc == 0:
            return Regime.CRITICAL
        return Regime.OVERDAMPED

    def with_c(self, c: float) -> "ModelParams":
        return ModelParams(self.a, self.b, c)


@dataclass(frozen=True)
class SpectralData:
    lambda_plus: complex
    lambda_minus: complex
    l: float
    omega: float
    rho: Optional[float]
    kappa: Optional[float]
    regime: Regime

    @property
    def period(self) -> float:
        """Pseudo-period 2*pi/omega (inf outside the oscillatory regime)."""
        return 2.0 * math.pi / self.omega if self.omega > 0 else math.inf


def spectral(params: ModelParams) -> SpectralData:
    a, b = params.a, params.b
    disc = a * a - 4.0 * a * b
    l = (-a + math.sqrt(max(disc, 0.0))) / 2.0
    if disc < 0:
        omega = math.sqrt(a * b - a * a / 4.0)
        lp, lm = complex(-a / 2.0, omega), complex(-a / 2.0, -omega)
        rho = a / (2.0 * omega)
        kappa = (b - a / 2.0) / omega
    else:
        omega = 0.0
        s = math.sqrt(disc)
        lp, lm = complex((-a + s) / 2.0, 0.0), complex((-a - s) / 2.0, 0.0)
        rho = kappa = None
    return SpectralData(lp, lm, l, omega, rho, kappa, params.regime)


def require_oscillatory(params: ModelParams) -> SpectralData:
    sp = spectral(params)
    if sp.regime is not Regime.OSCILLATORY:
        raise NotOscillatoryError(
            f"invariant a<4b violated (a={params.a!r}, b={params.b!r}, regime={sp.regime.value})"
        )
    return sp


@dataclass(frozen=True)
class DriftSystem:
    A: np.ndarray
    C: np.ndarray

    @property
    def Q(self) -> np.ndarray:
        return np.outer(self.C, self.C)


def drift_system(params: ModelParams) -> DriftSystem:
    a, b, c = params.a, params.b, params.c
    A = np.array([[b - a, 1.0], [-b * b, -b]])
    C = np.array([c, 0.0])
    A.setflags(write=False)
    C.setflags(write=False)
    return DriftSystem(A, C)


@dataclass(frozen=True)
class TurningTransform:
    """Linear change of frame and clock that turns the flow into a unit-speed rotation.

    Original state Z at original time s maps to turning state
    Zhat = sqrt(omega) * alpha * P_inv @ Z at turning time omega * s.
    """

    P: np.ndarray
    P_inv: np.ndarray
    alpha: float
    time_scale: float
    rho: float
    kappa: float

    @property
    def scale(self) -> float:
        return math.sqrt(self.time_scale) * self.alpha

    def to_turning(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.scale * (z @ self.P_inv.T)

    def from_turning(self, zhat) -> np.ndarray:
        zhat = np.asarray(zhat, dtype=float)
        return (zhat @ self.P.T) / self.scale

    def cov_from_turning(self, cov_hat) -> np.ndarray:
        return self.P @ np.asarray(cov_hat) @ self.P.T / self.scale**2

    def cov_to_turning(self, cov) -> np.ndarray:
        return self.scale**2 * (self.P_inv @ np.asarray(cov) @ self.P_inv.T)

    def turning_time(self, t):
        return np.asarray(t) * self.time_scale if np.ndim(t) else t * self.time_scale

    def original_time(self, t_hat):
        return np.asarray(t_hat) / self.time_scale if np.ndim(t_hat) else t_hat / self.time_scale


def turning_transform(params: ModelParams) -> TurningTransform:
    sp = require_oscillatory(params)
    if params.c == 0:
        raise InvalidParameter("invariant c>0 violated: the turning frame rescales by 1/c")
    a, b, c, w = params.a, params.b, params.c, sp.omega
    P = np.array([[(a / 2.0 - b) / (b * b), w / (b * b)], [1.0, 0.0]])
    # explicit inverse; det(P) = -w/b^2
    P_inv = np.array([[0.0, 1.0], [b * b / w, (b - a / 2.0) / w]])
    P.setflags(write=False)
    P_inv.setflags(write=False)
    alpha = math.sqrt(2.0) * w / (c * b * b)
    return TurningTransform(P, P_inv, alpha, w, sp.rho, sp.kappa)


class Slope:
    """Extended-real slope of a sector boundary line y = alpha * x.

    Infinite slopes are tagged values (``Slope.NEG_INF``, ``Slope.POS_INF``),
    never sentinel floats.
    """

    __slots__ = ("kind", "value")

    def __init__(self, kind: str, value: float = 0.0):
        if kind not in ("-inf", "finite", "+inf"):
            raise InvalidParameter(f"unknown slope kind {kind!r}")
        if kind == "finite" and not math.isfinite(value):
            raise InvalidParameter("finite slope must carry a finite value")
        self.kind = kind
        self.value = float(value) if kind == "finite" else 0.0

    @classmethod
    def finite(cls, value: float) -> "Slope":
        return cls("finite", value)

    @classmethod
    def of(cls, x: Union["Slope", float, str]) -> "Slope":
        if isinstance(x, Slope):
            return x
        if isinstance(x, str):
            s = x.strip().lower()
            if s in ("-inf", "-infinity"):
                return cls.NEG_INF
            if s in ("inf", "+inf", "infinity", "+infinity"):
                return cls.POS_INF
            x = float(s)
        x = float(x)
        if x == math.inf:
            return cls.POS_INF
        if x == -math.inf:
            return cls.NEG_INF
        return cls.finite(x)

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    def _order(self):
        return {"-inf": (0, 0.0), "finite": (1, self.value), "+inf": (2, 0.0)}[self.kind]

    def __lt__(self, other: "Slope") -> bool:
        return self._order() < Slope.of(other)._order()

    def __eq__(self, other) -> bool:
        try:
            return self._order() == Slope.of(other)._order()
        except (TypeError, ValueError, InvalidParameter):
            return NotImplemented

    def __hash__(self):
        return hash(self._order())

    def __float__(self) -> float:
        return {"-inf": -math.inf, "+inf": math.inf}.get(self.kind, self.value)

    def __repr__(self) -> str:
        return f"Slope({self.kind})" if not self.is_finite else f"Slope({self.value!r})"


Slope.NEG_INF = Slope("-inf")
Slope.POS_INF = Slope("+inf")


@dataclass(frozen=True)
class AngularSector:
    """Sector {x > 0, alpha1 x < y < alpha2 x} and its angles in the turning frame."""

    alpha1: Slope
    alpha2: Slope
    theta_tilde1: float
    theta_tilde2: float
    omega: float

    @property
    def is_half_plane(self) -> bool:
        return self.alpha1 == Slope.NEG_INF and self.alpha2 == Slope.POS_INF

    @property
    def opening(self) -> float:
        return self.theta_tilde1 - self.theta_tilde2

    @property
    def u_turn_time(self) -> float:
        """Time for the noiseless flow to sweep the sector (original clock)."""
        return self.opening / self.omega

    @property
    def rate_bound(self) -> float:
        """Exponential rate in P[tau_S > t] <= 2 exp(-rate t)."""
        return math.log(2.0) * self.omega / self.opening

    def constraints(self) -> np.ndarray:
        """Rows (p, q) with the sector equal to {p x + q y > 0 for every row}."""
        rows = [(1.0, 0.0)]
        if self.alpha1.is_finite:
            rows.append((-self.alpha1.value, 1.0))
        if self.alpha2.is_finite:
            rows.append((self.alpha2.value, -1.0))
        return np.array(rows)

    def contains(self, z) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(self.constraints() @ z > 0))


def _theta_tilde(params: ModelParams, omega: float, s: Slope) -> float:
    if s.kind == "-inf":
        return math.pi / 2.0
    if s.kind == "+inf":
        return -math.pi / 2.0
    return math.atan((params.a / 2.0 - params.b - s.value) / omega)


def sector_angles(params: ModelParams, alpha1=Slope.NEG_INF, alpha2=Slope.POS_INF) -> AngularSector:
    sp = require_oscillatory(params)
    s1, s2 = Slope.of(alpha1), Slope.of(alpha2)
    if not s1 < s2:
        raise InvalidParameter(f"invariant alpha1<alpha2 violated ({s1!r}, {s2!r})")
    if s1 == Slope.POS_INF or s2 == Slope.NEG_INF:
        raise InvalidParameter("sector slopes must satisfy alpha1<+inf and alpha2>-inf")
    return AngularSector(s1, s2, _theta_tilde(params, sp.omega, s1), _theta_tilde(params, sp.omega, s2), sp.omega)


@dataclass(frozen=True)
class MemoryKernel:
    k: int
    b: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise InvalidParameter(f"invariant k>=2 (integer) violated (k={self.k!r})")
        if not self.b > 0:
            raise InvalidParameter(f"invariant b>0 violated (b={self.b!r})")

    @property
    def scale(self) -> float:
        """Prefactor b*(k-2)! multiplying g_{b,k}."""
        return self.b * math.factorial(int(self.k) - 2)

    def g(self, s):
        # e^{-x} sum_{l<=n} x^l/l! is the regularized upper incomplete gamma Q(n+1, x)
        return gammaincc(int(self.k) - 1, self.b * np.asarray(s, dtype=float))

    def weight(self, s):
        return self.scale * self.g(s)


def kernel_weights(k: int, b: float, s_grid) -> np.ndarray:
    return MemoryKernel(k, b).weight(s_grid)


def memory_drift_system(params: ModelParams, k: int):
    """Linear realization of the order-k integro-SDE.

    State (X, M_0, ..., M_{k-2}) with
    M_j(t) = int_0^t e^{-b(t-s)} (b(t-s))^j / j! dX_s, so that the memory
    drift equals b (k-2)! * sum_j M_j. Returns (A_k, C_k).
    """
    kern = MemoryKernel(k, params.b)
    a, b, c = params.a, params.b, params.c
    w = kern.scale
    d = int(k)
    A = np.zeros((d, d))
    A[0, 0] = -a
    A[0, 1:] = w
    A[1, :] = A[0, :]
    A[1, 1] -= b
    for j in range(2, d):
        A[j, j] = -b
        A[j, j - 1] = b
    C = np.zeros(d)
    C[0] = c
    C[1] = c
    return A, C
