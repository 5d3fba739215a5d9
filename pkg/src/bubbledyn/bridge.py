"""Exact Gaussian bridges of the turning process, a bridge sampler, and the
small-duration explosion asymptotics, in the turning and original frames."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidParameter
from .gaussian import flow_matrix, psd_sqrt, transition_cov, turning_cov, turning_flow
from .model import ModelParams, turning_transform
from .simulate import NORMALS, Trajectory, as_policy

__all__ = [
    "BridgeLaw",
    "bridge_law",
    "bridge_law_by_conditioning",
    "bridge_sample",
    "turning_limit",
    "equal_x_limit",
    "explosion_check",
    "original_bridge_law",
    "original_bridge_law_by_conditioning",
    "original_limit",
    "to_original_frame",
]


def _inv2(M):
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    if np.any(~(np.abs(det) > 1e-300)):
        raise InvalidParameter("2x2 inversion with |det|<1e-300")
    out = np.empty_like(M)
    out[..., 0, 0] = M[..., 1, 1]
    out[..., 1, 1] = M[..., 0, 0]
    out[..., 0, 1] = -M[..., 0, 1]
    out[..., 1, 0] = -M[..., 1, 0]
    return out / det[..., None, None]


def _rot(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class BridgeLaw:
    """Marginals of the bridge at fractions u of the duration T."""

    T: float
    z0: np.ndarray
    zT: np.ndarray
    u: np.ndarray
    eta: np.ndarray  # (n, 2)
    sigma: np.ndarray  # (n, 2, 2)
    frame: str = "turning"


def _check_u(u_grid):
    u = np.atleast_1d(np.asarray(u_grid, dtype=float))
    if np.any((u <= 0) | (u >= 1)):
        raise InvalidParameter("bridge fractions must lie strictly inside (0, 1); the ends are point masses")
    return u


def _bridge_parts(rho, T, u):
    """Gain matrices: eta = K0 z0 + K1 zT, with sigma."""
    v = 1.0 - u
    Su = _inv2(turning_cov(rho, u * T))
    Sv = _inv2(turning_cov(rho, v * T))
    Bu, Bv = _rot(u * T), _rot(v * T)
    info = Su + math.exp(-2.0 * rho * v * T) * (Bv.T @ Sv @ Bv)
    sigma = _inv2(info)
    sigma = 0.5 * (sigma + sigma.T)
    K0 = sigma @ (math.exp(-rho * u * T) * (Su @ Bu))
    K1 = sigma @ (math.exp(-rho * v * T) * (Bv.T @ Sv))
    return K0, K1, sigma


def bridge_law(rho: float, z0, zT, T: float, u_grid=None) -> BridgeLaw:
    """Turning-process bridge from z0 (time 0) to zT (time T), exact for every T."""
    if not T > 0:
        raise InvalidParameter(f"invariant T>0 violated (T={T!r})")
    u = _check_u(np.linspace(0, 1, 103)[1:-1] if u_grid is None else u_grid)
    z0 = np.asarray(z0, dtype=float)
    zT = np.asarray(zT, dtype=float)
    eta = np.empty((u.size, 2))
    sig = np.empty((u.size, 2, 2))
    for i, ui in enumerate(u):
        K0, K1, s = _bridge_parts(rho, T, float(ui))
        eta[i] = K0 @ z0 + K1 @ zT
        sig[i] = s
    return BridgeLaw(float(T), z0, zT, u, eta, sig)


def _condition(mean_s, cov_s, flow_v, cov_v, zT):
    """Law of Z_s given Z_T = zT for a linear Gaussian chain (generic oracle)."""
    cov_T = flow_v @ cov_s @ flow_v.T + cov_v
    cross = cov_s @ flow_v.T
    gain = cross @ np.linalg.inv(cov_T)
    mean = mean_s + gain @ (zT - flow_v @ mean_s)
    cov = cov_s - gain @ cross.T
    return mean, 0.5 * (cov + cov.T)


def bridge_law_by_conditioning(rho, z0, zT, T, u_grid) -> BridgeLaw:
    """Same law obtained by conditioning the joint Gaussian of (Z_uT, Z_T) given Z_0."""
    u = _check_u(u_grid)
    z0 = np.asarray(z0, dtype=float)
    zT = np.asarray(zT, dtype=float)
    eta = np.empty((u.size, 2))
    sig = np.empty((u.size, 2, 2))
    for i, ui in enumerate(u):
        s, v = ui * T, (1 - ui) * T
        eta[i], sig[i] = _condition(turning_flow(rho, s) @ z0, turning_cov(rho, s), turning_flow(rho, v),
                                    turning_cov(rho, v), zT)
    return BridgeLaw(float(T), z0, zT, u, eta, sig)


def bridge_sample(rho: float, z0, zT, T: float, n_grid: int, stream=0, n_paths: int = 1,
                  first_path: int = 0) -> Trajectory:
    """Bridges on the uniform grid of n_grid points over [0, T].

    Each step draws from the bridge law of the remaining stretch, i.e. the
    one-step transition conditioned on the fixed end point; the last state is
    set to zT.
    """
    if int(n_grid) != n_grid or n_grid < 2:
        raise InvalidParameter(f"invariant n_grid>=2 violated (n_grid={n_grid!r})")
    if not T > 0:
        raise InvalidParameter(f"invariant T>0 violated (T={T!r})")
    policy = as_policy(stream)
    key = policy.key
    z0 = np.asarray(z0, dtype=float)
    zT = np.asarray(zT, dtype=float)
    n_steps = int(n_grid) - 1
    dt = T / n_steps
    steps = []
    for i in range(n_steps - 1):
        rem = T - i * dt
        K0, K1, s = _bridge_parts(rho, rem, dt / rem)
        steps.append((K0, K1 @ zT, psd_sqrt(s)))
    normals = np.empty((max(n_steps - 1, 0), n_paths, 2))
    for j in range(n_paths):
        normals[:, j, :] = policy.stream(first_path + j, NORMALS, key).standard_normal((n_steps - 1, 2))
    out = np.empty((n_paths, n_steps + 1, 2))
    z = np.broadcast_to(z0, (n_paths, 2)).copy()
    out[:, 0] = z
    for i, (K0, off, L) in enumerate(steps):
        z = z @ K0.T + off + normals[i] @ L.T
        out[:, i + 1] = z
    out[:, -1] = zT
    return Trajectory(dt, out, z0, policy.seed, "bridge", ("u", "v"), 1,
                      np.arange(first_path, first_path + n_paths))


def turning_limit(z0, zT, u) -> np.ndarray:
    """lim T eta_u in the turning frame: (0, 6u(1-u)(x0 - xT))."""
    u = np.asarray(u, dtype=float)
    return np.stack([np.zeros_like(u), 6.0 * u * (1.0 - u) * (z0[0] - zT[0])], axis=-1)


def equal_x_limit(rho, z0, zT, u) -> np.ndarray:
    """lim eta_u (no rescaling) when x0 = xT."""
    u = np.asarray(u, dtype=float)
    y = (1 - 4 * u + 3 * u * u) * z0[1] - (2 * u - 3 * u * u) * zT[1] - 6 * rho * u * (1 - u) * z0[0]
    return np.stack([np.full_like(u, z0[0]), y], axis=-1)


@dataclass(frozen=True)
class ExplosionTable:
    T: np.ndarray
    sup_error: np.ndarray  # sup_u |T eta_u - phi(u)|
    equal_x_error: Optional[np.ndarray]  # sup_u |eta_u - equal-x limit| when x0 = xT

    @property
    def ratio(self) -> np.ndarray:
        return self.sup_error / self.T

    def rows(self):
        for i, t in enumerate(self.T):
            yield {"T": float(t), "sup_error": float(self.sup_error[i]), "ratio": float(self.ratio[i]),
                   "equal_x_error": None if self.equal_x_error is None else float(self.equal_x_error[i])}


def explosion_check(rho: float, z0, zT, T_sequence: Sequence[float], u_grid=None) -> ExplosionTable:
    T_seq = np.asarray(T_sequence, dtype=float)
    if np.any(T_seq <= 0) or np.any(np.diff(T_seq) >= 0):
        raise InvalidParameter("T_sequence must be positive and strictly decreasing")
    z0 = np.asarray(z0, dtype=float)
    zT = np.asarray(zT, dtype=float)
    u = np.linspace(0, 1, 103)[1:-1] if u_grid is None else _check_u(u_grid)
    phi = turning_limit(z0, zT, u)
    same_x = z0[0] == zT[0]
    errs, exs = [], []
    for T in T_seq:
        bl = bridge_law(rho, z0, zT, float(T), u)
        errs.append(np.abs(T * bl.eta - phi).max())
        if same_x:
            exs.append(np.abs(bl.eta - equal_x_limit(rho, z0, zT, u)).max())
    return ExplosionTable(T_seq, np.array(errs), np.array(exs) if same_x else None)


# ---------------------------------------------------------------- original frame


def to_original_frame(law: BridgeLaw, params: ModelParams) -> BridgeLaw:
    """Push a turning-frame bridge law through the inverse change of frame and clock."""
    tr = turning_transform(params)
    eta = tr.from_turning(law.eta)
    sig = np.einsum("ij,njk,lk->nil", tr.P, law.sigma, tr.P) / tr.scale**2
    return BridgeLaw(law.T / tr.time_scale, tr.from_turning(law.z0), tr.from_turning(law.zT), law.u, eta, sig,
                     "original")


def original_bridge_law(params: ModelParams, z0, zT, T: float, u_grid=None) -> BridgeLaw:
    """Bridge of the original process over original duration T (via the turning frame)."""
    tr = turning_transform(params)
    law = bridge_law(tr.rho, tr.to_turning(z0), tr.to_turning(zT), tr.time_scale * T, u_grid)
    return to_original_frame(law, params)


def original_bridge_law_by_conditioning(params: ModelParams, z0, zT, T: float, u_grid) -> BridgeLaw:
    """Same law from the original-frame transition laws directly (no change of frame)."""
    u = _check_u(u_grid)
    z0 = np.asarray(z0, dtype=float)
    zT = np.asarray(zT, dtype=float)
    eta = np.empty((u.size, 2))
    sig = np.empty((u.size, 2, 2))
    for i, ui in enumerate(u):
        s, v = ui * T, (1 - ui) * T
        eta[i], sig[i] = _condition(flow_matrix(params, s) @ z0, transition_cov(params, s), flow_matrix(params, v),
                                    transition_cov(params, v), zT)
    return BridgeLaw(float(T), z0, zT, u, eta, sig, "original")


def original_limit(params: ModelParams, z0, zT, t) -> np.ndarray:
    """lim T Z_{tT} under the original-frame bridge: ((6/b^2) t(1-t)(y - y'), 0)."""
    t = np.asarray(t, dtype=float)
    b = params.b
    return np.stack([6.0 / (b * b) * t * (1 - t) * (z0[1] - zT[1]), np.zeros_like(t)], axis=-1)
