"""Path generation for the bubble diffusion and its comparators.

Four samplers share one linear-Gaussian stepping kernel:

- ``exact_path``: exact transition of the 2-D system over each step;
- ``euler_path``: explicit Euler-Maruyama;
- ``memory_path``: the order-k integro-SDE through its finite linear realization;
- ``matched_ou_path``: the 1-D OU with the same stationary variance and noise.

Randomness is counter based: path ``i`` of master seed ``s`` always draws from
the same Philox stream, so results do not depend on thread count, block layout
or on how many other paths are simulated.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .errors import InvalidParameter
from .gaussian import psd_sqrt, van_loan
from .model import ModelParams, drift_system, memory_drift_system

__all__ = [
    "RngPolicy",
    "Trajectory",
    "as_policy",
    "exact_step",
    "exact_path",
    "euler_path",
    "memory_path",
    "matched_ou_theta",
    "matched_ou_path",
]

# stream purposes
NORMALS = 0
UNIFORMS = 1
INITIAL = 2


@dataclass(frozen=True)
class RngPolicy:
    """Master seed plus the rule path index -> independent Philox stream."""

    seed: int = 0
    block_size: int = 256

    def __post_init__(self):
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidParameter(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.block_size < 1:
            raise InvalidParameter("block_size must be >= 1")

    @property
    def key(self) -> np.ndarray:
        return np.random.SeedSequence(int(self.seed)).generate_state(2, np.uint64)

    def stream(self, index: int, purpose: int = NORMALS, key: Optional[np.ndarray] = None) -> np.random.Generator:
        """Generator for (path index, purpose); the pair sits in the high counter words."""
        k = self.key if key is None else key
        ctr = np.array([0, 0, int(index), int(purpose)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=k, counter=ctr))


def as_policy(stream: Union[RngPolicy, int, None]) -> RngPolicy:
    if isinstance(stream, RngPolicy):
        return stream
    return RngPolicy(0 if stream is None else int(stream))


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled paths.

    ``states`` has shape (n_paths, n_records, dim); record ``m`` sits at time
    ``m * dt * record_every``.
    """

    dt: float
    states: np.ndarray
    origin: np.ndarray
    seed: Optional[int]
    method: str
    labels: tuple = ("x", "y")
    record_every: int = 1
    path_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.states.ndim != 3 or self.states.shape[1] < 1:
            raise InvalidParameter("states must be (n_paths, n_records>=1, dim)")
        if self.path_ids is None:
            object.__setattr__(self, "path_ids", np.arange(self.states.shape[0]))

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.states.shape[1]) * self.dt * self.record_every

    @property
    def x(self) -> np.ndarray:
        return self.states[:, :, 0]

    @property
    def y(self) -> np.ndarray:
        return self.states[:, :, 1]

    def path(self, i: int = 0) -> np.ndarray:
        return self.states[i]

    def at(self, t: float) -> np.ndarray:
        """States of all paths at the record nearest to time t."""
        m = int(round(t / (self.dt * self.record_every)))
        if not 0 <= m < self.states.shape[1]:
            raise InvalidParameter(f"time {t!r} outside the recorded grid")
        return self.states[:, m, :]


def _check_step(dt, n_steps):
    if not dt > 0 or not math.isfinite(dt):
        raise InvalidParameter(f"invariant dt>0 violated (dt={dt!r})")
    if int(n_steps) != n_steps or n_steps < 0:
        raise InvalidParameter(f"n_steps must be a non-negative integer, got {n_steps!r}")


def _draw_block(policy, key, ids, n_steps, dim):
    out = np.empty((n_steps, len(ids), dim))
    for j, i in enumerate(ids):
        out[:, j, :] = policy.stream(i, NORMALS, key).standard_normal((n_steps, dim))
    return out


def linear_paths(Phi, L, z0, dt, n_steps, stream=0, n_paths=1, threads=1, record_every=1,
                 first_path=0, method="linear", labels=None):
    """Run z_{m+1} = Phi z_m + L xi_m for a batch of independent paths."""
    _check_step(dt, n_steps)
    policy = as_policy(stream)
    Phi = np.ascontiguousarray(Phi, dtype=float)
    L = np.ascontiguousarray(L, dtype=float)
    d = Phi.shape[0]
    z0 = np.asarray(z0, dtype=float)
    if z0.ndim == 1:
        z0 = np.broadcast_to(z0, (n_paths, d))
    if z0.shape != (n_paths, d):
        raise InvalidParameter(f"initial state shape {z0.shape} incompatible with ({n_paths}, {d})")
    record_every = int(record_every)
    if record_every < 1:
        raise InvalidParameter("record_every must be >= 1")
    key = policy.key
    ids = np.arange(first_path, first_path + n_paths)
    B = policy.block_size
    blocks = [slice(s, min(s + B, n_paths)) for s in range(0, n_paths, B)]

    def run(sl):
        normals = _draw_block(policy, key, ids[sl], int(n_steps), d)
        zs = _kernels.linear_gauss_steps(Phi, L, np.ascontiguousarray(z0[sl]), normals)
        return np.ascontiguousarray(zs[::record_every].transpose(1, 0, 2))

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(sl) for sl in blocks]
    states = np.concatenate(parts, axis=0) if parts else np.empty((0, int(n_steps) // record_every + 1, d))
    return Trajectory(float(dt), states, np.array(z0[0] if n_paths else z0), policy.seed, method,
                      tuple(labels or ("x", "y")[:d]), record_every, ids)


def exact_step(params: ModelParams, dt: float):
    """(Phi, L) of the exact one-step transition, with L L^T the step covariance."""
    ds = drift_system(params)
    Phi, cov = van_loan(ds.A, ds.Q, dt)
    return Phi, psd_sqrt(cov)


def exact_path(params: ModelParams, z0, dt: float, n_steps: int, stream=0, n_paths: int = 1,
               threads: int = 1, record_every: int = 1, first_path: int = 0) -> Trajectory:
    Phi, L = exact_step(params, dt)
    return linear_paths(Phi, L, z0, dt, n_steps, stream, n_paths, threads, record_every, first_path, "exact")


def euler_path(params: ModelParams, z0, dt: float, n_steps: int, stream=0, n_paths: int = 1,
               threads: int = 1, record_every: int = 1, first_path: int = 0) -> Trajectory:
    ds = drift_system(params)
    Phi = np.eye(2) + ds.A * dt
    L = np.zeros((2, 2))
    L[:, 0] = ds.C * math.sqrt(dt)
    return linear_paths(Phi, L, z0, dt, n_steps, stream, n_paths, threads, record_every, first_path, "euler")


def memory_path(params: ModelParams, k: int, x0, dt: float, n_steps: int, stream=0, n_paths: int = 1,
                threads: int = 1, record_every: int = 1, first_path: int = 0) -> Trajectory:
    """Order-k integro-SDE through the state (X, M_0, ..., M_{k-2}).

    M_j(t) = int_0^t e^{-b(t-s)} (b(t-s))^j / j! dX_s starts at 0, and each step
    is the exact Gaussian transition of the augmented linear system, so large
    b is not stiff. The memory drift is b (k-2)! sum_j M_j.
    """
    if int(k) != k or k < 2:
        raise InvalidParameter(f"invariant k>=2 (integer) violated (k={k!r})")
    A, C = memory_drift_system(params, int(k))
    Phi, cov = van_loan(A, np.outer(C, C), dt)
    L = psd_sqrt(cov)
    x0 = np.asarray(x0, dtype=float)
    z0 = np.zeros((n_paths, int(k)))
    z0[:, 0] = x0
    labels = ("x",) + tuple(f"m{j}" for j in range(int(k) - 1))
    return linear_paths(Phi, L, z0, dt, n_steps, stream, n_paths, threads, record_every, first_path,
                        f"memory-k{int(k)}", labels)


def memory_drift(params: ModelParams, traj: Trajectory) -> np.ndarray:
    """b (k-2)! * sum_j M_j along a memory_path trajectory."""
    k = traj.states.shape[2]
    return params.b * math.factorial(k - 2) * traj.states[:, :, 1:].sum(axis=2)


def memory_to_xy(params: ModelParams, traj: Trajectory) -> np.ndarray:
    """(X, memory drift - b X); for k=2 this is the 2-D Markov pair (X, Y)."""
    x = traj.states[:, :, 0]
    return np.stack([x, memory_drift(params, traj) - params.b * x], axis=-1)


def matched_ou_theta(params: ModelParams) -> float:
    """Mean reversion giving the OU the bubble's stationary X-variance: c^2/(2 theta) = c^2 (a+b)/(2 a^2)."""
    return params.a * params.a / (params.a + params.b)


def matched_ou_path(params: ModelParams, x0, dt: float, n_steps: int, stream=0, n_paths: int = 1,
                    threads: int = 1, record_every: int = 1, first_path: int = 0) -> Trajectory:
    th = matched_ou_theta(params)
    phi = math.exp(-th * dt)
    var = params.c**2 * (-math.expm1(-2.0 * th * dt)) / (2.0 * th)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    z0 = x0.reshape(-1, 1) if x0.size == n_paths and n_paths > 1 else np.full((n_paths, 1), float(x0[0]))
    return linear_paths(np.array([[phi]]), np.array([[math.sqrt(var)]]), z0, dt, n_steps, stream, n_paths,
                        threads, record_every, first_path, "ou", ("x",))
