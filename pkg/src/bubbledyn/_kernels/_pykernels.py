"""Pure numpy/scipy versions of the compiled kernels (same signatures, same semantics)."""

import numpy as np
from scipy.signal import lfilter


def linear_gauss_steps(Phi, L, z0, normals):
    m, B, d = normals.shape
    out = np.empty((m + 1, B, d))
    out[0] = z0
    if m == 0:
        return out
    drive = normals @ np.asarray(L).T
    w, V = np.linalg.eig(Phi)
    # diagonalize the recursion when Phi is safely diagonalizable, then run scalar filters
    if np.linalg.cond(V) < 1e8:
        Vi = np.linalg.inv(V)
        e = drive @ Vi.T
        u0 = np.asarray(z0) @ Vi.T
        u = np.empty((m + 1, B, d), dtype=complex)
        u[0] = u0
        for p in range(d):
            zi = (w[p] * u0[:, p])[None, :]
            u[1:, :, p] = lfilter([1.0], [1.0, -w[p]], e[:, :, p], axis=0, zi=zi)[0]
        out[1:] = (u[1:] @ V.T).real
        return out
    z = np.array(z0, dtype=float)
    PhiT = np.asarray(Phi).T
    for s in range(m):
        z = z @ PhiT + drive[s]
        out[s + 1] = z
    return out


def exit_scan(Phi, L, G, z, alive, tau, t0, dt, normals, bb_var, uniforms):
    m = normals.shape[0]
    use_bb = uniforms.shape[0] > 0
    idx = np.flatnonzero(alive)
    for s in range(m):
        if idx.size == 0:
            break
        x = z[idx, 0]
        y = z[idx, 1]
        n0 = normals[s, idx, 0]
        n1 = normals[s, idx, 1]
        nx = Phi[0, 0] * x + Phi[0, 1] * y + L[0, 0] * n0 + L[0, 1] * n1
        ny = Phi[1, 0] * x + Phi[1, 1] * y + L[1, 0] * n0 + L[1, 1] * n1
        fbest = np.full(idx.size, 2.0)
        for k in range(G.shape[0]):
            h0 = G[k, 0] * x + G[k, 1] * y
            h1 = G[k, 0] * nx + G[k, 1] * ny
            hit = h1 <= 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                f = np.where(hit, h0 / (h0 - h1), 2.0)
            fbest = np.minimum(fbest, f)
            if use_bb and bb_var[k] > 0.0:
                with np.errstate(over="ignore"):
                    p = np.exp(-2.0 * h0 * h1 / (bb_var[k] * dt))
                bridge = (~hit) & (uniforms[s, idx] < p) & (fbest > 0.5)
                fbest = np.where(bridge, 0.5, fbest)
        dead = fbest <= 1.0
        if dead.any():
            di = idx[dead]
            alive[di] = 0
            tau[di] = t0 + (s + fbest[dead]) * dt
        z[idx, 0] = nx
        z[idx, 1] = ny
        idx = idx[~dead]
    return int(np.count_nonzero(alive))


def fleming_viot_steps(Phi, L, z, normals, uniforms):
    m, n = normals.shape[0], z.shape[0]
    kills = np.zeros(m, dtype=np.int64)
    for s in range(m):
        x = z[:, 0].copy()
        y = z[:, 1].copy()
        n0 = normals[s, :, 0]
        n1 = normals[s, :, 1]
        z[:, 0] = Phi[0, 0] * x + Phi[0, 1] * y + L[0, 0] * n0 + L[0, 1] * n1
        z[:, 1] = Phi[1, 0] * x + Phi[1, 1] * y + L[1, 0] * n0 + L[1, 1] * n1
        ok = z[:, 0] > 0.0
        surv = np.flatnonzero(ok)
        dead = np.flatnonzero(~ok)
        if surv.size == 0:
            kills[s] = -1
            break
        if dead.size:
            pick = surv[np.floor(uniforms[s, dead] * surv.size).astype(np.intp)]
            z[dead] = z[pick]
        kills[s] = dead.size
    return kills


def exp_recursion(coef, drive, y0):
    drive = np.asarray(drive, dtype=float)
    out = np.empty(drive.size + 1)
    out[0] = y0
    if drive.size:
        out[1:] = lfilter([1.0], [1.0, -coef], drive, zi=[coef * y0])[0]
    return out


def crossing_scan(x, dt, eps):
    x = np.asarray(x, dtype=float)
    n = x.size
    big = np.flatnonzero(np.abs(x) >= eps)
    sc = np.flatnonzero(((x[:-1] > 0) & (x[1:] <= 0)) | ((x[:-1] < 0) & (x[1:] >= 0)))
    tau, r = [0.0], []
    t_tau = 0.0
    while True:
        # first grid index at or after tau with |x| >= eps
        k = np.searchsorted(big, int(np.floor(t_tau / dt)))
        while k < big.size and big[k] * dt < t_tau:
            k += 1
        if k >= big.size:
            break
        i = big[k]
        r.append(i * dt)
        j = np.searchsorted(sc, i)
        if j >= sc.size or sc[j] + 1 >= n:
            break
        i = sc[j]
        t_tau = (i + x[i] / (x[i] - x[i + 1])) * dt
        tau.append(t_tau)
    return np.array(tau), np.array(r)
