# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics are mirrored one-to-one by _pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor

cnp.import_array()


def linear_gauss_steps(const double[:, :] Phi, const double[:, :] L,
                       const double[:, :] z0, const double[:, :, ::1] normals):
    """z[m+1, j] = Phi z[m, j] + L xi[m, j]; returns the (m+1, B, d) array."""
    cdef Py_ssize_t m = normals.shape[0], B = normals.shape[1], d = normals.shape[2]
    cdef Py_ssize_t s, j, p, q
    cdef double acc
    out_arr = np.empty((m + 1, B, d))
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for j in range(B):
            for p in range(d):
                out[0, j, p] = z0[j, p]
        for s in range(m):
            for j in range(B):
                for p in range(d):
                    acc = 0.0
                    for q in range(d):
                        acc = acc + Phi[p, q] * out[s, j, q] + L[p, q] * normals[s, j, q]
                    out[s + 1, j, p] = acc
    return out_arr


def exit_scan(const double[:, :] Phi, const double[:, :] L, const double[:, :] G,
              double[:, ::1] z, unsigned char[::1] alive, double[::1] tau,
              double t0, double dt, const double[:, :, ::1] normals,
              const double[::1] bb_var, const double[:, ::1] uniforms):
    """Advance alive 2-D paths; record the first time any constraint G z > 0 fails.

    The crossing time inside a step is linearly interpolated. When bb_var has
    positive entries and uniforms is non-empty, a Brownian-bridge probability
    of an unseen crossing is also applied per constraint. Returns the number of
    paths still alive.
    """
    cdef Py_ssize_t m = normals.shape[0], B = normals.shape[1], nc = G.shape[0]
    cdef Py_ssize_t s, j, k
    cdef double x, y, nx, ny, h0, h1, f, fbest, p
    cdef int use_bb = uniforms.shape[0] > 0
    cdef Py_ssize_t n_alive = 0
    with nogil:
        for s in range(m):
            for j in range(B):
                if not alive[j]:
                    continue
                x = z[j, 0]
                y = z[j, 1]
                nx = Phi[0, 0] * x + Phi[0, 1] * y + L[0, 0] * normals[s, j, 0] + L[0, 1] * normals[s, j, 1]
                ny = Phi[1, 0] * x + Phi[1, 1] * y + L[1, 0] * normals[s, j, 0] + L[1, 1] * normals[s, j, 1]
                fbest = 2.0
                for k in range(nc):
                    h0 = G[k, 0] * x + G[k, 1] * y
                    h1 = G[k, 0] * nx + G[k, 1] * ny
                    if h1 <= 0.0:
                        f = h0 / (h0 - h1)
                        if f < fbest:
                            fbest = f
                    elif use_bb and bb_var[k] > 0.0:
                        p = exp(-2.0 * h0 * h1 / (bb_var[k] * dt))
                        if uniforms[s, j] < p and 0.5 < fbest:
                            fbest = 0.5
                if fbest <= 1.0:
                    alive[j] = 0
                    tau[j] = t0 + (s + fbest) * dt
                z[j, 0] = nx
                z[j, 1] = ny
        for j in range(B):
            if alive[j]:
                n_alive += 1
    return n_alive


def fleming_viot_steps(const double[:, :] Phi, const double[:, :] L, double[:, ::1] z,
                       const double[:, :, ::1] normals, const double[:, ::1] uniforms):
    """Step all particles, kill those with x <= 0 and copy a uniform survivor onto each.

    Returns per-step kill counts; a count of -1 marks total extinction (the
    ensemble is left at the pre-resampling state of that step).
    """
    cdef Py_ssize_t m = normals.shape[0], n = z.shape[0]
    cdef Py_ssize_t s, i, ns, nk, pick
    cdef double x, y
    kills_arr = np.zeros(m, dtype=np.int64)
    cdef cnp.int64_t[::1] kills = kills_arr
    surv_arr = np.empty(n, dtype=np.intp)
    dead_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] surv = surv_arr
    cdef Py_ssize_t[::1] dead = dead_arr
    with nogil:
        for s in range(m):
            ns = 0
            nk = 0
            for i in range(n):
                x = z[i, 0]
                y = z[i, 1]
                z[i, 0] = Phi[0, 0] * x + Phi[0, 1] * y + L[0, 0] * normals[s, i, 0] + L[0, 1] * normals[s, i, 1]
                z[i, 1] = Phi[1, 0] * x + Phi[1, 1] * y + L[1, 0] * normals[s, i, 0] + L[1, 1] * normals[s, i, 1]
                if z[i, 0] > 0.0:
                    surv[ns] = i
                    ns += 1
                else:
                    dead[nk] = i
                    nk += 1
            if ns == 0:
                kills[s] = -1
                break
            for i in range(nk):
                pick = surv[<Py_ssize_t>floor(uniforms[s, dead[i]] * ns)]
                z[dead[i], 0] = z[pick, 0]
                z[dead[i], 1] = z[pick, 1]
            kills[s] = nk
    return kills_arr


def exp_recursion(double coef, const double[::1] drive, double y0):
    """y[0] = y0, y[k+1] = coef * y[k] + drive[k]."""
    cdef Py_ssize_t n = drive.shape[0], k
    out_arr = np.empty(n + 1)
    cdef double[::1] out = out_arr
    with nogil:
        out[0] = y0
        for k in range(n):
            out[k + 1] = coef * out[k] + drive[k]
    return out_arr


def crossing_scan(const double[::1] x, double dt, double eps):
    """Alternating zero-crossing times tau_k and eps-excursion times r_k.

    tau_0 = 0, r_k = first grid time >= tau_k with |x| >= eps,
    tau_{k+1} = first zero of the linear interpolant after r_k.
    """
    cdef Py_ssize_t n = x.shape[0], i = 0, nt = 1, nr = 0
    cdef double t_tau = 0.0
    tau_arr = np.empty(n + 1)
    r_arr = np.empty(n + 1)
    cdef double[::1] tau = tau_arr
    cdef double[::1] r = r_arr
    cdef int seek_excursion = 1
    tau[0] = 0.0
    with nogil:
        while i < n:
            if seek_excursion:
                if i * dt >= t_tau and (x[i] >= eps or x[i] <= -eps):
                    r[nr] = i * dt
                    nr += 1
                    seek_excursion = 0
                else:
                    i += 1
                    continue
            # look for the first sign change after the excursion index i
            while i + 1 < n and not ((x[i] > 0.0 and x[i + 1] <= 0.0) or (x[i] < 0.0 and x[i + 1] >= 0.0)):
                i += 1
            if i + 1 >= n:
                break
            t_tau = (i + x[i] / (x[i] - x[i + 1])) * dt
            tau[nt] = t_tau
            nt += 1
            seek_excursion = 1
            i += 1
    return tau_arr[:nt].copy(), r_arr[:nr].copy()
