# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend.

API and semantics mirror `torusgas._ref`; see that module for the potential
encoding and the proposal-row layout.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, fabs, floor, pow, sqrt

cnp.import_array()

BACKEND = "compiled"

cdef double _LJ_CAP = 1e150


cdef inline double _mi_abs(double delta, double L) nogil:
    cdef double dd = fabs(delta)
    dd = dd - L * floor(dd / L)
    if dd > 0.5 * L:
        dd = L - dd
    return dd


cdef inline double _phi_r(double r, int kind, const double* p) nogil:
    cdef double sr6
    if kind == 0:
        return 0.0
    if kind == 1:
        return p[0] if r <= p[1] else 0.0
    if kind == 2:
        return p[0] * (1.0 - r / p[1]) if r <= p[1] else 0.0
    if kind == 3:
        if r <= p[2]:
            return INFINITY
        return p[0] if r <= p[1] else 0.0
    # kind == 4: truncated Lennard-Jones
    if r > p[1]:
        return 0.0
    if r <= 0.0:
        return INFINITY
    sr6 = pow(p[2] / r, 6.0)
    if sr6 >= _LJ_CAP:
        return INFINITY
    return 4.0 * p[0] * (sr6 * sr6 - sr6)


cdef inline double _dist(const double* a, const double* b, int d, double L) nogil:
    cdef double acc = 0.0, dd
    cdef int k
    for k in range(d):
        dd = _mi_abs(a[k] - b[k], L)
        acc += dd * dd
    return sqrt(acc)


cdef double _rel_energy_excl(const double* pts, int n, int d, int skip,
                             const double* x, double L, int kind,
                             const double* p) nogil:
    cdef double total = 0.0, e
    cdef int i
    if kind == 0:
        return 0.0
    for i in range(n):
        if i == skip:
            continue
        e = _phi_r(_dist(pts + i * d, x, d, L), kind, p)
        if e == INFINITY:
            return INFINITY
        total += e
    return total


def phi_of_dist(dist, int kind, p):
    """Radial pair potential at distances (vectorized, matches _ref)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r = \
        np.ascontiguousarray(np.atleast_1d(dist), dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pp = \
        np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(r.shape[0])
    cdef Py_ssize_t i
    for i in range(r.shape[0]):
        out[i] = _phi_r(r[i], kind, &pp[0])
    if np.ndim(dist) == 0:
        return float(out[0])
    return out.reshape(np.shape(dist))


def rel_energy(pts, x, double L, int kind, p):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = \
        np.ascontiguousarray(np.atleast_2d(pts), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xx = \
        np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pp = \
        np.ascontiguousarray(p, dtype=np.float64)
    if a.shape[0] == 0:
        return 0.0
    return _rel_energy_excl(&a[0, 0], a.shape[0], a.shape[1], -1,
                            &xx[0], L, kind, &pp[0])


def rel_energy_excl(pts, int skip, x, double L, int kind, p):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = \
        np.ascontiguousarray(np.atleast_2d(pts), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xx = \
        np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pp = \
        np.ascontiguousarray(p, dtype=np.float64)
    return _rel_energy_excl(&a[0, 0], a.shape[0], a.shape[1], skip,
                            &xx[0], L, kind, &pp[0])


def rel_energy_grid(pts, grid, double L, int kind, p):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = \
        np.ascontiguousarray(np.atleast_2d(pts), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] g = \
        np.ascontiguousarray(np.atleast_2d(grid), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pp = \
        np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(g.shape[0])
    cdef Py_ssize_t j
    cdef int n = a.shape[0], d = a.shape[1]
    if kind == 0 or n == 0:
        return out
    for j in range(g.shape[0]):
        out[j] = _rel_energy_excl(&a[0, 0], n, d, -1, &g[j, 0], L, kind, &pp[0])
    return out


def total_energy(pts, double L, int kind, p):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = \
        np.ascontiguousarray(np.atleast_2d(pts), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pp = \
        np.ascontiguousarray(p, dtype=np.float64)
    cdef double total = 0.0, e
    cdef int i, j, n = a.shape[0], d = a.shape[1]
    if kind == 0 or n < 2:
        return 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            e = _phi_r(_dist(&a[i, 0], &a[j, 0], d, L), kind, &pp[0])
            if e == INFINITY:
                return INFINITY
            total += e
    return total


def pair_dist_hist(pts, double L, edges):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = \
        np.ascontiguousarray(np.atleast_2d(pts), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e = \
        np.ascontiguousarray(edges, dtype=np.float64)
    cdef int nb = e.shape[0] - 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(nb, dtype=np.int64)
    cdef int i, j, lo, hi, mid, n = a.shape[0], d = a.shape[1]
    cdef double dist
    if n < 2:
        return counts
    for i in range(n - 1):
        for j in range(i + 1, n):
            dist = _dist(&a[i, 0], &a[j, 0], d, L)
            if dist < e[0] or dist > e[nb]:
                continue
            if dist == e[nb]:
                counts[nb - 1] += 1
                continue
            lo = 0
            hi = nb
            while hi - lo > 1:  # find lo with e[lo] <= dist < e[lo+1]
                mid = (lo + hi) // 2
                if e[mid] <= dist:
                    lo = mid
                else:
                    hi = mid
            if dist >= e[lo]:
                counts[lo] += 1
    return counts


def run_proposals(buf, int n, double L, int kind, p, double z,
                  double p_birth, double p_death, double disp_scale, u):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = buf
    cdef cnp.ndarray[cnp.float64_t, ndim=2] uu = \
        np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pp = \
        np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(6, dtype=np.int64)
    cdef int d = b.shape[1]
    cdef double V = pow(L, d)
    cdef Py_ssize_t t
    cdef int i, k
    cdef double u_move, u_pick, u_acc, e, e_old, e_new, acc, xk
    cdef double x[3]
    for t in range(uu.shape[0]):
        u_move = uu[t, 0]
        u_pick = uu[t, 1]
        u_acc = uu[t, 2 + d]
        if u_move < p_birth:
            counts[0] += 1
            for k in range(d):
                x[k] = uu[t, 2 + k] * L
            e = _rel_energy_excl(&b[0, 0], n, d, -1, x, L, kind, &pp[0])
            acc = 0.0 if e == INFINITY else z * V * exp(-e) / (n + 1)
            if u_acc < acc:
                for k in range(d):
                    b[n, k] = x[k]
                n += 1
                counts[1] += 1
        elif u_move < p_birth + p_death:
            counts[2] += 1
            if n == 0:
                continue
            i = <int>(u_pick * n)
            if i > n - 1:
                i = n - 1
            e = _rel_energy_excl(&b[0, 0], n, d, i, &b[i, 0], L, kind, &pp[0])
            acc = INFINITY if e == INFINITY else n * exp(e) / (z * V)
            if u_acc < acc:
                for k in range(d):
                    b[i, k] = b[n - 1, k]
                n -= 1
                counts[3] += 1
        else:
            counts[4] += 1
            if n == 0:
                continue
            i = <int>(u_pick * n)
            if i > n - 1:
                i = n - 1
            for k in range(d):
                xk = b[i, k] + disp_scale * (2.0 * uu[t, 2 + k] - 1.0)
                xk = xk - L * floor(xk / L)
                if xk >= L:
                    xk -= L
                x[k] = xk
            e_new = _rel_energy_excl(&b[0, 0], n, d, i, x, L, kind, &pp[0])
            if e_new == INFINITY:
                continue
            e_old = _rel_energy_excl(&b[0, 0], n, d, i, &b[i, 0], L, kind, &pp[0])
            acc = INFINITY if e_old == INFINITY else exp(e_old - e_new)
            if u_acc < acc:
                for k in range(d):
                    b[i, k] = x[k]
                counts[5] += 1
    return n, counts
