# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same contracts as ``_fallback``."""

import numpy as np

from libc.math cimport sqrt, fabs, M_PI, INFINITY, NAN

BACKEND = "cython"


def legendre_table(int lmax, x):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t ncol = (lmax + 1) * (lmax + 2) // 2
    out_arr = np.zeros((n, ncol))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i
    cdef int l, m
    cdef double xi, s, pmm, p0, p1, p2, a, b
    cdef double inv4pi = 1.0 / sqrt(4.0 * M_PI)
    for i in range(n):
        xi = xv[i]
        s = (1.0 - xi) * (1.0 + xi)
        s = sqrt(s) if s > 0.0 else 0.0
        pmm = inv4pi
        for m in range(lmax + 1):
            if m > 0:
                pmm = -sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * pmm
            out[i, m * (m + 1) // 2 + m] = pmm
            if m == lmax:
                break
            p1 = pmm
            p0 = sqrt(2.0 * m + 3.0) * xi * pmm
            out[i, (m + 1) * (m + 2) // 2 + m] = p0
            for l in range(m + 2, lmax + 1):
                a = sqrt((4.0 * l * l - 1.0) / (<double>l * l - <double>m * m))
                b = sqrt(((l - 1.0) * (l - 1.0) - <double>m * m) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0))
                p2 = a * (xi * p0 - b * p1)
                out[i, l * (l + 1) // 2 + m] = p2
                p1 = p0
                p0 = p2
    return out_arr


def raycast(vertices, faces, dirs, double eps=1e-9):
    cdef double[:, ::1] V = np.ascontiguousarray(vertices, dtype=np.float64)
    cdef long long[:, ::1] F = np.ascontiguousarray(faces, dtype=np.int64)
    cdef double[:, ::1] D = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef Py_ssize_t nf = F.shape[0], nr = D.shape[0]
    first_arr = np.empty(nr)
    last_arr = np.empty(nr)
    cdef double[::1] first = first_arr
    cdef double[::1] last = last_arr
    # per-face precomputation: e1, e2, tvec = -v0, qvec = tvec x e1, t numerator
    pre_arr = np.empty((nf, 13))
    cdef double[:, ::1] P = pre_arr
    cdef Py_ssize_t f, r
    cdef double e1x, e1y, e1z, e2x, e2y, e2z, tx, ty, tz
    for f in range(nf):
        tx = -V[F[f, 0], 0]
        ty = -V[F[f, 0], 1]
        tz = -V[F[f, 0], 2]
        e1x = V[F[f, 1], 0] + tx
        e1y = V[F[f, 1], 1] + ty
        e1z = V[F[f, 1], 2] + tz
        e2x = V[F[f, 2], 0] + tx
        e2y = V[F[f, 2], 1] + ty
        e2z = V[F[f, 2], 2] + tz
        P[f, 0] = e1x; P[f, 1] = e1y; P[f, 2] = e1z
        P[f, 3] = e2x; P[f, 4] = e2y; P[f, 5] = e2z
        P[f, 6] = tx; P[f, 7] = ty; P[f, 8] = tz
        P[f, 9] = ty * e1z - tz * e1y
        P[f, 10] = tz * e1x - tx * e1z
        P[f, 11] = tx * e1y - ty * e1x
        P[f, 12] = e2x * P[f, 9] + e2y * P[f, 10] + e2z * P[f, 11]
    cdef double dx, dy, dz, px, py, pz, det, inv, u, v, t, tmin, tmax
    cdef bint hit
    for r in range(nr):
        dx = D[r, 0]; dy = D[r, 1]; dz = D[r, 2]
        tmin = INFINITY
        tmax = -INFINITY
        hit = False
        for f in range(nf):
            px = dy * P[f, 5] - dz * P[f, 4]
            py = dz * P[f, 3] - dx * P[f, 5]
            pz = dx * P[f, 4] - dy * P[f, 3]
            det = P[f, 0] * px + P[f, 1] * py + P[f, 2] * pz
            if fabs(det) <= 1e-12:
                continue
            inv = 1.0 / det
            u = (P[f, 6] * px + P[f, 7] * py + P[f, 8] * pz) * inv
            if u < -eps or u > 1.0 + eps:
                continue
            v = (dx * P[f, 9] + dy * P[f, 10] + dz * P[f, 11]) * inv
            if v < -eps or u + v > 1.0 + eps:
                continue
            t = P[f, 12] * inv
            if t <= eps:
                continue
            hit = True
            if t < tmin:
                tmin = t
            if t > tmax:
                tmax = t
        if hit:
            first[r] = tmin
            last[r] = tmax
        else:
            first[r] = NAN
            last[r] = NAN
    return first_arr, last_arr


def nn_sqdist(a, b):
    cdef double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t na = A.shape[0], nb = B.shape[0], i, j, jbest
    best_arr = np.empty(na)
    arg_arr = np.empty(na, dtype=np.int64)
    cdef double[::1] best = best_arr
    cdef long long[::1] arg = arg_arr
    cdef double ax, ay, az, dx, dy, dz, d, dbest
    for i in range(na):
        ax = A[i, 0]; ay = A[i, 1]; az = A[i, 2]
        dbest = INFINITY
        jbest = 0
        for j in range(nb):
            dx = ax - B[j, 0]
            dy = ay - B[j, 1]
            dz = az - B[j, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < dbest:
                dbest = d
                jbest = j
        best[i] = dbest
        arg[i] = jbest
    return best_arr, arg_arr


def auction_assign(cost, double eps_final):
    cdef double[:, ::1] C = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = C.shape[0], i, j, jbest, prev, k, nfree
    prices_arr = np.zeros(n)
    owner_arr = np.empty(n, dtype=np.int64)
    assign_arr = np.empty(n, dtype=np.int64)
    free_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] prices = prices_arr
    cdef long long[::1] owner = owner_arr
    cdef long long[::1] assign = assign_arr
    cdef long long[::1] free = free_arr
    cdef double val, best, second
    cdef double eps = (np.max(cost) - np.min(cost)) / 4.0
    if eps < eps_final:
        eps = eps_final
    while True:
        for k in range(n):
            owner[k] = -1
            assign[k] = -1
            free[k] = n - 1 - k
        nfree = n
        while nfree > 0:
            nfree -= 1
            i = free[nfree]
            best = -INFINITY
            second = -INFINITY
            jbest = 0
            for j in range(n):
                val = -C[i, j] - prices[j]
                if val > best:
                    second = best
                    best = val
                    jbest = j
                elif val > second:
                    second = val
            if n == 1:
                second = best - eps
            prices[jbest] += best - second + eps
            prev = owner[jbest]
            if prev >= 0:
                assign[prev] = -1
                free[nfree] = prev
                nfree += 1
            owner[jbest] = i
            assign[i] = jbest
        if eps <= eps_final:
            return assign_arr
        eps = eps / 5.0
        if eps < eps_final:
            eps = eps_final
