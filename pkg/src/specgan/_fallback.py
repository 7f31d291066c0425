"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` one-for-one and are selected by
:mod:`specgan.kernels` when the compiled extension is unavailable.
Floating-point operation order matches the compiled versions so both
paths give identical results wherever that is cheap to guarantee.
"""

import math

import numpy as np

BACKEND = "python"


def legendre_table(lmax, x):
    """Normalized associated Legendre values for every (l, m), 0 <= m <= l <= lmax.

    Returns an array of shape ``(len(x), (lmax+1)(lmax+2)/2)`` whose column
    ``l(l+1)/2 + m`` holds ``sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m(x)``,
    with the Condon-Shortley phase included in ``P_l^m``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    out = np.zeros((n, (lmax + 1) * (lmax + 2) // 2))
    s = np.sqrt(np.maximum(0.0, (1.0 - x) * (1.0 + x)))
    pmm = np.full(n, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(lmax + 1):
        if m > 0:
            pmm = -math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * pmm
        out[:, m * (m + 1) // 2 + m] = pmm
        if m == lmax:
            break
        p1 = pmm
        p0 = math.sqrt(2.0 * m + 3.0) * x * pmm
        out[:, (m + 1) * (m + 2) // 2 + m] = p0
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p2 = a * (x * p0 - b * p1)
            out[:, l * (l + 1) // 2 + m] = p2
            p1, p0 = p0, p2
    return out


def raycast(vertices, faces, dirs, eps=1e-9):
    """First and last hit distance along each unit direction from the origin.

    Möller-Trumbore test against every triangle; misses are reported as NaN.
    """
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0
    # origin is 0, so tvec = -v0
    tvec = -v0
    qvec = np.cross(tvec, e1)
    first = np.full(dirs.shape[0], np.nan)
    last = np.full(dirs.shape[0], np.nan)
    chunk = max(1, 2_000_000 // max(1, faces.shape[0]))
    for start in range(0, dirs.shape[0], chunk):
        d = dirs[start:start + chunk]
        pvec = np.cross(d[:, None, :], e2[None, :, :])
        det = np.einsum("fk,rfk->rf", e1, pvec)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        u = np.einsum("fk,rfk->rf", tvec, pvec) * inv
        v = np.einsum("rk,fk->rf", d, qvec) * inv
        t = np.einsum("fk,fk->f", e2, qvec)[None, :] * inv
        hit = ok & (u >= -eps) & (u <= 1.0 + eps) & (v >= -eps) & (u + v <= 1.0 + eps) & (t > eps)
        tmin = np.where(hit, t, np.inf).min(axis=1)
        tmax = np.where(hit, t, -np.inf).max(axis=1)
        any_hit = hit.any(axis=1)
        first[start:start + chunk] = np.where(any_hit, tmin, np.nan)
        last[start:start + chunk] = np.where(any_hit, tmax, np.nan)
    return first, last


def nn_sqdist(a, b):
    """Squared distance and index of the nearest point in ``b`` for every point in ``a``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    best = np.empty(a.shape[0])
    arg = np.empty(a.shape[0], dtype=np.int64)
    chunk = max(1, 4_000_000 // max(1, b.shape[0]))
    for start in range(0, a.shape[0], chunk):
        p = a[start:start + chunk]
        dx = p[:, 0, None] - b[None, :, 0]
        dy = p[:, 1, None] - b[None, :, 1]
        dz = p[:, 2, None] - b[None, :, 2]
        d = dx * dx + dy * dy + dz * dz
        idx = d.argmin(axis=1)
        arg[start:start + chunk] = idx
        best[start:start + chunk] = d[np.arange(d.shape[0]), idx]
    return best, arg


def auction_assign(cost, eps_final):
    """Min-cost perfect matching by Gauss-Seidel auction with epsilon scaling.

    Returns ``assign`` with ``assign[i]`` the column given to row ``i``. The
    total cost is within ``n * eps_final`` of optimal.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n = cost.shape[0]
    benefit = -cost
    prices = np.zeros(n)
    eps = max(float(np.max(cost) - np.min(cost)) / 4.0, eps_final)
    while True:
        owner = np.full(n, -1, dtype=np.int64)
        assign = np.full(n, -1, dtype=np.int64)
        free = list(range(n - 1, -1, -1))
        while free:
            i = free.pop()
            values = benefit[i] - prices
            j = int(np.argmax(values))
            best = values[j]
            if n > 1:
                values[j] = -np.inf
                second = values.max()
            else:
                second = best - eps
            prices[j] += best - second + eps
            prev = owner[j]
            if prev >= 0:
                assign[prev] = -1
                free.append(prev)
            owner[j] = i
            assign[i] = j
        if eps <= eps_final:
            return assign
        eps = max(eps / 5.0, eps_final)
