"""Real spherical harmonics and transforms on Driscoll-Healy grids.

Conventions used throughout the package:

* ``theta`` is the polar angle in [0, pi], ``phi`` the azimuth in [0, 2 pi).
* Coefficients of degree ``l`` and order ``m`` live at flat index
  ``l*l + l + m`` (l-major, m ascending from -l to +l).
* The real basis is orthonormal on the sphere::

      m > 0:  sqrt(2) N_l^m  P_l^m(cos theta) cos(m phi)
      m < 0:  sqrt(2) N_l^|m| P_l^|m|(cos theta) sin(|m| phi)
      m = 0:          N_l^0  P_l^0(cos theta)

  where ``N_l^m`` carries a factor (-1)^m and ``P_l^m`` the Condon-Shortley
  phase, so the two signs cancel in the product.

A 2M x 2M grid integrates products of harmonics exactly only up to degree
M - 1; the degree-M shell is aliased (``Y_M^{-M}`` vanishes on every node).
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import legendre_table


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


@dataclass(frozen=True)
class Degree:
    l: int
    m: int

    def __post_init__(self):
        if self.l < 0 or abs(self.m) > self.l:
            raise DomainError(f"invalid harmonic index (l={self.l}, m={self.m})")

    @property
    def index(self):
        return lm_index(self.l, self.m)


def lm_index(l, m):
    return l * l + l + m


def index_lm(idx):
    l = math.isqrt(idx)
    return l, idx - l * l - l


def num_coeffs(max_degree):
    return (max_degree + 1) ** 2


def degree_order_arrays(max_degree):
    """Arrays ``(l, m)`` of length (M+1)^2 in canonical order."""
    ls = np.concatenate([np.full(2 * l + 1, l) for l in range(max_degree + 1)])
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(max_degree + 1)])
    return ls, ms


@dataclass
class SMV:
    """Spherical-harmonic moment vector of one shape."""

    max_degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.max_degree < 0:
            raise ValueError("max_degree must be non-negative")
        if self.coeffs.shape != (num_coeffs(self.max_degree),):
            raise ValueError(
                f"SMV of degree {self.max_degree} needs {num_coeffs(self.max_degree)} "
                f"coefficients, got shape {self.coeffs.shape}"
            )
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("SMV coefficients must be finite")

    @classmethod
    def zeros(cls, max_degree):
        return cls(max_degree, np.zeros(num_coeffs(max_degree)))

    def __getitem__(self, lm):
        l, m = lm
        return self.coeffs[Degree(l, m).index]

    def __setitem__(self, lm, value):
        l, m = lm
        self.coeffs[Degree(l, m).index] = value


@dataclass
class SphericalGrid:
    """Equiangular samples ``radii[j, k] = r(thetas[j], phis[k])`` with row weights.

    ``misses`` counts nodes whose value was filled with 0 because no surface
    was found along that direction.
    """

    bandlimit: int
    thetas: np.ndarray
    phis: np.ndarray
    weights: np.ndarray
    radii: np.ndarray = field(default=None)
    misses: int = 0

    def __post_init__(self):
        n = 2 * self.bandlimit
        if self.radii is None:
            self.radii = np.zeros((n, n))
        self.radii = np.asarray(self.radii, dtype=np.float64)
        if self.radii.shape != (n, n):
            raise ValueError(f"grid radii must be {n}x{n}, got {self.radii.shape}")

    @property
    def shape(self):
        return self.radii.shape

    def with_radii(self, radii):
        return SphericalGrid(self.bandlimit, self.thetas, self.phis, self.weights,
                             np.asarray(radii, dtype=np.float64).reshape(self.shape))

    def directions(self):
        """Unit vectors for every node, flattened row-major (polar row, azimuth column)."""
        return grid_directions(self.bandlimit)


def assoc_legendre(l, m, x):
    """Associated Legendre function ``P_l^m(x)`` with the Condon-Shortley phase.

    Evaluated by the normalized recurrence and rescaled, so values overflow
    for large ``l`` and ``m``; use :func:`normalized_legendre` there.
    """
    if m < 0 or m > l:
        raise DomainError(f"need 0 <= m <= l, got l={l}, m={m}")
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x_arr) > 1.0):
        raise DomainError("assoc_legendre needs |x| <= 1")
    log_norm = 0.5 * (math.log((2 * l + 1) / (4 * math.pi))
                      + math.lgamma(l - m + 1) - math.lgamma(l + m + 1))
    vals = normalized_legendre(l, m, x_arr) / math.exp(log_norm)
    return float(vals) if np.ndim(x) == 0 else vals


def normalized_legendre(l, m, x):
    """``sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m(x)``; finite for any degree."""
    if m < 0 or m > l:
        raise DomainError(f"need 0 <= m <= l, got l={l}, m={m}")
    x_arr = np.ravel(np.asarray(x, dtype=np.float64))
    if np.any(np.abs(x_arr) > 1.0):
        raise DomainError("need |x| <= 1")
    col = legendre_table(l, x_arr)[:, l * (l + 1) // 2 + m]
    return col[0] if np.ndim(x) == 0 else col.reshape(np.shape(x))


def real_sph_harm(l, m, theta, phi):
    """Real orthonormal spherical harmonic ``Y_l^m(theta, phi)``."""
    Degree(l, m)
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    am = abs(m)
    # N_l^m P_l^m: the (-1)^m of N cancels the Condon-Shortley phase of P
    base = (-1) ** am * normalized_legendre(l, am, np.cos(theta))
    if m > 0:
        val = math.sqrt(2.0) * base * np.cos(am * phi)
    elif m < 0:
        val = math.sqrt(2.0) * base * np.sin(am * phi)
    else:
        val = base * np.ones_like(phi)
    return float(val) if val.ndim == 0 else val


def real_sph_harm_all(max_degree, theta, phi):
    """All real harmonics up to ``max_degree`` at matching angle arrays.

    Returns an array of shape ``(len(theta), (M+1)^2)`` in canonical order.
    """
    theta = np.ravel(np.asarray(theta, dtype=np.float64))
    phi = np.ravel(np.asarray(phi, dtype=np.float64))
    table = legendre_table(max_degree, np.cos(theta))
    out = np.empty((theta.shape[0], num_coeffs(max_degree)))
    sqrt2 = math.sqrt(2.0)
    for m in range(max_degree + 1):
        sign = -1.0 if m % 2 else 1.0
        if m == 0:
            for l in range(max_degree + 1):
                out[:, lm_index(l, 0)] = table[:, l * (l + 1) // 2]
            continue
        c = sqrt2 * sign * np.cos(m * phi)
        s = sqrt2 * sign * np.sin(m * phi)
        for l in range(m, max_degree + 1):
            p = table[:, l * (l + 1) // 2 + m]
            out[:, lm_index(l, m)] = p * c
            out[:, lm_index(l, -m)] = p * s
    return out


def dh_weights(bandlimit):
    """Driscoll-Healy row weights for the 2M-row equiangular grid.

    Includes the azimuthal spacing, so the quadrature of ``f`` over the
    sphere is ``sum_j sum_k w_j f(theta_j, phi_k)``.
    """
    n = 2 * bandlimit
    thetas = np.pi * np.arange(n) / n
    k = np.arange(bandlimit)
    odd = 2 * k + 1
    series = (np.sin(np.outer(thetas, odd)) / odd).sum(axis=1)
    return (2.0 * np.pi / bandlimit**2) * np.sin(thetas) * series


def dh_grid(bandlimit):
    """Equiangular 2M x 2M grid with Driscoll-Healy weights and zero radii."""
    if bandlimit < 1:
        raise ValueError("bandlimit must be >= 1")
    n = 2 * bandlimit
    thetas = np.pi * np.arange(n) / n
    phis = np.pi * np.arange(n) / bandlimit
    return SphericalGrid(bandlimit, thetas, phis, dh_weights(bandlimit))


def grid_directions(bandlimit):
    n = 2 * bandlimit
    thetas = np.pi * np.arange(n) / n
    phis = np.pi * np.arange(n) / bandlimit
    t, p = np.meshgrid(thetas, phis, indexing="ij")
    st = np.sin(t)
    return np.stack([st * np.cos(p), st * np.sin(p), np.cos(t)], axis=-1).reshape(-1, 3)


def _separable_tables(grid, max_degree):
    """Legendre rows on the grid colatitudes and azimuthal cos/sin tables.

    The grid is a tensor product, so the transform splits into a Fourier sum
    over each row and a Legendre sum down each column.
    """
    table = legendre_table(max_degree, np.cos(grid.thetas))
    m = np.arange(max_degree + 1)
    sign = np.where(m % 2, -1.0, 1.0) * np.where(m > 0, math.sqrt(2.0), 1.0)
    angle = np.outer(grid.phis, m)
    return table, sign * np.cos(angle), sign * np.sin(angle)


def _legendre_block(table, max_degree, m):
    """Columns ``l = m..M`` of order ``m`` from a packed Legendre table."""
    l = np.arange(m, max_degree + 1)
    return table[:, l * (l + 1) // 2 + m]


def forward_sht(grid, max_degree=None):
    """Moments ``c_l^m = sum_j sum_k w_j r(theta_j, phi_k) Y_l^m(theta_j, phi_k)``."""
    if max_degree is None:
        max_degree = grid.bandlimit
    if not np.all(np.isfinite(grid.radii)):
        raise ValueError("grid radii must be finite")
    table, cos_t, sin_t = _separable_tables(grid, max_degree)
    weighted = grid.radii * grid.weights[:, None]
    a, b = weighted @ cos_t, weighted @ sin_t
    coeffs = np.empty(num_coeffs(max_degree))
    for m in range(max_degree + 1):
        p = _legendre_block(table, max_degree, m)
        l = np.arange(m, max_degree + 1)
        coeffs[l * l + l + m] = p.T @ a[:, m]
        if m:
            coeffs[l * l + l - m] = p.T @ b[:, m]
    return SMV(max_degree, coeffs)


def inverse_sht(smv, grid):
    """Evaluate the truncated expansion of ``smv`` on every node of ``grid``."""
    M = smv.max_degree
    table, cos_t, sin_t = _separable_tables(grid, M)
    a = np.zeros((len(grid.thetas), M + 1))
    b = np.zeros_like(a)
    for m in range(M + 1):
        p = _legendre_block(table, M, m)
        l = np.arange(m, M + 1)
        a[:, m] = p @ smv.coeffs[l * l + l + m]
        if m:
            b[:, m] = p @ smv.coeffs[l * l + l - m]
    return grid.with_radii(a @ cos_t.T + b @ sin_t.T)


# -- file formats -----------------------------------------------------------

_MAGIC = b"SMV1"


def save_smv(smv, path):
    path = Path(path)
    if path.suffix == ".txt":
        lines = [f"M={smv.max_degree}"] + [repr(float(c)) for c in smv.coeffs]
        path.write_text("\n".join(lines) + "\n")
        return
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", smv.max_degree))
        fh.write(np.asarray(smv.coeffs, dtype="<f8").tobytes())


def load_smv(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == _MAGIC:
        (m,) = struct.unpack("<I", raw[4:8])
        n = num_coeffs(m)
        body = raw[8:]
        if len(body) != 8 * n:
            raise ValueError(f"{path}: expected {n} coefficients, found {len(body) // 8}")
        return SMV(m, np.frombuffer(body, dtype="<f8").astype(np.float64))
    text = raw.decode("ascii").split()
    if not text or not text[0].startswith("M="):
        raise ValueError(f"{path}: not an SMV file")
    m = int(text[0][2:])
    return SMV(m, np.array([float(v) for v in text[1:]]))
