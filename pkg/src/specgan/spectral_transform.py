"""Differentiable bridge between moment vectors and grid radii.

Reconstruction is a product with the basis matrix ``B`` whose entry
``(node, lm)`` is ``Y_l^m`` at that grid node, and its gradient is the
transpose product, an unweighted double sum over grid nodes. Because the
quadrature weights are absent, ``B.T`` is not the analysis transform:
``B.T @ B`` is not the identity.
"""

import functools
import hashlib

import numpy as np

from .sh_core import num_coeffs, real_sph_harm_all

F32_ABOVE = 32


class BandlimitMismatch(ValueError):
    pass


class BasisMatrix:
    """Cached ``(4M^2, (M+1)^2)`` matrix of real harmonics on the grid nodes.

    Stored in float64 up to M=32 and float32 above that (the M=100 matrix
    would need ~3.3 GB in float64); products are accumulated in float64.
    """

    def __init__(self, bandlimit):
        self.bandlimit = bandlimit
        n = 2 * bandlimit
        phi = np.tile(np.pi * np.arange(n) / bandlimit, n)
        theta = np.repeat(np.pi * np.arange(n) / n, n)
        mat = real_sph_harm_all(bandlimit, theta, phi)
        self.matrix = mat.astype(np.float32) if bandlimit > F32_ABOVE else mat
        self.matrix.setflags(write=False)

    @property
    def shape(self):
        return self.matrix.shape

    def reconstruct(self, coeffs):
        """Radii at every node for a coefficient vector or a batch (rows)."""
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape[-1] != self.shape[1]:
            raise BandlimitMismatch(
                f"expected {self.shape[1]} coefficients for M={self.bandlimit}, got {coeffs.shape[-1]}"
            )
        return coeffs @ self.matrix.T.astype(np.float64, copy=False)

    def backprop(self, grad_radii):
        """``dL/dg = B^T dL/dr`` for a gradient vector or a batch (rows)."""
        grad_radii = np.asarray(grad_radii, dtype=np.float64)
        if grad_radii.shape[-1] != self.shape[0]:
            raise BandlimitMismatch(
                f"expected {self.shape[0]} node gradients for M={self.bandlimit}, got {grad_radii.shape[-1]}"
            )
        return grad_radii @ self.matrix.astype(np.float64, copy=False)

    def checksums(self):
        """Row and column sums plus a content digest, for debugging dumps."""
        return {
            "row_sum": self.matrix.sum(axis=1),
            "col_sum": self.matrix.sum(axis=0),
            "sha256": hashlib.sha256(np.ascontiguousarray(self.matrix).tobytes()).hexdigest(),
        }


@functools.lru_cache(maxsize=8)
def basis_matrix(bandlimit):
    return BasisMatrix(bandlimit)


def reconstruct(smv, bandlimit=None):
    """Radii vector of length 4M^2, row-major over (polar row, azimuth column)."""
    bandlimit = smv.max_degree if bandlimit is None else bandlimit
    if num_coeffs(bandlimit) != smv.coeffs.shape[0]:
        raise BandlimitMismatch(f"SMV has degree {smv.max_degree}, basis has M={bandlimit}")
    return basis_matrix(bandlimit).reconstruct(smv.coeffs)


def backprop_to_smv(grad_radii, bandlimit):
    return basis_matrix(bandlimit).backprop(grad_radii)
