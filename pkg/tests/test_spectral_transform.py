import numpy as np
import pytest

from specgan.sh_core import SMV, dh_grid, inverse_sht, num_coeffs
from specgan.spectral_transform import (
    BandlimitMismatch,
    backprop_to_smv,
    basis_matrix,
    reconstruct,
)


def test_shape_and_cache():
    b = basis_matrix(6)
    assert b.shape == (4 * 36, 49)
    assert basis_matrix(6) is b
    with pytest.raises(ValueError):
        b.matrix[0, 0] = 1.0


def test_trivial_reconstructions():
    assert np.all(reconstruct(SMV.zeros(5)) == 0)
    s = SMV.zeros(5)
    s[0, 0] = 1.0
    r = reconstruct(s)
    np.testing.assert_allclose(r, r[0], rtol=1e-15)


def test_matches_inverse_sht():
    s = SMV(8, np.random.default_rng(0).normal(size=81))
    r = reconstruct(s)
    np.testing.assert_allclose(r, inverse_sht(s, dh_grid(8)).radii.ravel(), rtol=0, atol=1e-12)


def test_backprop_trivial():
    assert np.all(backprop_to_smv(np.zeros(64), 4) == 0)
    b = basis_matrix(4)
    for node in (0, 17, 63):
        onehot = np.zeros(64)
        onehot[node] = 1.0
        np.testing.assert_array_equal(backprop_to_smv(onehot, 4), b.matrix[node])


def test_adjoint_and_linearity():
    rng = np.random.default_rng(1)
    b = basis_matrix(7)
    g, v, u = rng.normal(size=64), rng.normal(size=196), rng.normal(size=196)
    assert abs(b.reconstruct(g) @ v - g @ b.backprop(v)) < 1e-10
    np.testing.assert_allclose(b.backprop(2 * u - 3 * v), 2 * b.backprop(u) - 3 * b.backprop(v), atol=1e-12)


def _central_diff(f, x, h=1e-5):
    out = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def test_half_norm_gradient_m4():
    b = basis_matrix(4)
    g = np.random.default_rng(2).normal(size=25)

    def loss(c):
        r = b.reconstruct(c)
        return 0.5 * r @ r

    analytic = b.backprop(b.reconstruct(g))
    numeric = _central_diff(loss, g)
    assert np.abs(analytic - numeric).max() / np.abs(numeric).max() < 1e-6


@pytest.mark.parametrize("bandlimit", [2, 5, 8])
def test_downstream_loss_gradient(bandlimit):
    rng = np.random.default_rng(bandlimit)
    b = basis_matrix(bandlimit)
    g = rng.normal(size=num_coeffs(bandlimit))
    target = rng.normal(size=4 * bandlimit**2)

    def loss(c):
        return np.sum(np.sin(b.reconstruct(c)) * target)

    analytic = b.backprop(np.cos(b.reconstruct(g)) * target)
    numeric = _central_diff(loss, g)
    assert np.abs(analytic - numeric).max() / np.abs(numeric).max() < 1e-5


def test_unweighted_transpose_is_not_analysis():
    b = basis_matrix(4)
    gram = b.matrix.T @ b.matrix
    assert np.abs(gram - np.eye(25)).max() > 1.0


def test_batched():
    rng = np.random.default_rng(3)
    b = basis_matrix(3)
    c = rng.normal(size=(5, 16))
    np.testing.assert_allclose(b.reconstruct(c)[2], b.reconstruct(c[2]), rtol=1e-14)


def test_mismatch():
    with pytest.raises(BandlimitMismatch):
        reconstruct(SMV.zeros(3), 4)
    with pytest.raises(BandlimitMismatch):
        backprop_to_smv(np.zeros(10), 4)


def test_f32_storage_above_32():
    from specgan.spectral_transform import BasisMatrix

    b = BasisMatrix(33)
    assert b.matrix.dtype == np.float32
    assert basis_matrix(16).matrix.dtype == np.float64


def test_checksums():
    cs = basis_matrix(3).checksums()
    assert cs["row_sum"].shape == (36,)
    assert cs["col_sum"].shape == (16,)
    assert len(cs["sha256"]) == 64
