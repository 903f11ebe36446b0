import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snlab.errors import DomainError, InvalidFieldError, ShapeError
from snlab.grid import (
    GridSpec,
    PhysicalConstants,
    ScalarField,
    VectorField,
    WaveFunction,
    divergence,
    gaussian,
    gradient,
    l2_norm,
    laplacian,
    normalize,
    resample_affine,
    sample_at,
    sample_points,
)


def test_grid_invariants():
    g = GridSpec(3, 2.0, 8)
    assert g.spacing == pytest.approx(0.5)
    assert g.shape == (8, 8, 8)
    assert g.axis[0] == -2.0 and 0.0 in g.axis
    with pytest.raises(ValueError):
        GridSpec(1, 1.0, 7)
    with pytest.raises(ValueError):
        GridSpec(1, 1.0, 2)
    assert GridSpec(1, 1.0, 8, "zero-padded-free-space").boundary == "free"


def test_physical_constants():
    pc = PhysicalConstants(d=3)
    assert pc.C_d == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    for d in range(3, 9):
        p = PhysicalConstants(d=d)
        assert p.w == pytest.approx(d / (2 * d + 4), rel=1e-15)
        assert p.N == d + 2


def test_l2_norm_examples():
    g = GridSpec(1, 1.0, 8)
    assert l2_norm(WaveFunction(g, np.zeros(8))) == 0.0
    assert l2_norm(WaveFunction(g, np.ones(8))) == pytest.approx(math.sqrt(2), rel=1e-15)
    g3 = GridSpec(3, 10.0, 64)
    mesh = g3.mesh()
    psi = np.exp(-sum(m**2 for m in mesh) / 2) / math.pi**0.75
    assert l2_norm(WaveFunction(g3, psi)) == pytest.approx(1.0, abs=1e-3)


def test_invalid_fields():
    g = GridSpec(1, 1.0, 8)
    with pytest.raises(InvalidFieldError):
        WaveFunction(g, np.full(8, np.nan))
    with pytest.raises(ShapeError):
        WaveFunction(g, np.ones(6))


def test_normalize_examples():
    g = GridSpec(1, 1.0, 8)
    out = normalize(WaveFunction(g, np.ones(8)))
    np.testing.assert_allclose(out.psi, 1 / math.sqrt(2), rtol=1e-15)
    again = normalize(out)
    np.testing.assert_allclose(again.psi, out.psi, rtol=1e-15)
    with pytest.raises(ZeroDivisionError):
        normalize(WaveFunction(g, np.zeros(8)))


@given(st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
                min_size=8, max_size=8),
       st.floats(0.1, 100.0))
def test_normalize_properties(values, scale):
    g = GridSpec(1, 1.0, 8)
    psi = np.array(values)
    if np.max(np.abs(psi)) < 1e-6:
        return
    a = normalize(WaveFunction(g, psi))
    b = normalize(WaveFunction(g, scale * psi))
    assert l2_norm(a) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(a.psi, b.psi, atol=1e-12)


def test_laplacian_examples():
    g = GridSpec(1, 1.0, 32)
    x = g.axis
    f = ScalarField(g, np.sin(np.pi * x))
    np.testing.assert_allclose(laplacian(f).values, -np.pi**2 * np.sin(np.pi * x), atol=1e-10)
    assert np.max(np.abs(laplacian(ScalarField(g, np.full(32, 3.0))).values)) < 1e-12
    g3 = GridSpec(3, 1.0, 12, "free")
    q = ScalarField(g3, 0.5 * sum(m**2 for m in g3.mesh()))
    inner = g3.interior_mask(1)
    np.testing.assert_allclose(laplacian(q).values[inner], 3.0, atol=1e-8)


@given(st.integers(1, 7), st.integers(-7, 7), st.integers(1, 3))
def test_spectral_laplacian_eigenmodes(kx, ky, dim):
    g = GridSpec(dim, np.pi, 16)
    mesh = g.mesh()
    k = [kx, ky, 1][:dim]
    mode = np.exp(1j * sum(ki * m for ki, m in zip(k, mesh)))
    out = laplacian(ScalarField(g, mode)).values
    assert np.max(np.abs(out + sum(ki**2 for ki in k) * mode)) < 1e-10


def _band_limited(rng, g, modes=4):
    mesh = g.mesh()
    f = np.zeros(g.shape)
    for _ in range(modes):
        k = rng.integers(-3, 4, size=g.dim) * np.pi / g.extent
        f += rng.normal() * np.cos(sum(ki * m for ki, m in zip(k, mesh)) + rng.uniform(0, 6))
    return f


def test_gradient_divergence(rng):
    g = GridSpec(2, 1.0, 16)
    f = ScalarField(g, _band_limited(rng, g))
    dg = divergence(gradient(f)).values
    np.testing.assert_allclose(dg, laplacian(f).values, atol=1e-10)
    grad_const = gradient(ScalarField(g, np.ones(g.shape)))
    assert np.max(np.abs(grad_const.components)) < 1e-12
    g3 = GridSpec(3, 1.0, 10, "free")
    v = VectorField(g3, np.array(g3.mesh()))
    np.testing.assert_allclose(divergence(v).values[g3.interior_mask(1)], 3.0, atol=1e-8)
    with pytest.raises(ShapeError):
        VectorField(g3, np.zeros((2,) + g3.shape))


def test_sample_at():
    g = GridSpec(1, 1.0, 32)
    x = g.axis
    f = ScalarField(g, np.sin(np.pi * x))
    assert sample_at(f, [x[5]]) == f.values[5]
    assert sample_at(f, [0.123]) == pytest.approx(math.sin(0.123 * math.pi), abs=1e-10)
    gf = GridSpec(2, 1.0, 8, "free")
    lin = ScalarField(gf, 2 * gf.mesh()[0] - 3 * gf.mesh()[1] + 1)
    assert sample_at(lin, [0.31, -0.17], mode="linear") == pytest.approx(
        2 * 0.31 + 3 * 0.17 + 1, abs=1e-12)
    with pytest.raises(DomainError):
        sample_at(lin, [1.5, 0.0])


def test_sample_nodes_bit_exact(rng):
    g = GridSpec(2, 1.0, 8)
    vals = rng.normal(size=g.shape)
    got = sample_points(vals, g, g.nodes())
    assert np.array_equal(got, vals.ravel())


def test_resample_affine_rotation_is_permutation(rng):
    g = GridSpec(2, 1.0, 8)
    vals = rng.normal(size=g.shape)
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    out, _ = resample_affine(vals, g, R, np.zeros(2))
    assert np.array_equal(np.sort(out.ravel()), np.sort(vals.ravel()))


def test_gaussian_normalised():
    g = GridSpec(2, 6.0, 32)
    wf = gaussian(g, 1.0, center=[0.5, 0.0], momentum=[1.0, 0.0])
    assert l2_norm(wf) == pytest.approx(1.0, abs=1e-14)
