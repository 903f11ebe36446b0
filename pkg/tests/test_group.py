from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snlab.errors import ConstraintViolation, ProjectiveSingularity, UnsupportedDimensionError
from snlab.geometry import BrinkmannData
from snlab.grid import GridSpec
from snlab.group import (
    SNElement,
    axiom_suite,
    conformal_factors,
    conformality_defect,
    dilation_exponents,
    dynamical_exponent,
    flat_metric,
    measured_dilation_exponents,
    pullback_metric,
    transform_mass,
    transform_potentials,
    validate,
)

ROT = np.array([[0.6, -0.8, 0.0], [0.8, 0.6, 0.0], [0.0, 0.0, 1.0]])


def _points(rng, dim, n=5):
    return rng.normal(size=(n, dim)), rng.uniform(-0.3, 0.3, n), rng.normal(size=n)


def test_validate_examples():
    el = validate({"dim": 3})
    assert el.is_identity()
    dil = validate({"dim": 3, "nu": 2.0})
    assert dil.d == pytest.approx(0.25) and dil.g == pytest.approx(8.0)
    assert dil.d * dil.g == pytest.approx(2.0)
    assert conformal_factors(dil).lambda_of_t(0.0) == pytest.approx(1 / 64)
    with pytest.raises(ConstraintViolation, match="f = 0"):
        validate({"dim": 3, "f": 0.1})
    with pytest.raises(ConstraintViolation, match="nu > 0"):
        validate({"dim": 3, "nu": -1.0, "d": 1.0, "g": -1.0})
    with pytest.raises(ConstraintViolation, match="orthogonal"):
        validate({"dim": 2, "A": [[1.0, 0.1], [0.0, 1.0]]})
    with pytest.raises(ConstraintViolation, match="nu = 1"):
        validate({"dim": 4, "nu": 2.0, "d": 2.0, "g": 1.0})


def test_element_round_trip():
    el = SNElement.random(np.random.default_rng(5), 3)
    again = SNElement.from_dict(el.to_dict())
    assert el.distance(again) < 1e-15


def test_act_examples(rng):
    x, t, s = _points(rng, 3)
    xh, th, sh = SNElement.identity(3).act(x, t, s)
    np.testing.assert_array_equal(xh, x)
    b = np.array([0.3, -0.2, 0.5])
    xh, th, sh = SNElement.boost(b).act(x, t, s)
    np.testing.assert_allclose(xh, x + np.outer(t, b), atol=1e-15)
    np.testing.assert_allclose(sh, s - x @ b - 0.5 * b @ b * t, atol=1e-15)
    xh, th, sh = SNElement.dilation(3, 2.0).act(x, t, s)
    np.testing.assert_allclose(xh, x / 8, rtol=1e-15)
    np.testing.assert_allclose(th, t / 32, rtol=1e-15)
    np.testing.assert_allclose(sh, s / 2, rtol=1e-15)


def test_act_singularity():
    m = SNElement.moebius(1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ProjectiveSingularity):
        m.act(np.zeros(4), -1.0, 0.0)


def test_xi_equivariance(rng):
    for dim in (3, 4, 5):
        el = SNElement.random(rng, dim)
        x, t, s = _points(rng, dim)
        _, _, s1 = el.act(x, t, s)
        _, _, s2 = el.act(x, t, s + 1e-3)
        np.testing.assert_allclose((s2 - s1) / 1e-3, 1 / el.nu, rtol=1e-8)


@pytest.mark.parametrize("dim", [1, 2, 3, 4, 5])
def test_compose_is_action_homomorphism(dim, rng):
    for _ in range(20):
        a, b = SNElement.random(rng, dim), SNElement.random(rng, dim)
        x, t, s = _points(rng, dim)
        try:
            direct = a.compose(b).act(x, t, s)
            nested = a.act(*b.act(x, t, s))
        except ProjectiveSingularity:
            continue
        for u, v in zip(direct, nested):
            np.testing.assert_allclose(u, v, rtol=1e-9, atol=1e-9)
        assert a.compose(b).nu == pytest.approx(a.nu * b.nu, rel=1e-12)


@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0))
def test_dilations_multiply(n1, n2):
    prod = SNElement.dilation(3, n1).compose(SNElement.dilation(3, n2))
    assert prod.distance(SNElement.dilation(3, n1 * n2)) < 1e-10


def test_inverse_of_boost():
    b = np.array([0.4, 0.1, -0.3])
    inv = SNElement.boost(b).inverse()
    np.testing.assert_allclose(inv.b, -b, atol=1e-15)
    x = np.array([[0.2, 0.3, -1.0]])
    t = np.array([0.7])
    s = np.array([0.1])
    y, tau, sig = SNElement.boost(b).act(x, t, s)
    back = inv.act(y, tau, sig)
    np.testing.assert_allclose(back[0], x, atol=1e-14)
    np.testing.assert_allclose(back[2], s, atol=1e-14)


def test_compose_inverse_is_identity(rng):
    for dim in (3, 4):
        a = SNElement.random(rng, dim)
        assert a.compose(a.inverse()).is_identity(1e-12)


def test_matrix_rep():
    np.testing.assert_array_equal(SNElement.identity(3).matrix_rep(), np.eye(6))
    M = SNElement.dilation(3, 2.0).matrix_rep()
    np.testing.assert_allclose(np.diag(M), [1, 1, 1, 0.25, 4, 8])
    rng = np.random.default_rng(2)
    for dim in (3, 5):
        for _ in range(10):
            a, b = SNElement.random(rng, dim), SNElement.random(rng, dim)
            prod = a.matrix_rep() @ b.matrix_rep()
            err = np.max(np.abs(a.compose(b).matrix_rep() - prod)) / np.max(np.abs(prod))
            assert err < 1e-10
    with pytest.raises(UnsupportedDimensionError):
        SNElement.identity(4).matrix_rep()


def test_conformal_factors():
    cf = conformal_factors(SNElement.identity(3))
    assert cf.lambda_of_t(1.3) == 1.0 and cf.nu == 1.0
    m = conformal_factors(SNElement.moebius(2.0, 0.0, 1.0, 0.5))
    assert m.nu == pytest.approx(1.0)
    assert m.lambda_of_t(1.0) == pytest.approx(1 / 1.5**2)
    for dim in (1, 2, 3, 5, 6):
        el = SNElement.dilation(dim, 1.7)
        assert el.conformal_factors().constraint_defect(dim) < 1e-12


def test_dynamical_exponent():
    assert dynamical_exponent(3) == Fraction(5, 3)
    assert dynamical_exponent(4) == 2
    assert dynamical_exponent(10) == 4
    for dim in (3, 4, 5):
        ax, at = measured_dilation_exponents(dim)
        assert (ax, at) == dilation_exponents(dim)
        assert at / ax == dynamical_exponent(dim)


def test_pullback_is_conformal(rng):
    for dim in (3, 4):
        el = SNElement.random(rng, dim)
        pts = np.concatenate([rng.normal(size=(4, dim)), rng.uniform(-0.2, 0.2, (4, 1)),
                              rng.normal(size=(4, 1))], axis=1)
        assert conformality_defect(el, pts) < 1e-6
    el = SNElement.dilation(3, 2.0)
    g = pullback_metric(el, np.zeros((1, 5)))[0]
    np.testing.assert_allclose(g, flat_metric(3) / 64, atol=1e-10)


@pytest.mark.parametrize("dim", [3, 4])
def test_axiom_suite(dim):
    out = axiom_suite(dim, triples=100, rng=np.random.default_rng(dim))
    assert all(v == 100 for v in out["passed"].values())
    assert max(out["max_error"].values()) < 1e-10
    assert out["conformality_defect"] < 1e-6
    assert (out["matrix_homomorphism_error"] is None) == (dim == 4)


def test_transform_mass():
    assert transform_mass(SNElement.identity(3), 1.3) == 1.3
    assert transform_mass(SNElement.dilation(3, 2.0), 1.0) == 2.0
    a, b = SNElement.dilation(3, 1.5), SNElement.dilation(3, 0.7)
    assert transform_mass(a.compose(b), 2.0) == pytest.approx(transform_mass(a, transform_mass(b, 2.0)))


def _bd(grid, U, W=None):
    return BrinkmannData.static(grid, U, W)


def test_transform_potentials_identity(rng):
    g = GridSpec(3, 2.0, 8, "free")
    U = rng.normal(size=g.shape)
    W = rng.normal(size=(3,) + g.shape)
    out = transform_potentials(SNElement.identity(3), _bd(g, U, W))
    np.testing.assert_allclose(out.U[0], U, atol=1e-12)
    np.testing.assert_allclose(out.omega[0], W, atol=1e-12)


def test_transform_potentials_rotation():
    g = GridSpec(3, 2.0, 8, "free")
    x = g.mesh()
    U = x[0] + 2 * x[1] ** 2 + x[2]
    A = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    out, mask = transform_potentials(SNElement.rotation(A), _bd(g, U), return_mask=True)
    xs = np.einsum("ji,j...->i...", A, np.array(x))  # A^T y
    expected = xs[0] + 2 * xs[1] ** 2 + xs[2]
    np.testing.assert_allclose(out.U[0][mask[0]], expected[mask[0]], atol=1e-10)
    assert not np.any(out.omega)


def test_transform_potentials_dilation():
    g = GridSpec(3, 4.0, 16, "free")
    U = sum(m**2 for m in g.mesh())
    out, mask = transform_potentials(SNElement.dilation(3, 2.0), _bd(g, U), return_mask=True)
    # U'(y) = lambda^-1 nu^-2 U(8 y) = 16 * 64 |y|^2
    expected = 16 * 64 * sum(m**2 for m in g.mesh())
    assert mask[0].sum() > 0
    np.testing.assert_allclose(out.U[0][mask[0]], expected[mask[0]], rtol=1e-8, atol=1e-8)
