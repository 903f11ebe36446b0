import math

import numpy as np
import pytest

from snlab.errors import GridMismatchError, UnsupportedDimensionError
from snlab.grid import GridSpec, PhysicalConstants, ScalarField
from snlab.poisson import direct_sum, greens_potential, kernel_values, poisson_residual
from snlab.radial import RadialGrid, radial_potential

PC = PhysicalConstants(G=1.0, d=3)


def _blob(grid, width=0.6, center=(0.1, -0.2, 0.05)):
    r2 = sum((m - c) ** 2 for m, c in zip(grid.mesh(), center))
    return ScalarField(grid, np.exp(-r2 / (2 * width**2)))


def test_zero_density():
    g = GridSpec(3, 2.0, 8, "free")
    U = greens_potential(ScalarField(g, np.zeros(g.shape)), PC)
    assert not np.any(U.values)
    assert poisson_residual(U, ScalarField(g, np.zeros(g.shape)), PC) == 0.0


@pytest.mark.parametrize("kernel", ["lattice", "cell-averaged", "spectral"])
def test_fft_matches_direct_sum(kernel):
    g = GridSpec(3, 2.0, 8, "free")
    rho = _blob(g)
    fast = greens_potential(rho, PC, kernel).values
    slow = direct_sum(rho, PC, kernel).values
    assert np.max(np.abs(fast - slow)) / np.max(np.abs(slow)) < 1e-10


def test_cell_averaged_against_explicit_coulomb_sum():
    # independent oracle: 1/r summed by hand, self cell from the kernel table
    g = GridSpec(3, 2.0, 6, "free")
    rho = _blob(g).values
    h = g.spacing
    nodes = g.nodes()
    self_term = kernel_values(3, 6, "cell-averaged")[0, 0, 0]
    diff = nodes[:, None, :] - nodes[None, :, :]
    r = np.linalg.norm(diff, axis=2) / h
    with np.errstate(divide="ignore"):
        K = np.where(r > 0, 1 / (4 * math.pi * np.where(r > 0, r, 1)), self_term)
    expected = -4 * math.pi * h**2 * (K @ rho.ravel())
    got = greens_potential(ScalarField(g, rho), PC, "cell-averaged").values.ravel()
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_lattice_kernel_solves_discrete_poisson():
    g = GridSpec(3, 3.0, 24, "free")
    rho = _blob(g)
    U = greens_potential(rho, PC, "lattice")
    assert poisson_residual(U, rho, PC, relative=True) < 1e-8


def test_point_mass_far_field():
    g = GridSpec(3, 8.0, 32, "free")
    rho = np.zeros(g.shape)
    mid = g.points // 2
    rho[mid, mid, mid] = 1 / g.cell_volume
    U = greens_potential(ScalarField(g, rho), PC).values
    r = g.radius()
    far = r >= 8 * g.spacing
    assert np.max(np.abs(U[far] * r[far] + 1.0)) < 0.01


def test_uniform_ball_exterior():
    g = GridSpec(3, 4.0, 48, "free")
    R = 1.0
    # slightly smoothed edge: a staircase ball carries lattice multipoles
    rho = 0.5 * (1 - np.tanh((g.radius() - R) / 0.08))
    M = rho.sum() * g.cell_volume
    U = greens_potential(ScalarField(g, rho), PC, "spectral").values
    r = g.radius()
    outside = (r >= 2.0) & (r <= 3.5)
    rel = np.abs(U[outside] + M / r[outside]) / (M / r[outside])
    assert np.max(rel) < 1e-3
    # interior: shell integrals of the same radial profile, fine 1D quadrature
    rg = RadialGrid(6.0, 60000)
    prof = 0.5 * (1 - np.tanh((rg.r - R) / 0.08))
    shell = np.interp(r, rg.r, radial_potential(prof, rg, 1.0))
    inside = r <= 0.8
    assert np.max(np.abs(U[inside] - shell[inside]) / np.abs(shell[inside])) < 1e-3


def test_poisson_residual_perturbation():
    g = GridSpec(3, 3.0, 24, "free")
    rho = _blob(g)
    U = greens_potential(rho, PC, "lattice")
    eps = 1e-3
    pert = ScalarField(g, U.values + eps * g.mesh()[0] ** 2)
    mask = g.interior_mask(1)
    expected = 2 * eps * math.sqrt(mask.sum() * g.cell_volume)
    assert poisson_residual(pert, rho, PC) == pytest.approx(expected, rel=1e-3)


def test_errors():
    g2 = GridSpec(2, 1.0, 8, "free")
    with pytest.raises(UnsupportedDimensionError):
        greens_potential(ScalarField(g2, np.ones(g2.shape)), PhysicalConstants(d=2))
    g = GridSpec(3, 1.0, 8, "free")
    h = GridSpec(3, 1.0, 10, "free")
    with pytest.raises(GridMismatchError):
        poisson_residual(ScalarField(g, np.zeros(g.shape)), ScalarField(h, np.zeros(h.shape)), PC)
