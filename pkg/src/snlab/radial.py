"""Spherically symmetric ground states of the d = 3 Schrodinger-Newton equation.

The reduced radial function ``u = r psi`` solves

    -hbar^2/(2m) u'' + m (U + U_ext) u = mu u,    u(0) = u(R) = 0,

with ``U(r) = -4 pi G [r^-1 int_0^r rho s^2 ds + int_r^R rho s ds]`` and
``rho = m |psi|^2`` for unit-normalised ``psi``.  Each self-consistent sweep takes
the lowest eigenpair of the tridiagonal finite-difference operator and mixes the
new potential into the old one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigError, SolverError, UnsupportedDimensionError
from .grid import GridSpec, PhysicalConstants, WaveFunction


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial nodes ``r_j = j R/(N+1)``, ``j = 1..N`` (both ends excluded)."""

    radius: float
    points: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("radius must be positive")
        if self.points < 8:
            raise ConfigError("at least 8 radial points are needed")

    @property
    def spacing(self) -> float:
        return self.radius / (self.points + 1)

    @property
    def r(self) -> np.ndarray:
        return self.spacing * np.arange(1, self.points + 1)


@dataclass(frozen=True)
class RadialState:
    grid: RadialGrid
    psi: np.ndarray  # psi(r) at the radial nodes, 4 pi int psi^2 r^2 dr = 1
    U: np.ndarray  # self-gravitating part only
    mu: float  # chemical potential (eigenvalue of the radial operator)
    energy: float  # kinetic + external + half the self-interaction
    iterations: int
    mass: float
    constants: PhysicalConstants

    @property
    def u(self) -> np.ndarray:
        return self.grid.r * self.psi

    def to_grid(self, grid: GridSpec, center=None) -> WaveFunction:
        """Sample ``psi(|x - center|)`` on a Cartesian grid (cubic spline in r)."""
        if grid.dim != 3:
            raise UnsupportedDimensionError("radial states live in d = 3")
        center = np.zeros(3) if center is None else np.asarray(center, float)
        # psi is even in r: mirror the samples so the spline is smooth through the origin
        r = self.grid.r
        interp = interpolate.CubicSpline(np.concatenate([-r[::-1], r]),
                                         np.concatenate([self.psi[::-1], self.psi]))
        rad = np.sqrt(sum((m - c) ** 2 for m, c in zip(grid.mesh(), center)))
        out = np.where(rad < r[-1], interp(np.minimum(rad, r[-1])), 0.0)
        return WaveFunction(grid, out.astype(complex), self.mass, 0.0)


def radial_potential(rho: np.ndarray, rg: RadialGrid, G: float) -> np.ndarray:
    """Potential of a spherical density vanishing at infinity (``rho`` at the nodes)."""
    r = np.concatenate([[0.0], rg.r])
    f = np.concatenate([[0.0], rho])
    inner = integrate.cumulative_trapezoid(f * r**2, r, initial=0.0)[1:]
    outer_c = integrate.cumulative_trapezoid(f * r, r, initial=0.0)
    outer = (outer_c[-1] - outer_c)[1:]
    return -4 * math.pi * G * (inner / rg.r + outer)


def _normalise(u, h):
    return u / math.sqrt(4 * math.pi * h * np.sum(u**2))


def ground_state_radial(pc: PhysicalConstants, rg: RadialGrid, tol: float = 1e-10,
                        mass: float = 1.0, external: Optional[Callable] = None,
                        mixing: float = 0.5, max_iterations: int = 500) -> RadialState:
    """Nodeless ground state, its chemical potential and energy.

    ``external(r)`` adds a fixed potential (the potential energy is ``m U_ext``).
    Convergence is declared when the change of ``mu`` and the sup-norm change of
    ``U`` between sweeps both fall below ``tol``.
    """
    if pc.d != 3:
        raise UnsupportedDimensionError("the radial ground state is implemented for d = 3")
    if not 0 < mixing <= 1:
        raise ConfigError("mixing must lie in (0, 1]")
    hbar, G, m = pc.hbar, pc.G, mass
    r, h = rg.r, rg.spacing
    Uext = np.zeros_like(r) if external is None else np.asarray(external(r), float)
    kin = hbar**2 / (2 * m * h**2)
    off = -kin * np.ones(rg.points - 1)

    def lowest(U):
        w, v = eigh_tridiagonal(2 * kin + m * (U + Uext), off, select="i", select_range=(0, 0))
        u = v[:, 0]
        return w[0], _normalise(u if u[np.argmax(np.abs(u))] > 0 else -u, h)

    U = np.zeros_like(r)
    mu_old = math.inf
    for it in range(1, max_iterations + 1):
        mu, u = lowest(U)
        if G == 0:
            U_new = U
        else:
            U_new = radial_potential(m * (u / r) ** 2, rg, G)
        dU = np.max(np.abs(U_new - U))
        if abs(mu - mu_old) < tol and dU < tol:
            break
        U = U + mixing * (U_new - U)
        mu_old = mu
    else:
        raise SolverError(f"radial ground state not converged after {max_iterations} sweeps "
                          f"(last change {abs(mu - mu_old):.2e})", iterations=max_iterations)
    U = U_new
    mu, u = lowest(U)
    psi = u / r
    dens = 4 * math.pi * h * u**2
    e_self = 0.5 * m * np.sum(dens * U)
    energy = mu - e_self
    return RadialState(rg, psi, U, float(mu), float(energy), it, m, pc)


def radial_residual(state: RadialState, external: Optional[Callable] = None) -> float:
    """Relative residual of the radial eigen-equation with the returned ``U``, ``mu``."""
    rg = state.grid
    h, r = rg.spacing, rg.r
    hbar, m = state.constants.hbar, state.mass
    u = np.concatenate([[0.0], state.u, [0.0]])
    upp = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
    Uext = np.zeros_like(r) if external is None else np.asarray(external(r), float)
    terms = (-(hbar**2) / (2 * m) * upp, m * (state.U + Uext) * state.u, state.mu * state.u)
    res = terms[0] + terms[1] - terms[2]
    scale = sum(np.linalg.norm(t) for t in terms)
    return float(np.linalg.norm(res) / scale)
