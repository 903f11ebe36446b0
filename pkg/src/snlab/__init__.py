"""Schrodinger-Newton numerical laboratory.

Modules: ``grid`` (grids, fields, interpolation), ``poisson`` (free-space
Green-function solves), ``geometry`` (Brinkmann metrics, curvature, time
reparametrizations), ``group`` (the SN group and its action), ``solver`` (time
stepping and residuals), ``radial`` (ground states), ``representation`` (the
unitary action and covariance checks), ``fieldio`` and ``cli``.
"""

from .errors import *  # noqa: F401,F403
from .grid import (GridSpec, PhysicalConstants, ScalarField, VectorField, WaveFunction,
                   discrete_norm, gaussian, l2_norm, normalize)
from .group import SNElement, axiom_suite, conformal_factors, dynamical_exponent, validate
from .poisson import direct_sum, greens_potential, poisson_residual
from .radial import RadialGrid, ground_state_radial
from .representation import covariance_check, rho_apply, unitarity_defect
from .solver import SolverConfig, evolve, sn_residual, trajectory_residual

__version__ = "0.1.0"
