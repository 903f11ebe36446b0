"""Time stepping for the Schrodinger-Newton system and its residual certificate.

The stepped equation is

    i hbar d_t psi = -hbar^2/(2m) Delta psi + (i hbar/2)(omega.grad + grad.omega) psi
                     + m (U + |omega|^2/2) psi

with ``U`` the Newtonian potential of ``m |psi~|^2`` (``psi~ = psi/|psi|``) plus any
static contributions: an external potential, the cosmological term
``Lambda |x|^2/(2d)`` and, when ``omega`` is present, the potential that absorbs
the Coriolis source ``|Omega|^2/2`` of the Newton-Cartan field equations.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, GridMismatchError, SolverError, UnsupportedDimensionError
from .geometry import BrinkmannData, coriolis_parts, coriolis_source
from .grid import (
    GridSpec,
    PhysicalConstants,
    ScalarField,
    VectorField,
    WaveFunction,
    derivative_array,
    discrete_norm,
    erode,
    fd_laplacian,
    grid_like,
    l2_norm,
    laplacian_array,
    normalize,
)
from .poisson import box_interior, greens_potential, solve_free_poisson

SCHEMES = ("strang-spectral", "crank-nicolson-fd")
COUPLINGS = ("frozen-half-step", "midpoint-recompute")


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    steps: int
    scheme: str = "strang-spectral"
    self_consistency: str = "midpoint-recompute"
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    Lambda: float = 0.0
    kernel: str = "auto"
    record_every: int = 1
    laplacian_order: int = 0
    linear_solver: str = "auto"
    linear_tol: float = 1e-13
    max_iterations: int = 1000
    coriolis_compensation: bool = True

    def __post_init__(self):
        if not (isinstance(self.dt, (int, float)) and self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be a positive number, got {self.dt!r}")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ConfigError(f"steps must be a non-negative integer, got {self.steps!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.self_consistency not in COUPLINGS:
            raise ConfigError(f"self_consistency must be one of {COUPLINGS}")
        if self.kernel not in ("auto", "lattice", "cell-averaged", "spectral"):
            raise ConfigError(f"unknown Poisson kernel {self.kernel!r}")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.laplacian_order not in (0, 2, 4, 6, 8):
            raise ConfigError("laplacian_order must be 0 (automatic), 2, 4, 6 or 8")
        if self.linear_solver not in ("auto", "direct", "gmres"):
            raise ConfigError(f"unknown linear solver {self.linear_solver!r}")

    def poisson_kernel(self, dim: int) -> str:
        if self.kernel != "auto":
            return self.kernel
        return "spectral" if dim == 3 else "lattice"

    def residual_order(self, dim: int) -> int:
        """FD order of the Laplacian used in the Newton residual.

        The lattice kernel solves the 2nd-order discrete equation exactly, so that
        stencil is its natural check; the continuum-accurate kernels get order 8.
        """
        if self.laplacian_order:
            return self.laplacian_order
        return 2 if self.poisson_kernel(dim) == "lattice" else 8

    def kinetic_number(self, grid: GridSpec, mass: float) -> float:
        """``dt * (largest kinetic eigenvalue)/hbar``, reported for CN stability bookkeeping."""
        kmax2 = grid.dim * (math.pi / grid.spacing) ** 2
        return self.dt * self.constants.hbar * kmax2 / (2 * mass)

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# potentials

def _omega_array(omega, grid: GridSpec):
    if omega is None:
        return None
    arr = np.asarray(getattr(omega, "components", omega), float)
    if arr.shape != (grid.dim,) + grid.shape:
        raise GridMismatchError("omega does not match the grid")
    return arr if np.any(arr) else None


def density(wf: WaveFunction) -> np.ndarray:
    """``m |psi~|^2`` with ``psi~`` normalised."""
    return wf.mass * np.abs(wf.psi) ** 2 / l2_norm(wf) ** 2


def static_potential(grid: GridSpec, cfg: SolverConfig, omega=None, external=None) -> np.ndarray:
    """Time-independent part of ``U``: external + Lambda term + Coriolis compensation."""
    U = np.zeros(grid.shape)
    if external is not None:
        U = U + np.asarray(getattr(external, "values", external), float)
    if cfg.Lambda:
        r2 = sum(m**2 for m in grid.mesh())
        U = U + cfg.Lambda * r2 / (2 * grid.dim)
    W = _omega_array(omega, grid)
    if W is not None and cfg.coriolis_compensation:
        src = coriolis_source(grid, W)
        if np.any(src):
            U = U + solve_free_poisson(-src, grid, cfg.poisson_kernel(grid.dim)
                                       if grid.dim > 2 else "lattice")
    return U


def self_potential(wf: WaveFunction, cfg: SolverConfig, static=None) -> np.ndarray:
    """Total ``U`` felt by ``wf``: Newtonian self-potential plus the static part."""
    grid = wf.grid
    U = np.zeros(grid.shape) if static is None else np.array(static, float)
    G = cfg.constants.G
    if G > 0:
        if grid.dim <= 2:
            raise UnsupportedDimensionError("self-gravity needs d > 2 (decaying Green function)")
        rho = ScalarField(grid, density(wf))
        U = U + greens_potential(rho, cfg.constants, cfg.poisson_kernel(grid.dim)).values
    return U


# ---------------------------------------------------------------------------
# single steps

@functools.lru_cache(maxsize=8)
def _kinetic_phase(grid: GridSpec, dt: float, hbar: float, mass: float) -> np.ndarray:
    k2 = sum(k**2 for k in grid.wavenumbers())
    out = np.exp(-1j * hbar * k2 * dt / (2 * mass))
    out.flags.writeable = False
    return out


def _strang(psi, U1, U2, grid, dt, hbar, mass):
    psi = psi * np.exp(-1j * mass * U1 * dt / (2 * hbar))
    psi = sfft.ifftn(_kinetic_phase(grid, dt, hbar, mass) * sfft.fftn(psi))
    if U2 is None:
        return psi, None
    if callable(U2):
        U2 = U2(psi)
    return psi * np.exp(-1j * mass * U2 * dt / (2 * hbar)), U2


def _fd_matrices(grid: GridSpec):
    n, h = grid.points, grid.spacing
    e = np.ones(n)
    D2 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil")
    D1 = sp.diags([-e[:-1], e[:-1]], [-1, 1], format="lil")
    if grid.periodic:
        D2[0, n - 1] = D2[n - 1, 0] = 1.0
        D1[0, n - 1] = -1.0
        D1[n - 1, 0] = 1.0
    D2 = D2.tocsr() / h**2
    D1 = D1.tocsr() / (2 * h)
    I = sp.identity(n, format="csr")
    lap = None
    ders = []
    for ax in range(grid.dim):
        mats2 = [D2 if a == ax else I for a in range(grid.dim)]
        mats1 = [D1 if a == ax else I for a in range(grid.dim)]
        K2 = functools.reduce(lambda a, b: sp.kron(a, b, format="csr"), mats2)
        K1 = functools.reduce(lambda a, b: sp.kron(a, b, format="csr"), mats1)
        lap = K2 if lap is None else lap + K2
        ders.append(K1)
    return lap, ders


def hamiltonian_matrix(grid: GridSpec, U, omega, mass: float, hbar: float):
    """Sparse Hermitian FD Hamiltonian with the symmetrised Coriolis term."""
    lap, ders = _fd_matrices(grid)
    H = (-(hbar**2) / (2 * mass)) * lap.astype(complex)
    diag = mass * np.asarray(U, float).ravel()
    W = _omega_array(omega, grid)
    if W is not None:
        diag = diag + 0.5 * mass * np.sum(W**2, axis=0).ravel()
        for j, Dj in enumerate(ders):
            Wj = sp.diags(W[j].ravel())
            H = H + (0.5j * hbar) * (Wj @ Dj + Dj @ Wj)
    return (H + sp.diags(diag)).tocsc()


def _cn_solve(psi, H, dt, hbar, cfg: SolverConfig, step=None):
    N = psi.size
    I = sp.identity(N, format="csc", dtype=complex)
    A = I + (0.5j * dt / hbar) * H
    rhs = (I - (0.5j * dt / hbar) * H) @ psi.ravel()
    method = cfg.linear_solver
    if method == "auto":
        method = "direct" if N <= 40000 else "gmres"
    if method == "direct":
        out = spla.splu(A).solve(rhs)
    else:
        count = [0]

        def cb(_):
            count[0] += 1

        out, info = spla.gmres(A, rhs, x0=psi.ravel(), rtol=cfg.linear_tol, atol=0.0,
                               restart=50, maxiter=cfg.max_iterations, callback=cb,
                               callback_type="pr_norm")
        if info != 0:
            raise SolverError(f"GMRES did not converge (info={info}, {count[0]} iterations)",
                              step=step, iterations=count[0])
    return out.reshape(psi.shape)


def schrodinger_step(wf: WaveFunction, bd: Optional[BrinkmannData], cfg: SolverConfig,
                     U_second=None) -> WaveFunction:
    """Advance ``wf`` by ``cfg.dt`` in the potentials of ``bd`` (first time sample).

    ``U_second`` (array or callable of the intermediate psi) replaces ``U`` in the
    closing half step of the Strang scheme, or sets the midpoint potential of CN.
    """
    grid = wf.grid
    hbar = cfg.constants.hbar
    if bd is None:
        U, W = np.zeros(grid.shape), None
    else:
        if bd.grid != grid:
            raise GridMismatchError("Brinkmann data and wave function live on different grids")
        U, W = bd.U[0], _omega_array(bd.omega[0], grid)
    if cfg.scheme == "strang-spectral":
        if W is not None:
            raise ConfigError("a nonzero Coriolis form requires the crank-nicolson-fd scheme")
        if not grid.periodic:
            raise ConfigError("the spectral Strang scheme needs a periodic grid")
        psi, _ = _strang(wf.psi, U, U if U_second is None else U_second, grid, cfg.dt, hbar, wf.mass)
    else:
        Um = U
        if U_second is not None and not callable(U_second):
            Um = 0.5 * (U + U_second)
        H = hamiltonian_matrix(grid, Um, W, wf.mass, hbar)
        psi = _cn_solve(wf.psi, H, cfg.dt, hbar, cfg)
    return wf.replace(psi=psi, time=wf.time + cfg.dt)


# ---------------------------------------------------------------------------
# trajectories

@dataclass(frozen=True)
class TrajectoryRecord:
    times: np.ndarray
    states: tuple
    potentials: tuple
    omega: Optional[VectorField] = None
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    config: Optional[SolverConfig] = None
    static_potential: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.states) != len(self.potentials) or len(self.states) != len(self.times):
            raise ValueError("one potential and one time per state are required")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must increase")

    @property
    def grid(self) -> GridSpec:
        return self.states[0].grid

    @property
    def mass(self) -> float:
        return self.states[0].mass

    def __len__(self):
        return len(self.states)

    def brinkmann(self, indices: Optional[Sequence[int]] = None) -> BrinkmannData:
        idx = range(len(self)) if indices is None else list(indices)
        grid = self.grid
        W = np.zeros((grid.dim,) + grid.shape) if self.omega is None else self.omega.components
        return BrinkmannData(grid, self.times[list(idx)],
                             np.array([self.potentials[i].values for i in idx]),
                             np.broadcast_to(W, (len(idx),) + W.shape).copy(), self.constants)

    def norms(self) -> np.ndarray:
        return np.array([l2_norm(s) for s in self.states])

    def norm_drift(self) -> float:
        n = self.norms()
        return float(np.max(np.abs(n - n[0])))


def evolve(wf0: WaveFunction, cfg: SolverConfig, omega=None, external=None,
           progress=None) -> TrajectoryRecord:
    """Self-consistent evolution; records ``(psi, U)`` every ``cfg.record_every`` steps."""
    grid = wf0.grid
    if cfg.constants.d != grid.dim:
        raise ConfigError(f"constants.d = {cfg.constants.d} but the grid has dim = {grid.dim}")
    if cfg.constants.G > 0 and grid.dim <= 2:
        raise UnsupportedDimensionError("self-gravity needs d > 2")
    W = _omega_array(omega, grid)
    if W is not None and cfg.scheme != "crank-nicolson-fd":
        raise ConfigError("a nonzero Coriolis form requires the crank-nicolson-fd scheme")
    if cfg.scheme == "strang-spectral" and not grid.periodic:
        raise ConfigError("the spectral Strang scheme needs a periodic grid")
    hbar = cfg.constants.hbar
    static = static_potential(grid, cfg, W, external)
    wf = normalize(wf0)
    U = self_potential(wf, cfg, static)
    times, states, pots = [wf.time], [wf], [ScalarField(grid, U)]
    Wzero = np.zeros((grid.dim,) + grid.shape) if W is None else W
    midpoint = cfg.self_consistency == "midpoint-recompute"
    coupled = cfg.constants.G > 0

    def recompute(psi):
        return self_potential(WaveFunction(grid, psi, wf.mass), cfg, static)

    for k in range(1, cfg.steps + 1):
        psi = wf.psi
        if cfg.scheme == "strang-spectral":
            second = recompute if (midpoint and coupled) else U
            psi, U_new = _strang(psi, U, second, grid, cfg.dt, hbar, wf.mass)
            if not (midpoint and coupled):
                U_new = None
        else:
            H = hamiltonian_matrix(grid, U, W, wf.mass, hbar)
            psi = _cn_solve(psi, H, cfg.dt, hbar, cfg, step=k)
            if midpoint and coupled:
                U_pred = recompute(psi)
                H = hamiltonian_matrix(grid, 0.5 * (U + U_pred), W, wf.mass, hbar)
                psi = _cn_solve(wf.psi, H, cfg.dt, hbar, cfg, step=k)
            U_new = None
        if not np.all(np.isfinite(psi)):
            raise SolverError(f"non-finite wave function at step {k}", step=k)
        wf = wf.replace(psi=psi, time=wf0.time + k * cfg.dt)
        if U_new is not None:
            U = U_new
        elif coupled:
            U = recompute(psi)
        if k % cfg.record_every == 0 or k == cfg.steps:
            times.append(wf.time)
            states.append(wf)
            pots.append(ScalarField(grid, U))
        if progress is not None:
            progress(k)
    omega_field = None if W is None else VectorField(grid, W)
    return TrajectoryRecord(np.array(times), tuple(states), tuple(pots), omega_field,
                            cfg.constants, cfg, static)


# ---------------------------------------------------------------------------
# residuals

@dataclass(frozen=True)
class SNResidual:
    """Residual norms of one (or an RMS over several) consecutive state pairs.

    The ``*_rel`` entries divide each residual by the sum of the norms of the
    terms that make up its equation, which makes them invariant under rescalings
    of the solution.
    """

    schrodinger: float
    newton: float
    coriolis: float
    schrodinger_rel: float
    newton_rel: float

    @property
    def total(self) -> float:
        return math.sqrt(self.schrodinger**2 + self.newton**2 + self.coriolis**2)

    @property
    def relative(self) -> float:
        return math.sqrt(self.schrodinger_rel**2 + self.newton_rel**2 + self.coriolis**2)

    def __float__(self):
        return self.relative

    def to_dict(self) -> dict:
        return {"schrodinger": self.schrodinger, "newton": self.newton, "coriolis": self.coriolis,
                "schrodinger_rel": self.schrodinger_rel, "newton_rel": self.newton_rel,
                "total": self.total, "relative": self.relative}


def _derivs(grid: GridSpec, method: str):
    if method == "spectral":
        return (lambda f: laplacian_array(f, grid, "spectral"),
                lambda f, a: derivative_array(f, grid, a, "spectral"))
    free = grid_like(grid, boundary="free") if not grid.periodic else grid
    return (lambda f: laplacian_array(f, free, "fd"),
            lambda f, a: derivative_array(f, free, a, "fd"))


def schrodinger_terms(psi, U, omega, grid: GridSpec, mass: float, hbar: float, method: str):
    """(kinetic, coriolis, potential) parts of ``H psi``."""
    lap, der = _derivs(grid, method)
    kin = -(hbar**2) / (2 * mass) * lap(psi)
    cor = np.zeros_like(psi)
    pot = mass * U * psi
    W = _omega_array(omega, grid)
    if W is not None:
        for j in range(grid.dim):
            cor = cor + 0.5j * hbar * (W[j] * der(psi, j) + der(W[j] * psi, j))
        pot = pot + 0.5 * mass * np.sum(W**2, axis=0) * psi
    return kin, cor, pot


def sn_residual(wf_pair, bd: BrinkmannData, cfg: SolverConfig, *, mass: Optional[float] = None,
                Lambda: Optional[float] = None, mask=None, method: Optional[str] = None,
                dpsi_dt=None, newton_form: Optional[str] = None, static=None) -> SNResidual:
    """Residual of the Schrodinger and Newton-Cartan equations for two consecutive states.

    The time derivative is the centred difference of the pair and every other term
    is evaluated at the midpoint.  ``bd`` carries (U, omega) at the two times (a
    single sample is treated as static).  ``mass`` overrides the mass the
    equations are written with; ``mask`` restricts the norms to trusted nodes.

    ``newton_form`` selects how the field equation is checked: ``"differential"``
    applies an FD Laplacian to ``U``; ``"integral"`` compares ``U`` with the
    free-space solution ``static + G*rho`` for the solver's kernel, which is free of
    stencil truncation error.  The default is differential for the lattice kernel
    (which solves the 2nd-order stencil exactly) and integral otherwise.  ``static``
    overrides the static potential expected by the integral form.
    """
    wf0, wf1 = wf_pair
    grid = wf0.grid
    if wf1.grid != grid or bd.grid != grid:
        raise GridMismatchError("states and potentials must share a grid")
    hbar = cfg.constants.hbar
    G = cfg.constants.G
    m = wf0.mass if mass is None else mass
    Lam = cfg.Lambda if Lambda is None else Lambda
    if method is None:
        method = "spectral" if (grid.periodic and cfg.scheme == "strang-spectral") else "fd"
    kernel = cfg.poisson_kernel(grid.dim) if grid.dim > 2 else "lattice"
    if newton_form is None:
        newton_form = "differential" if (kernel == "lattice" or cfg.laplacian_order) else "integral"
    if newton_form not in ("differential", "integral"):
        raise ConfigError(f"unknown newton_form {newton_form!r}")
    if newton_form == "integral" and grid.dim <= 2:
        raise UnsupportedDimensionError("the integral form needs a decaying Green function (d > 2)")
    order = cfg.residual_order(grid.dim)
    # trusted region: box interior for the stencils, intersected with the caller's mask
    margin = max(order // 2, 2)
    region = box_interior(grid, margin) if not grid.periodic or method == "fd" else \
        np.ones(grid.shape, bool)
    newton_region = box_interior(grid, margin) if newton_form == "differential" else \
        np.ones(grid.shape, bool)
    if mask is not None:
        region = region & mask
        # the Laplacian stencil must not reach nodes outside the mask
        newton_region = newton_region & (erode(mask, order // 2) if newton_form == "differential"
                                         else mask)

    psi0, psi1 = wf0.psi, wf1.psi
    dt = wf1.time - wf0.time
    if dpsi_dt is None:
        if not dt > 0:
            raise ValueError("the pair must be ordered in time")
        dpsi = (psi1 - psi0) / dt
    else:
        dpsi = dpsi_dt
    psim = 0.5 * (psi0 + psi1)
    if len(bd.times) >= 2:
        Um = 0.5 * (bd.U[0] + bd.U[-1])
        Wm = 0.5 * (bd.omega[0] + bd.omega[-1])
    else:
        Um, Wm = bd.U[0], bd.omega[0]
    kin, cor, pot = schrodinger_terms(psim, Um, Wm, grid, m, hbar, method)
    lhs = 1j * hbar * dpsi
    res = lhs - kin - cor - pot
    S = discrete_norm(res, grid, region)
    S_scale = sum(discrete_norm(v, grid, region) for v in (lhs, kin, cor, pot))

    # Newton-Cartan part, at both ends of the pair
    free = grid_like(grid, boundary="free")
    N2 = scale2 = C2 = 0.0
    samples = [(psi0, bd.U[0], bd.omega[0])]
    if len(bd.times) >= 2 or psi1 is not psi0:
        samples.append((psi1, bd.U[-1], bd.omega[-1]))
    lam_cfg = cfg.with_(Lambda=Lam) if Lam != cfg.Lambda else cfg
    for psi, U, W in samples:
        nrm2 = discrete_norm(psi, grid) ** 2
        rho = m * np.abs(psi) ** 2 / nrm2
        if newton_form == "integral":
            base = static_potential(grid, lam_cfg, W) if static is None else np.asarray(static, float)
            expected = base + solve_free_poisson(4 * np.pi * G * rho, grid, kernel)
            N2 += discrete_norm(U - expected, grid, newton_region) ** 2
            scale2 += (discrete_norm(U, grid, newton_region)
                       + discrete_norm(expected, grid, newton_region)) ** 2
        else:
            lapU = fd_laplacian(U, free, order)
            src = coriolis_source(grid, W)
            terms = (lapU, src, 4 * np.pi * G * rho, np.full(grid.shape, float(Lam)))
            defect = lapU + src - terms[2] - terms[3]
            N2 += discrete_norm(defect, grid, newton_region) ** 2
            scale2 += sum(discrete_norm(v, grid, newton_region) for v in terms) ** 2
        if np.any(W):
            _, _, dOm = coriolis_parts(grid, W)
            C2 += sum(discrete_norm(c, grid, newton_region & box_interior(grid, 2)) ** 2 for c in dOm)
    k = len(samples)
    N = math.sqrt(N2 / k)
    Nscale = math.sqrt(scale2 / k)
    return SNResidual(
        schrodinger=S,
        newton=N,
        coriolis=math.sqrt(C2 / k),
        schrodinger_rel=S / S_scale if S_scale > 0 else S,
        newton_rel=N / Nscale if Nscale > 0 else N,
    )


def aggregate(residuals: Sequence[SNResidual]) -> SNResidual:
    """Root-mean-square of each component."""
    if not residuals:
        raise ValueError("no residuals to aggregate")
    arr = np.array([[r.schrodinger, r.newton, r.coriolis, r.schrodinger_rel, r.newton_rel]
                    for r in residuals])
    rms = np.sqrt(np.mean(arr**2, axis=0))
    return SNResidual(*map(float, rms))


def trajectory_residual(traj: TrajectoryRecord, cfg: Optional[SolverConfig] = None,
                        pairs: Optional[Sequence[int]] = None, **kw) -> SNResidual:
    """RMS of :func:`sn_residual` over consecutive recorded pairs (all, or ``pairs``)."""
    cfg = cfg or traj.config
    bd = traj.brinkmann()
    idx = range(len(traj) - 1) if pairs is None else pairs
    out = []
    for i in idx:
        sub = BrinkmannData(bd.grid, bd.times[i:i + 2], bd.U[i:i + 2], bd.omega[i:i + 2], bd.constants)
        out.append(sn_residual((traj.states[i], traj.states[i + 1]), sub, cfg, **kw))
    return aggregate(out)


def width(wf: WaveFunction) -> float:
    """Root-mean-square radius about the centroid."""
    grid = wf.grid
    p = np.abs(wf.psi) ** 2
    p = p / p.sum()
    mesh = grid.mesh()
    c = [np.sum(p * m) for m in mesh]
    return float(np.sqrt(sum(np.sum(p * (m - ci) ** 2) for m, ci in zip(mesh, c))))


def centroid(wf: WaveFunction) -> np.ndarray:
    p = np.abs(wf.psi) ** 2
    p = p / p.sum()
    return np.array([np.sum(p * m) for m in wf.grid.mesh()])
