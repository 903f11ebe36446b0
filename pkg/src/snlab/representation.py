"""The unitary action of the SN group on wave functions and the covariance test.

For an element with preimage map ``(y, tau) -> (x*, t*)`` the transformed wave
function is

    [rho(a) psi](y, tau) = |f t* + g|^(dim/2) exp(-i m Phi(x*, t*)/hbar) psi(x*, t*)

with ``Phi = f |A x* + b t* + c|^2 / (2 (f t* + g)) - <A x*, b> - |b|^2 t*/2 + h``
the s-shift of the action, and it carries the mass ``nu m``.  For ``f = 0`` this
is ``g^(dim/2) exp[i m (g<b,y> - g|b|^2 tau/(2d) + e|b|^2/(2d) - <b,c> - h)/hbar]
psi(A^-1[g y - (g tau - e) b/d - c], (g tau - e)/d)``.  A time slice is mapped to
a time slice, so a recorded trajectory transforms without time interpolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, GridMismatchError, ProjectiveSingularity
from .geometry import BrinkmannData
from .grid import WaveFunction, discrete_norm, l2_norm, resample_affine
from .group import SNElement, transform_mass, transform_potentials
from .solver import SolverConfig, TrajectoryRecord, aggregate, sn_residual, trajectory_residual

_NODE_TOL = 1e-9


@dataclass(frozen=True)
class RepApplication:
    """Bookkeeping of one application of ``rho``: masses and interpolation mode."""

    element: SNElement
    input_mass: float
    interpolation: str = "trig"
    output_mass: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "output_mass", transform_mass(self.element, self.input_mass))


def _default_mode(grid, mode):
    if mode is None:
        return "trig" if grid.periodic else "linear"
    return mode


def _preimage(el: SNElement, tau: float):
    """Affine map ``y -> x*`` at the image time ``tau``, and ``(t*, q*)``."""
    den = el.d - el.f * tau
    if abs(den) < 1e-14:
        raise ProjectiveSingularity(f"d - f tau = 0 at tau = {tau}")
    ts = (el.g * tau - el.e) / den
    q = el.f * ts + el.g
    M = q * el.A.T
    v = -el.A.T @ (el.b * ts + el.c)
    return M, v, ts, q


def _phase(el: SNElement, grid, M, v, ts, q, mass, hbar):
    x = grid.nodes() @ M.T + v
    Ax = x @ el.A.T
    s_shift = -Ax @ el.b - 0.5 * (el.b @ el.b) * ts + el.h
    if el.f != 0:
        num = Ax + el.b * ts + el.c
        s_shift = s_shift + 0.5 * el.f * np.sum(num**2, axis=1) / q
    return np.exp(-1j * mass * s_shift / hbar).reshape(grid.shape)


def rho_apply(el: SNElement, wf: WaveFunction, hbar: float = 1.0, mode: Optional[str] = None,
              outside: Optional[str] = None) -> WaveFunction:
    """``rho(el) psi`` on the same grid, stamped at ``tau = t'(wf.time)`` with mass ``nu m``.

    ``mode`` is the spatial interpolation (``trig`` default on periodic grids);
    preimages outside a free box raise :class:`DomainError` unless
    ``outside="zero"``.
    """
    grid = wf.grid
    if el.dim != grid.dim:
        raise GridMismatchError(f"element dim {el.dim} vs grid dim {grid.dim}")
    tau = float(el.act_time(wf.time))
    M, v, ts, q = _preimage(el, tau)
    mode = _default_mode(grid, mode)
    vals, _ = resample_affine(wf.psi, grid, M, v, mode, outside)
    pref = abs(q) ** (grid.dim / 2)
    psi = pref * _phase(el, grid, M, v, ts, q, wf.mass, hbar) * vals
    return WaveFunction(grid, psi, transform_mass(el, wf.mass), tau)


def unitarity_defect(el: SNElement, wf: WaveFunction, **kw) -> float:
    """``| |rho(el) psi| - |psi| |``."""
    return abs(l2_norm(rho_apply(el, wf, **kw)) - l2_norm(wf))


def phase_aligned_difference(a, b, grid=None, mask=None):
    """``min_theta |a - e^(i theta) b|`` and the minimising ``theta``.

    Arrays or wave functions; the norm is the discrete L2 norm when ``grid`` is
    known and the Euclidean norm otherwise.
    """
    if isinstance(a, WaveFunction):
        grid = grid or a.grid
        a = a.psi
    if isinstance(b, WaveFunction):
        grid = grid or b.grid
        b = b.psi
    a = np.asarray(a)
    b = np.asarray(b)
    sel = np.ones(a.shape, bool) if mask is None else mask
    overlap = np.sum(np.conj(b[sel]) * a[sel])
    theta = float(np.angle(overlap)) if abs(overlap) > 0 else 0.0
    diff = a - np.exp(1j * theta) * b
    if grid is None:
        return float(np.linalg.norm(diff[sel])), theta
    return discrete_norm(diff, grid, mask), theta


def state_at(traj: TrajectoryRecord, t: float) -> WaveFunction:
    """State at time ``t`` by linear interpolation between recorded states."""
    times = traj.times
    if not times[0] - 1e-12 <= t <= times[-1] + 1e-12:
        raise DomainError(f"t = {t} outside the recorded interval [{times[0]}, {times[-1]}]")
    k = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2)) if len(times) > 1 else 0
    if len(times) == 1 or abs(t - times[k]) < 1e-12:
        return traj.states[k].replace(time=float(t))
    if abs(t - times[k + 1]) < 1e-12:
        return traj.states[k + 1].replace(time=float(t))
    w = (t - times[k]) / (times[k + 1] - times[k])
    psi = (1 - w) * traj.states[k].psi + w * traj.states[k + 1].psi
    return traj.states[k].replace(psi=psi, time=float(t))


def rho_apply_trajectory(el: SNElement, traj: TrajectoryRecord, hbar: Optional[float] = None,
                         mode: Optional[str] = None, times: Optional[Sequence[float]] = None,
                         outside: Optional[str] = None):
    """Transformed states at the images of the recorded times (or at ``times``).

    With explicit ``times`` the source states at the preimage times come from
    :func:`state_at`, i.e. linear interpolation in time.
    """
    hbar = traj.constants.hbar if hbar is None else hbar
    if times is None:
        return [rho_apply(el, wf, hbar, mode, outside) for wf in traj.states]
    out = []
    for tau in times:
        _, _, ts, _ = _preimage(el, tau)
        out.append(rho_apply(el, state_at(traj, ts), hbar, mode, outside))
    return out


def preimage_mask(el: SNElement, grid, tau: float, margin: int = 3) -> np.ndarray:
    """Nodes whose preimage lies at least ``margin`` cells inside the box.

    Preimages that land exactly on nodes are always kept, so node permutations
    (and the identity) lose nothing.
    """
    M, v, _, _ = _preimage(el, tau)
    q = (grid.nodes() @ M.T + v + grid.extent) / grid.spacing
    exact = np.all(np.abs(q - np.rint(q)) < _NODE_TOL, axis=1)
    n = grid.points
    inside = np.all((q >= margin - _NODE_TOL) & (q <= n - 1 - margin + _NODE_TOL), axis=1)
    return (inside | (exact & np.all((q > -0.5) & (q < n - 0.5), axis=1))).reshape(grid.shape)


@dataclass(frozen=True)
class CovarianceReport:
    element: dict
    base: float
    transformed: float
    control: float
    control_kind: str
    output_mass: float
    control_mass: float
    clipped_fraction: float
    newton_form: str
    pass_factor: float = 2.0
    control_factor: float = 10.0

    @property
    def ratio(self) -> float:
        return self.transformed / self.base if self.base > 0 else math.inf

    @property
    def control_ratio(self) -> float:
        return self.control / self.base if self.base > 0 else math.inf

    @property
    def covariant(self) -> bool:
        return self.ratio <= self.pass_factor

    @property
    def control_fails(self) -> bool:
        return self.control_ratio >= self.control_factor

    def to_dict(self) -> dict:
        return {
            "element": self.element,
            "residual_before": self.base,
            "residual_after": self.transformed,
            "control_residual": self.control,
            "control_kind": self.control_kind,
            "ratio": self.ratio,
            "control_ratio": self.control_ratio,
            "output_mass": self.output_mass,
            "control_mass": self.control_mass,
            "clipped_fraction": self.clipped_fraction,
            "newton_form": self.newton_form,
            "tolerances": {"pass_factor": self.pass_factor, "control_factor": self.control_factor},
            "covariant": self.covariant,
            "control_fails": self.control_fails,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def covariance_check(el: SNElement, traj: TrajectoryRecord, cfg: Optional[SolverConfig] = None, *,
                     mode: Optional[str] = None, margin: int = 3, newton_form: Optional[str] = None,
                     control: str = "auto", control_scale: float = 1.2,
                     pairs: Optional[Sequence[int]] = None) -> CovarianceReport:
    """Residual of the transformed trajectory under the transformed equations.

    The transformed states carry the mass ``nu m`` and the potentials follow the
    transformation law of ``transform_potentials``; both are then fed to
    :func:`sn_residual` over the nodes whose preimage is trusted.  The control
    evaluates the same data with a mass that violates the mass law: the input
    mass ``m`` when ``nu != 1`` (``control="unscaled-mass"``), otherwise
    ``control_scale * nu m`` (``control="perturbed-nu"``).

    ``newton_form`` defaults to the solver's choice, except with a cosmological
    term: its fixed ``Lambda |x|^2`` static part is not translation invariant
    while the local field equation is, so the differential form is used.
    """
    cfg = cfg or traj.config
    grid = traj.grid
    if el.dim != grid.dim:
        raise GridMismatchError("element and trajectory have different dimensions")
    hbar = traj.constants.hbar
    if newton_form is None and cfg.Lambda != 0:
        newton_form = "differential"
    bd = traj.brinkmann()
    idx = list(range(len(traj) - 1)) if pairs is None else list(pairs)
    kw = {"newton_form": newton_form}
    base = trajectory_residual(traj, cfg, pairs=idx, **kw)

    # preimages leaving the box are zeroed: wrapping would import periodic images
    states = rho_apply_trajectory(el, traj, hbar, mode, outside="zero")
    bdh, valid = transform_potentials(el, bd, return_mask=True)
    masks = [valid[k] & preimage_mask(el, grid, bdh.times[k], margin) for k in range(len(states))]
    m_out = states[0].mass
    if control == "auto":
        control = "unscaled-mass" if not math.isclose(el.nu, 1.0) else "perturbed-nu"
    if control == "unscaled-mass":
        m_ctrl = traj.mass
    elif control == "perturbed-nu":
        m_ctrl = control_scale * m_out
    else:
        raise ValueError(f"unknown control {control!r}")

    res, ctrl, clipped = [], [], []
    for i in idx:
        sub = BrinkmannData(grid, bdh.times[i:i + 2], bdh.U[i:i + 2], bdh.omega[i:i + 2],
                            bdh.constants)
        mask = masks[i] & masks[i + 1]
        clipped.append(1.0 - mask.mean())
        pair = (states[i], states[i + 1])
        res.append(sn_residual(pair, sub, cfg, mass=m_out, mask=mask, **kw))
        ctrl.append(sn_residual(pair, sub, cfg, mass=m_ctrl, mask=mask, **kw))
    return CovarianceReport(
        element=el.to_dict(),
        base=float(base),
        transformed=float(aggregate(res)),
        control=float(aggregate(ctrl)),
        control_kind=control,
        output_mass=m_out,
        control_mass=m_ctrl,
        clipped_fraction=float(np.mean(clipped)) if clipped else 0.0,
        newton_form=newton_form or "auto",
    )
