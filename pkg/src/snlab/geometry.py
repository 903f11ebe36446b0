"""Spatially flat Bargmann (Brinkmann) metrics and their curvature.

Extended spacetime carries coordinates ``(x^1..x^d, t, s)``; in arrays the
spatial coordinates take indices ``0..d-1``, ``t`` is index ``d`` and ``s`` is
index ``d+1``.  The metric is

    g = |dx|^2 + 2 dt (omega_i dx^i - U dt + ds)

so that ``g_it = omega_i``, ``g_tt = -2U`` and ``g_ts = 1``.  Curvature follows
``Ric_{mn} = d_a G^a_{mn} - d_n G^a_{ma} + G^a_{ab} G^b_{mn} - G^a_{nb} G^b_{ma}``.

Two independent routes are provided: closed-form Christoffel symbols (first
derivatives of ``U`` and ``omega`` only) and a brute-force oracle that
differentiates the full metric numerically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import expr as _expr
from .errors import GridMismatchError, ShapeError, SingularReparamError, StencilError
from .grid import GridSpec, PhysicalConstants, ScalarField, discrete_norm, grid_like, laplacian_array
from .poisson import box_interior

# 4th-order central first-derivative stencil
_OFFSETS = (-2, -1, 1, 2)
_COEFFS = (1 / 12, -8 / 12, 8 / 12, -1 / 12)


def _stencil_d1(fn, z, eps):
    """d fn / d z_a for every coordinate a; fn maps (P, k) -> (P, ...)."""
    P, k = z.shape
    shifted = []
    for a in range(k):
        for o in _OFFSETS:
            zz = z.copy()
            zz[:, a] += o * eps
            shifted.append(zz)
    vals = fn(np.concatenate(shifted, axis=0))
    vals = vals.reshape((k, len(_OFFSETS), P) + vals.shape[1:])
    out = sum(c * vals[:, i] for i, c in enumerate(_COEFFS)) / eps
    return np.moveaxis(out, 0, 1)  # (P, k, ...)


def _stencil_d2(fn, z, eps):
    """Second derivatives (P, k, k, ...) by nesting the first-derivative stencil."""
    return _stencil_d1(lambda zz: _stencil_d1(fn, zz, eps), z, eps)


# ---------------------------------------------------------------------------
# metric data

@dataclass(frozen=True)
class AnalyticBrinkmann:
    """Brinkmann data given by vectorised callables.

    ``U(x, t)`` maps points ``x`` of shape (P, d) and times of shape (P,) to
    (P,); ``omega(x, t)`` returns (P, d).  A missing ``omega`` means zero.
    """

    dim: int
    U: Callable
    omega: Optional[Callable] = None
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    eps: float = 2e-3

    @property
    def N(self) -> int:
        return self.dim + 2

    def _U(self, z):
        return np.asarray(self.U(z[:, :self.dim], z[:, self.dim]), float).reshape(len(z))

    def _omega(self, z):
        if self.omega is None:
            return np.zeros((len(z), self.dim))
        return np.asarray(self.omega(z[:, :self.dim], z[:, self.dim]), float).reshape(len(z), self.dim)

    def metric(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        d = self.dim
        g = np.zeros((len(pts), d + 2, d + 2))
        g[:, np.arange(d), np.arange(d)] = 1.0
        w = self._omega(pts[:, :d + 1])
        g[:, :d, d] = w
        g[:, d, :d] = w
        g[:, d, d] = -2.0 * self._U(pts[:, :d + 1])
        g[:, d, d + 1] = g[:, d + 1, d] = 1.0
        return g

    def inverse_metric(self, pts) -> np.ndarray:
        """Closed-form inverse: g^ij = delta, g^is = -omega_i, g^ts = 1, g^ss = 2U + |omega|^2."""
        pts = np.atleast_2d(np.asarray(pts, float))
        d = self.dim
        z = pts[:, :d + 1]
        w = self._omega(z)
        gi = np.zeros((len(pts), d + 2, d + 2))
        gi[:, np.arange(d), np.arange(d)] = 1.0
        gi[:, :d, d + 1] = -w
        gi[:, d + 1, :d] = -w
        gi[:, d, d + 1] = gi[:, d + 1, d] = 1.0
        gi[:, d + 1, d + 1] = 2.0 * self._U(z) + np.sum(w**2, axis=1)
        return gi

    def jets(self, z):
        """Derivatives of (U, omega) in (x, t): value, first and second order."""
        e = self.eps
        dU = _stencil_d1(self._U, z, e)               # (P, d+1)
        dW = _stencil_d1(self._omega, z, e)           # (P, d+1, d)
        ddU = _stencil_d2(self._U, z, e)              # (P, d+1, d+1)
        ddW = _stencil_d2(self._omega, z, e)          # (P, d+1, d+1, d)
        return self._U(z), self._omega(z), dU, dW, ddU, ddW


def _point_array(point, N):
    p = np.atleast_2d(np.asarray(point, float))
    if p.shape[1] == N - 1:
        p = np.concatenate([p, np.zeros((len(p), 1))], axis=1)
    if p.shape[1] != N:
        raise ShapeError(f"spacetime points need {N - 1} or {N} coordinates")
    return p


def christoffel_from_parts(dim, w, dU, dW):
    """Closed-form symbols from omega and first derivatives of (U, omega).

    ``dU[:, a]`` and ``dW[:, a, j]`` hold d_a U and d_a omega_j with ``a`` running
    over (x^1..x^d, t).  Returns ``Gamma[p, up, lo1, lo2]``.
    """
    d = dim
    P = len(w)
    t, s = d, d + 1
    Gam = np.zeros((P, d + 2, d + 2, d + 2))
    Dw = dW[:, :d, :]                         # d_i omega_j
    Om = Dw - np.swapaxes(Dw, 1, 2)           # Omega_ij = d_i w_j - d_j w_i
    sym = 0.5 * (Dw + np.swapaxes(Dw, 1, 2))
    gradU = dU[:, :d]
    dtU = dU[:, d]
    dtw = dW[:, d, :]
    Gam[:, :d, :d, t] = -0.5 * Om
    Gam[:, :d, t, :d] = -0.5 * Om
    Gam[:, :d, t, t] = gradU + dtw
    Gam[:, s, :d, :d] = sym
    Gst = -gradU - 0.5 * np.einsum("pij,pj->pi", Om, w)
    Gam[:, s, :d, t] = Gst
    Gam[:, s, t, :d] = Gst
    Gam[:, s, t, t] = -dtU - np.einsum("pi,pi->p", w, gradU + dtw)
    return Gam


def christoffel_closed_array(bd: AnalyticBrinkmann, pts) -> np.ndarray:
    p = _point_array(pts, bd.N)
    z = p[:, :bd.dim + 1]
    w = bd._omega(z)
    dU = _stencil_d1(bd._U, z, bd.eps)
    dW = _stencil_d1(bd._omega, z, bd.eps)
    return christoffel_from_parts(bd.dim, w, dU, dW)


def _symbol_table(Gam, tol=0.0):
    table = {}
    N = Gam.shape[0]
    for a in range(N):
        for b in range(N):
            for c in range(b, N):
                v = float(Gam[a, b, c])
                if abs(v) > tol:
                    table[(a, b, c)] = v
    return table


def christoffel_closed(bd, point, tol: float = 0.0) -> dict:
    """Nonzero symbols ``{(up, lo1, lo2): value}`` with ``lo1 <= lo2`` at one point.

    ``bd`` is an :class:`AnalyticBrinkmann` with ``point = (x.., t[, s])`` or a
    :class:`BrinkmannData` with ``point = (time_index, node_index_tuple)``.
    """
    if isinstance(bd, BrinkmannData):
        ti, node = point
        Gam = bd.christoffel_grid()[(ti,) + tuple(node)]
        bd._check_stencil(ti, node, margin=1)
        return _symbol_table(Gam, tol)
    return _symbol_table(christoffel_closed_array(bd, point)[0], tol)


def christoffel_fd(metric: Callable, pts, eps: float) -> np.ndarray:
    """Christoffel symbols of an arbitrary metric callable by numerical differentiation."""
    pts = np.atleast_2d(np.asarray(pts, float))
    g = metric(pts)
    gi = np.linalg.inv(g)
    dg = _stencil_d1(metric, pts, eps)        # dg[p, a, m, n] = d_a g_mn
    # Gamma_{d, b c} = 1/2 (d_b g_dc + d_c g_db - d_d g_bc)
    low = 0.5 * (np.einsum("pbdc->pdbc", dg) + np.einsum("pcdb->pdbc", dg) - dg)
    return np.einsum("pad,pdbc->pabc", gi, low)


def _ricci_from_gamma(Gam, dGam):
    """Ricci tensor from symbols ``Gam[p,a,b,c]`` and ``dGam[p,e,a,b,c] = d_e Gam^a_bc``."""
    t1 = np.einsum("paamn->pmn", dGam)
    t2 = np.einsum("pnama->pmn", dGam)
    t3 = np.einsum("paab,pbmn->pmn", Gam, Gam)
    t4 = np.einsum("panb,pbma->pmn", Gam, Gam)
    return t1 - t2 + t3 - t4


def ricci_of_metric(metric: Callable, pts, eps: float = 2e-3) -> np.ndarray:
    """Ricci tensor (P, N, N) of a metric callable, nested 4th-order differences."""
    pts = np.atleast_2d(np.asarray(pts, float))
    Gam = christoffel_fd(metric, pts, eps)
    dGam = _stencil_d1(lambda q: christoffel_fd(metric, q, eps), pts, eps)
    return _ricci_from_gamma(Gam, dGam)


def ricci_fd(bd, point, eps: Optional[float] = None) -> np.ndarray:
    """Brute-force Ricci tensor at ``point`` (or a batch of points).

    The analytic path differentiates the full metric twice; the gridded path
    uses central differences over nodes and stored time samples.
    """
    if isinstance(bd, BrinkmannData):
        ti, node = point
        bd._check_stencil(ti, node, margin=2)
        return bd.ricci_grid()[(ti,) + tuple(node)]
    pts = _point_array(point, bd.N)
    out = ricci_of_metric(bd.metric, pts, eps or bd.eps)
    return out[0] if np.ndim(point) == 1 else out


def ricci_from_christoffel(bd: AnalyticBrinkmann, point) -> np.ndarray:
    """Ricci tensor assembled from the closed-form symbols and their derivatives."""
    pts = _point_array(point, bd.N)
    Gam = christoffel_closed_array(bd, pts)
    dGam = _stencil_d1(lambda q: christoffel_closed_array(bd, q), pts, bd.eps)
    out = _ricci_from_gamma(Gam, dGam)
    return out[0] if np.ndim(point) == 1 else out


def ricci_parts(dim, ddU, ddW):
    """Ric_tt and Ric_ti from second derivatives of U and omega.

    Ric_tt = Delta U + d_t(div omega) + |Omega|^2/2 with |Omega|^2 = sum_{i<j} Omega_ij^2,
    Ric_ti = -1/2 d_j Omega_ji; ``dW`` style arrays as in :func:`christoffel_from_parts`.
    """
    d = dim
    lapU = np.einsum("pii->p", ddU[:, :d, :d])
    dt_div = np.einsum("pii->p", ddW[:, d, :d, :])
    # d_k Omega_ji = d_k d_j w_i - d_k d_i w_j
    dOm = ddW[:, :d, :d, :] - np.swapaxes(ddW[:, :d, :d, :], 2, 3)
    rti = -0.5 * np.einsum("pjji->pi", dOm)
    return lapU, dt_div, rti


def ricci_closed(bd: AnalyticBrinkmann, point) -> np.ndarray:
    """Ricci tensor from the reduced closed form (only tt and ti slots)."""
    pts = _point_array(point, bd.N)
    d = bd.dim
    z = pts[:, :d + 1]
    dW = _stencil_d1(bd._omega, z, bd.eps)
    ddU = _stencil_d2(bd._U, z, bd.eps)
    ddW = _stencil_d2(bd._omega, z, bd.eps)
    lapU, dt_div, rti = ricci_parts(d, ddU, ddW)
    Dw = dW[:, :d, :]
    Om = Dw - np.swapaxes(Dw, 1, 2)
    om2 = 0.25 * np.sum(Om**2, axis=(1, 2))
    R = np.zeros((len(pts), d + 2, d + 2))
    R[:, d, d] = lapU + dt_div + om2
    R[:, d, :d] = rti
    R[:, :d, d] = rti
    return R[0] if np.ndim(point) == 1 else R


def scalar_fd(bd, point, eps: Optional[float] = None):
    if isinstance(bd, BrinkmannData):
        ti, node = point
        bd._check_stencil(ti, node, margin=2)
        return float(bd.scalar_grid()[(ti,) + tuple(node)])
    pts = _point_array(point, bd.N)
    ric = ricci_of_metric(bd.metric, pts, eps or bd.eps)
    R = np.einsum("pmn,pmn->p", np.linalg.inv(bd.metric(pts)), ric)
    return float(R[0]) if np.ndim(point) == 1 else R


# ---------------------------------------------------------------------------
# gridded data

@dataclass(frozen=True)
class BrinkmannData:
    """Sampled potentials: ``U`` has shape (nt, *grid.shape), ``omega`` (nt, d, *grid.shape).

    Time derivatives use central differences over ``times`` (uniform spacing);
    with a single time sample the data are treated as static.
    """

    grid: GridSpec
    times: np.ndarray
    U: np.ndarray
    omega: np.ndarray
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, float))
        U = np.asarray(self.U, float)
        W = np.asarray(self.omega, float)
        nt = len(times)
        if U.shape != (nt,) + self.grid.shape:
            raise ShapeError(f"U must have shape {(nt,) + self.grid.shape}, got {U.shape}")
        if W.shape != (nt, self.grid.dim) + self.grid.shape:
            raise ShapeError(f"omega must have shape {(nt, self.grid.dim) + self.grid.shape}")
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(W))):
            raise ShapeError("Brinkmann data must be finite")
        if nt > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("time samples must be increasing")
        for name, val in (("times", times), ("U", U), ("omega", W)):
            val = np.array(val)
            val.flags.writeable = False
            object.__setattr__(self, name, val)
        object.__setattr__(self, "_cache", {})

    @classmethod
    def static(cls, grid: GridSpec, U=None, omega=None, constants=None, time: float = 0.0):
        Uv = np.zeros(grid.shape) if U is None else np.asarray(getattr(U, "values", U), float)
        if omega is None:
            Wv = np.zeros((grid.dim,) + grid.shape)
        else:
            Wv = np.asarray(getattr(omega, "components", omega), float)
        return cls(grid, [time], Uv[None], Wv[None], constants or PhysicalConstants(d=grid.dim))

    @classmethod
    def from_callables(cls, grid: GridSpec, times, U, omega=None, constants=None):
        nodes = grid.nodes()
        Us, Ws = [], []
        for t in np.atleast_1d(times):
            tt = np.full(len(nodes), float(t))
            Us.append(np.asarray(U(nodes, tt), float).reshape(grid.shape))
            if omega is None:
                Ws.append(np.zeros((grid.dim,) + grid.shape))
            else:
                w = np.asarray(omega(nodes, tt), float).reshape(len(nodes), grid.dim)
                Ws.append(w.T.reshape((grid.dim,) + grid.shape))
        return cls(grid, np.atleast_1d(times), np.array(Us), np.array(Ws),
                   constants or PhysicalConstants(d=grid.dim))

    @property
    def N(self) -> int:
        return self.grid.dim + 2

    @property
    def dt(self) -> float:
        if len(self.times) < 2:
            return 0.0
        dts = np.diff(self.times)
        if np.ptp(dts) > 1e-9 * abs(dts[0]):
            raise ValueError("time derivatives need uniformly spaced samples")
        return float(dts[0])

    def U_field(self, k: int = 0) -> ScalarField:
        return ScalarField(self.grid, self.U[k])

    def _d(self, arr, axis):
        """Central difference along array axis ``axis`` (0 = time, 1.. = space)."""
        if axis == 0:
            if arr.shape[0] < 3:
                return np.zeros_like(arr)
            out = np.zeros_like(arr)
            out[1:-1] = (arr[2:] - arr[:-2]) / (2 * self.dt)
            return out
        if self.grid.periodic:
            return (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) / (2 * self.grid.spacing)
        out = np.zeros_like(arr)
        sl = lambda a, b: tuple(slice(a, b) if i == axis else slice(None) for i in range(arr.ndim))
        out[sl(1, -1)] = (arr[sl(2, None)] - arr[sl(0, -2)]) / (2 * self.grid.spacing)
        return out

    def metric_arrays(self):
        d = self.grid.dim
        shape = self.U.shape
        g = np.zeros((d + 2, d + 2) + shape)
        for i in range(d):
            g[i, i] = 1.0
            g[i, d] = g[d, i] = self.omega[:, i]
        g[d, d] = -2.0 * self.U
        g[d, d + 1] = g[d + 1, d] = 1.0
        return g

    def _derivs(self, arr):
        """d_a arr for a in (x^1..x^d, t, s); arr has the time-major sample layout."""
        d = self.grid.dim
        return [self._d(arr, 1 + a) for a in range(d)] + [self._d(arr, 0), np.zeros_like(arr)]

    def christoffel_grid(self) -> np.ndarray:
        """Closed-form symbols at every sample, shape (nt, *grid, N, N, N)."""
        c = self._cache
        if "gamma" not in c:
            d = self.grid.dim
            P = self.U.size
            w = np.moveaxis(self.omega, 1, -1).reshape(P, d)
            dU = np.stack(self._derivs(self.U)[:d + 1], axis=-1).reshape(P, d + 1)
            dW = np.stack([np.stack(self._derivs(self.omega[:, j])[:d + 1], axis=-1)
                           for j in range(d)], axis=-1).reshape(P, d + 1, d)
            Gam = christoffel_from_parts(d, w, dU, dW)
            c["gamma"] = Gam.reshape(self.U.shape + Gam.shape[1:])
        return c["gamma"]

    def ricci_grid(self, metric_scale=None) -> np.ndarray:
        """Oracle Ricci tensor from the sampled metric, shape (nt, *grid, N, N)."""
        key = ("ricci", None if metric_scale is None else id(metric_scale))
        if metric_scale is None and key in self._cache:
            return self._cache[key]
        g = self.metric_arrays()
        if metric_scale is not None:
            g = g * np.asarray(metric_scale).reshape((1, 1, -1) + (1,) * self.grid.dim)
        N = self.N
        gl = np.moveaxis(g, (0, 1), (-2, -1))              # (..., N, N)
        gi = np.linalg.inv(gl)
        dg = np.stack([np.stack([np.stack(self._derivs(g[m, n]), axis=-1)
                                 for n in range(N)], axis=-1) for m in range(N)], axis=-1)
        # dg[..., a, n, m] -> reorder to (..., a, m, n); g symmetric so order is harmless
        dg = np.swapaxes(dg, -1, -2)
        low = 0.5 * (np.einsum("...bdc->...dbc", dg) + np.einsum("...cdb->...dbc", dg) - dg)
        Gam = np.einsum("...ad,...dbc->...abc", gi, low)
        Gm = np.moveaxis(Gam, (-3, -2, -1), (0, 1, 2))
        dGam = np.stack([np.stack([np.stack([np.stack(self._derivs(Gm[a, b, cc]), axis=-1)
                                             for cc in range(N)], axis=-1)
                                   for b in range(N)], axis=-1) for a in range(N)], axis=-1)
        # dGam[..., e, c, b, a] -> (..., e, a, b, c)
        dGam = np.einsum("...ecba->...eabc", dGam)
        P = int(np.prod(self.U.shape))
        R = _ricci_from_gamma(Gam.reshape(P, N, N, N), dGam.reshape(P, N, N, N, N))
        R = R.reshape(self.U.shape + (N, N))
        if metric_scale is None:
            self._cache[key] = R
            self._cache["ginv"] = gi
        return R

    def scalar_grid(self) -> np.ndarray:
        R = self.ricci_grid()
        return np.einsum("...mn,...mn->...", self._cache["ginv"], R)

    def valid_mask(self, margin: int = 2) -> np.ndarray:
        """Samples where nested stencils of width ``margin`` stay inside the data."""
        space = self.grid.interior_mask(margin)
        nt = len(self.times)
        tmask = np.ones(nt, bool)
        if nt >= 3:
            tmask[:margin] = False
            tmask[nt - margin:] = False
        return tmask.reshape((nt,) + (1,) * self.grid.dim) & space[None]

    def _check_stencil(self, ti, node, margin):
        node = tuple(int(i) for i in node)
        if len(node) != self.grid.dim:
            raise ShapeError("node index has the wrong length")
        if not (0 <= ti < len(self.times)) or not self.valid_mask(margin)[(ti,) + node]:
            raise StencilError(f"sample (t={ti}, node={node}) is too close to the boundary")


# ---------------------------------------------------------------------------
# Newton-Cartan field equations

def coriolis_parts(grid: GridSpec, omega, margin: int = 0):
    """(Omega_ij, div omega, (delta Omega)_i) by central differences on one time slice."""
    free = grid if grid.periodic else grid_like(grid, boundary="free")
    d = grid.dim
    from .grid import derivative_array
    W = np.asarray(omega, float)
    Dw = np.array([[derivative_array(W[j], free, i, "fd") for j in range(d)] for i in range(d)])
    Om = Dw - np.swapaxes(Dw, 0, 1)
    div = sum(Dw[i, i] for i in range(d))
    # (delta Omega)_j = d_i Omega_ij
    dOm = np.array([sum(derivative_array(Om[i, j], free, i, "fd") for i in range(d))
                    for j in range(d)])
    return Om, div, dOm


def coriolis_source(grid: GridSpec, omega, omega_dt=None) -> np.ndarray:
    """``|Omega|^2/2 + d_t div omega`` (the non-matter part of the NC source)."""
    Om, div, _ = coriolis_parts(grid, omega)
    out = 0.25 * np.sum(Om**2, axis=(0, 1))
    if omega_dt is not None:
        _, div_t, _ = coriolis_parts(grid, omega_dt)
        out = out + div_t
    return out


def nc_residual(bd: BrinkmannData, rho, Lambda: float = 0.0, time_index: Optional[int] = None,
                mask=None):
    """Residuals of the Newton-Coriolis equations on interior nodes.

    Returns ``(|delta Omega|, |Delta U + d_t div omega + |Omega|^2/2 - 4 pi G rho - Lambda|)``
    in the discrete L2 norm.  ``rho`` is the mass density ``m |psi~|^2``, given as a
    field or an array matching ``bd.U`` (one slice per time sample).  Without
    ``time_index`` the worst slice is reported.
    """
    grid = bd.grid
    vals = np.asarray(getattr(rho, "values", rho), float)
    nt = len(bd.times)
    if vals.shape == grid.shape:
        vals = np.broadcast_to(vals, (nt,) + grid.shape)
    if vals.shape != (nt,) + grid.shape:
        raise GridMismatchError("density and Brinkmann data are sampled differently")
    G = bd.constants.G
    free = grid_like(grid, boundary="free")
    interior = box_interior(grid, 2)
    if mask is not None:
        interior = interior & mask
    dt_W = None
    if nt >= 3:
        dt_W = np.zeros_like(bd.omega)
        dt_W[1:-1] = (bd.omega[2:] - bd.omega[:-2]) / (2 * bd.dt)
    ks = [time_index] if time_index is not None else (
        range(1, nt - 1) if nt >= 3 else range(nt))
    r1 = r2 = 0.0
    for k in ks:
        _, _, dOm = coriolis_parts(grid, bd.omega[k])
        src = coriolis_source(grid, bd.omega[k], None if dt_W is None else dt_W[k])
        lap = laplacian_array(bd.U[k], free, method="fd")
        defect = lap + src - 4 * np.pi * G * vals[k] - Lambda
        r1 = max(r1, float(np.sqrt(sum(discrete_norm(c, grid, interior) ** 2 for c in dOm))))
        r2 = max(r2, discrete_norm(defect, grid, interior))
    return r1, r2


# ---------------------------------------------------------------------------
# time reparametrizations

@dataclass(frozen=True)
class TimeReparam:
    """Orientation-preserving reparametrization ``phi`` with exact derivatives."""

    phi: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    label: str = "phi"

    def __call__(self, t):
        return self.phi(t)

    def lambda_of_t(self, t):
        return self.d1(t)

    @classmethod
    def affine(cls, lam: float, mu: float = 0.0) -> "TimeReparam":
        zero = lambda t: 0.0 * np.asarray(t, float)
        return cls(lambda t: lam * np.asarray(t, float) + mu,
                   lambda t: lam + zero(t), zero, zero, f"{lam}*t+{mu}")

    @classmethod
    def moebius(cls, d: float, e: float, f: float, g: float) -> "TimeReparam":
        det = d * g - e * f
        if det == 0:
            raise SingularReparamError("Moebius map with zero determinant")

        def q(t):
            return f * np.asarray(t, float) + g

        return cls(lambda t: (d * np.asarray(t, float) + e) / q(t),
                   lambda t: det / q(t) ** 2,
                   lambda t: -2 * f * det / q(t) ** 3,
                   lambda t: 6 * f**2 * det / q(t) ** 4,
                   f"({d}*t+{e})/({f}*t+{g})")

    @classmethod
    def power(cls, p: float) -> "TimeReparam":
        def pw(t, k, c):
            return c * np.asarray(t, float) ** (p - k)

        return cls(lambda t: pw(t, 0, 1.0), lambda t: pw(t, 1, p),
                   lambda t: pw(t, 2, p * (p - 1)), lambda t: pw(t, 3, p * (p - 1) * (p - 2)),
                   f"t^{p}")

    @classmethod
    def from_expression(cls, text: str, var: str = "t") -> "TimeReparam":
        e = _expr.parse(text, [var])
        fns = [_expr.compile_expr(_expr.derivative(e, var, k) if k else e, [var]) for k in range(4)]
        return cls(*fns, label=text)

    def compose(self, inner: "TimeReparam") -> "TimeReparam":
        """``self o inner`` with derivatives by the chain rule."""
        a, b = self, inner
        return TimeReparam(
            lambda t: a.phi(b.phi(t)),
            lambda t: a.d1(b.phi(t)) * b.d1(t),
            lambda t: a.d2(b.phi(t)) * b.d1(t) ** 2 + a.d1(b.phi(t)) * b.d2(t),
            lambda t: (a.d3(b.phi(t)) * b.d1(t) ** 3 + 3 * a.d2(b.phi(t)) * b.d1(t) * b.d2(t)
                       + a.d1(b.phi(t)) * b.d3(t)),
            f"({a.label})o({b.label})")

    def check_monotone(self, t0: float, t1: float, samples: int = 257) -> bool:
        ts = np.linspace(t0, t1, samples)
        return bool(np.all(np.asarray(self.d1(ts)) > 0))


def schwarzian(tp: TimeReparam, t):
    """``phi'''/phi' - 3/2 (phi''/phi')^2``."""
    p1 = np.asarray(tp.d1(t), float)
    if np.any(p1 == 0) or not np.all(np.isfinite(p1)):
        raise SingularReparamError(f"phi' vanishes or is undefined at t={t}")
    p2 = np.asarray(tp.d2(t), float)
    p3 = np.asarray(tp.d3(t), float)
    out = p3 / p1 - 1.5 * (p2 / p1) ** 2
    return float(out) if out.ndim == 0 else out


def conformal_metric(bd: AnalyticBrinkmann, tp: TimeReparam) -> Callable:
    """Callable for ``phi'(t) g``."""
    d = bd.dim

    def metric(pts):
        pts = np.atleast_2d(pts)
        lam = np.asarray(tp.d1(pts[:, d]), float).reshape(-1, 1, 1)
        return lam * bd.metric(pts)

    return metric


def conformal_ricci_shift(bd, tp: TimeReparam, point, eps: Optional[float] = None) -> np.ndarray:
    """``Ric(phi' g) - Ric(g)`` by the numerical oracle."""
    if isinstance(bd, BrinkmannData):
        ti, node = point
        bd._check_stencil(ti, node, margin=2)
        scale = np.asarray(tp.d1(bd.times), float)
        if np.any(scale <= 0):
            raise SingularReparamError("phi' must be positive on the stored times")
        hat = bd.ricci_grid(metric_scale=scale)
        idx = (ti,) + tuple(node)
        return hat[idx] - bd.ricci_grid()[idx]
    pts = _point_array(point, bd.N)
    if np.any(np.asarray(tp.d1(pts[:, bd.dim])) <= 0):
        raise SingularReparamError("phi' must be positive at the evaluation point")
    e = eps or bd.eps
    out = ricci_of_metric(conformal_metric(bd, tp), pts, e) - ricci_of_metric(bd.metric, pts, e)
    return out[0] if np.ndim(point) == 1 else out


def expected_ricci_shift(dim: int, tp: TimeReparam, t: float) -> np.ndarray:
    """The predicted shift ``-(N-2)/2 S(phi)(t) dt (x) dt``."""
    N = dim + 2
    out = np.zeros((N, N))
    out[dim, dim] = -(N - 2) / 2 * schwarzian(tp, t)
    return out


def conformal_scalar(bd: AnalyticBrinkmann, tp: TimeReparam, point, eps: Optional[float] = None):
    """Scalar curvature of ``phi' g`` by the oracle."""
    pts = _point_array(point, bd.N)
    metric = conformal_metric(bd, tp)
    ric = ricci_of_metric(metric, pts, eps or bd.eps)
    R = np.einsum("pmn,pmn->p", np.linalg.inv(metric(pts)), ric)
    return float(R[0]) if np.ndim(point) == 1 else R


# ---------------------------------------------------------------------------
# reports

@dataclass
class CurvatureReport:
    points: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    residual_norms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, float))
        self.ricci = np.asarray(self.ricci, float).reshape(len(self.points), *self.ricci.shape[-2:])
        self.scalar = np.asarray(self.scalar, float).reshape(len(self.points))

    def symmetry_defect(self) -> float:
        scale = max(float(np.max(np.abs(self.ricci), initial=0.0)), 1e-300)
        return float(np.max(np.abs(self.ricci - np.swapaxes(self.ricci, 1, 2)), initial=0.0)) / scale

    def to_dict(self) -> dict:
        return {
            "points": [
                {"coords": [float(v) for v in p],
                 "ricci": [[float(v) for v in row] for row in r],
                 "scalar": float(s)}
                for p, r, s in zip(self.points, self.ricci, self.scalar)
            ],
            "residual_norms": {k: float(v) for k, v in sorted(self.residual_norms.items())},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def curvature_report(bd: AnalyticBrinkmann, pts) -> CurvatureReport:
    pts = _point_array(pts, bd.N)
    ric = ricci_fd(bd, pts)
    R = np.einsum("pmn,pmn->p", np.linalg.inv(bd.metric(pts)), ric)
    closed = ricci_from_christoffel(bd, pts)
    scale = max(float(np.max(np.abs(ric))), 1e-300)
    norms = {
        "oracle_vs_closed_max": float(np.max(np.abs(ric - closed))),
        "oracle_vs_closed_rel": float(np.max(np.abs(ric - closed))) / scale,
        "scalar_max": float(np.max(np.abs(R))),
    }
    return CurvatureReport(pts, ric, R, norms)


# ---------------------------------------------------------------------------
# analytic catalog

def polynomial_gaussian(rng: np.random.Generator, dim: int, degree: int = 2, width: float = 1.5,
                        time_dependent: bool = True):
    """Random vectorised ``p(x, t) exp(-|x|^2 / (2 width^2))`` with a low-order polynomial ``p``."""
    k = dim + 1
    terms = []
    for _ in range(6):
        powers = rng.integers(0, degree + 1, size=k)
        if not time_dependent:
            powers[-1] = 0
        terms.append((float(rng.normal()), powers))

    def fn(x, t):
        z = np.concatenate([np.atleast_2d(x), np.asarray(t, float).reshape(-1, 1)], axis=1)
        poly = sum(c * np.prod(z**p, axis=1) for c, p in terms)
        return poly * np.exp(-np.sum(z[:, :dim] ** 2, axis=1) / (2 * width**2))

    return fn


def random_brinkmann(rng: np.random.Generator, dim: int = 3, with_omega: bool = True,
                     constants: Optional[PhysicalConstants] = None) -> AnalyticBrinkmann:
    U = polynomial_gaussian(rng, dim)
    comps = [polynomial_gaussian(rng, dim) for _ in range(dim)] if with_omega else None

    def omega(x, t):
        return np.stack([c(x, t) for c in comps], axis=1)

    return AnalyticBrinkmann(dim, U, omega if with_omega else None,
                             constants or PhysicalConstants(d=dim))


def rigid_rotation(Omega0: float, dim: int = 3, plane=(0, 1)) -> Callable:
    """``omega = Omega0/2 (-x_b, x_a)`` in the (a, b) plane; ``Omega_ab = Omega0``."""
    a, b = plane

    def omega(x, t):
        x = np.atleast_2d(x)
        w = np.zeros_like(x, dtype=float)
        w[:, a] = -0.5 * Omega0 * x[:, b]
        w[:, b] = 0.5 * Omega0 * x[:, a]
        return w

    return omega


def harmonic_U(x, t):
    return 0.5 * np.sum(np.atleast_2d(x) ** 2, axis=1)


def analytic_from_expressions(dim: int, U: str, omega=None, constants=None) -> AnalyticBrinkmann:
    """Brinkmann data from grammar expressions in ``x1..xd`` and ``t``."""
    names = [f"x{i + 1}" for i in range(dim)] + ["t"]
    fU = _expr.compile_expr(_expr.parse(U, names), names)
    fW = None
    if omega is not None:
        if len(omega) != dim:
            raise ShapeError(f"omega needs {dim} component expressions")
        comps = [_expr.compile_expr(_expr.parse(w, names), names) for w in omega]

        def fW(x, t):
            x = np.atleast_2d(x)
            args = [x[:, i] for i in range(dim)] + [np.asarray(t, float)]
            return np.stack([c(*args) for c in comps], axis=1)

    def fUc(x, t):
        x = np.atleast_2d(x)
        return fU(*([x[:, i] for i in range(dim)] + [np.asarray(t, float)]))

    return AnalyticBrinkmann(dim, fUc, fW, constants or PhysicalConstants(d=dim))
