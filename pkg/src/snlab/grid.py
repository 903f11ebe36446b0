"""Uniform Cartesian grids, sampled fields and the differential operators on them.

Nodes sit at ``x_j = -L + j*h`` with ``h = 2L/n`` along every axis, so the
origin is always a node and, on periodic grids, ``-L`` and ``+L`` coincide.
Arrays use ``ij`` indexing: array axis ``a`` is the coordinate ``x_a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .errors import (
    DomainError,
    GridMismatchError,
    InvalidFieldError,
    ShapeError,
    UnsupportedDimensionError,
)

PERIODIC = "periodic"
FREE = "free"
_BOUNDARY_ALIASES = {
    "periodic": PERIODIC,
    "free": FREE,
    "zero-padded-free-space": FREE,
    "free-space": FREE,
}

# index-space tolerance under which a query point is treated as a node
_NODE_TOL = 1e-9


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    G: float = 1.0
    d: int = 3

    def __post_init__(self):
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        if not self.G >= 0:
            raise ValueError("G must be non-negative")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")

    @property
    def C_d(self) -> float:
        """Normalisation of the decaying Green function, Gamma(d/2)/(2 pi^(d/2) (d-2))."""
        if self.d <= 2:
            raise UnsupportedDimensionError(f"C_d needs d > 2, got d={self.d}")
        return math.gamma(self.d / 2) / (2 * math.pi ** (self.d / 2) * (self.d - 2))

    @property
    def N(self) -> int:
        return self.d + 2

    @property
    def w(self) -> float:
        return (self.N - 2) / (2 * self.N)


@dataclass(frozen=True)
class GridSpec:
    dim: int
    extent: float
    points: int
    boundary: str = PERIODIC

    def __post_init__(self):
        b = _BOUNDARY_ALIASES.get(self.boundary)
        if b is None:
            raise ValueError(f"unknown boundary {self.boundary!r}")
        object.__setattr__(self, "boundary", b)
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.points < 4 or self.points % 2:
            raise ValueError("points per axis must be even and >= 4")
        if not self.extent > 0:
            raise ValueError("extent must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    @property
    def axis(self) -> np.ndarray:
        return -self.extent + self.spacing * np.arange(self.points)

    def mesh(self) -> list:
        return np.meshgrid(*([self.axis] * self.dim), indexing="ij")

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(n**dim, dim)`` in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(m**2 for m in self.mesh()))

    def wavenumbers(self) -> list:
        k = 2 * np.pi * sfft.fftfreq(self.points, d=self.spacing)
        return np.meshgrid(*([k] * self.dim), indexing="ij")

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        """Nodes whose ``margin``-wide stencils stay inside the stored samples."""
        mask = np.ones(self.shape, dtype=bool)
        if self.periodic or margin <= 0:
            return mask
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = slice(0, margin)
            mask[tuple(sl)] = False
            sl[ax] = slice(self.points - margin, None)
            mask[tuple(sl)] = False
        return mask

    def to_dict(self) -> dict:
        return {"dim": self.dim, "extent": self.extent, "points": self.points,
                "boundary": self.boundary}


def _frozen(values, dtype=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def _check_finite(values, what):
    if values.size == 0:
        raise InvalidFieldError(f"{what} is empty")
    if not np.all(np.isfinite(values)):
        raise InvalidFieldError(f"{what} contains NaN or Inf")


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise ShapeError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        _check_finite(v, "field")
        object.__setattr__(self, "values", _frozen(v))

    def __add__(self, other):
        _same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values - other.values)

    def scaled(self, factor) -> "ScalarField":
        return ScalarField(self.grid, factor * self.values)


@dataclass(frozen=True)
class VectorField:
    grid: GridSpec
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components)
        if c.shape != (self.grid.dim,) + self.grid.shape:
            raise ShapeError(
                f"vector field needs {self.grid.dim} components of shape {self.grid.shape}, "
                f"got array of shape {c.shape}")
        _check_finite(c, "vector field")
        object.__setattr__(self, "components", _frozen(c))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        return cls(grid, np.zeros((grid.dim,) + grid.shape))

    def __getitem__(self, i) -> ScalarField:
        return ScalarField(self.grid, self.components[i])

    def norm_squared(self) -> np.ndarray:
        return np.sum(self.components**2, axis=0)


@dataclass(frozen=True)
class WaveFunction:
    grid: GridSpec
    psi: np.ndarray
    mass: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.psi, dtype=complex)
        if p.shape != self.grid.shape:
            raise ShapeError(f"psi shape {p.shape} does not match grid {self.grid.shape}")
        _check_finite(p, "wave function")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        object.__setattr__(self, "psi", _frozen(p))

    @property
    def field(self) -> ScalarField:
        return ScalarField(self.grid, self.psi)

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def replace(self, **changes) -> "WaveFunction":
        kw = dict(grid=self.grid, psi=self.psi, mass=self.mass, time=self.time)
        kw.update(changes)
        return WaveFunction(**kw)


def _same_grid(a: GridSpec, b: GridSpec):
    if a != b:
        raise GridMismatchError(f"grids differ: {a} vs {b}")


def discrete_norm(values, grid: GridSpec, mask=None) -> float:
    """Quadrature L2 norm ``(sum |v|^2 h^d)^(1/2)``, optionally restricted to ``mask``."""
    v = np.abs(np.asarray(values)) ** 2
    if mask is not None:
        v = v[mask]
    return float(np.sqrt(np.sum(v) * grid.cell_volume))


def l2_norm(wf) -> float:
    """L2 norm of a wave function (or any field) by rectangle quadrature."""
    values = wf.psi if isinstance(wf, WaveFunction) else wf.values
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise InvalidFieldError("cannot take the norm of an empty or non-finite field")
    return discrete_norm(values, wf.grid)


def normalize(wf: WaveFunction) -> WaveFunction:
    nrm = l2_norm(wf)
    if nrm == 0.0:
        raise ZeroDivisionError("cannot normalize the zero wave function")
    return wf.replace(psi=wf.psi / nrm)


def gaussian(grid: GridSpec, width: float, center=None, momentum=None, hbar: float = 1.0,
             mass: float = 1.0, time: float = 0.0) -> WaveFunction:
    """Normalised Gaussian ``exp(-|x-c|^2/(2 width^2) + i k.x)`` with ``k = momentum/hbar``."""
    center = np.zeros(grid.dim) if center is None else np.asarray(center, float)
    mesh = grid.mesh()
    r2 = sum((m - c) ** 2 for m, c in zip(mesh, center))
    psi = np.exp(-r2 / (2 * width**2)).astype(complex)
    if momentum is not None:
        phase = sum(p * m for p, m in zip(np.asarray(momentum, float), mesh)) / hbar
        psi = psi * np.exp(1j * phase)
    return normalize(WaveFunction(grid, psi, mass=mass, time=time))


# ---------------------------------------------------------------------------
# differential operators

def _default_method(grid: GridSpec, method: Optional[str]) -> str:
    if method is None:
        return "spectral" if grid.periodic else "fd"
    if method not in ("spectral", "fd"):
        raise ValueError(f"unknown derivative method {method!r}")
    if method == "spectral" and not grid.periodic:
        raise ValueError("spectral derivatives need a periodic grid")
    return method


def _shifted(values, grid: GridSpec, axis: int, shift: int):
    """``values`` at node ``j + shift`` along ``axis``; zeros outside a free grid."""
    if grid.periodic:
        return np.roll(values, -shift, axis=axis)
    out = np.zeros_like(values)
    n = values.shape[axis]
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if shift >= 0:
        src[axis] = slice(shift, n)
        dst[axis] = slice(0, n - shift)
    else:
        src[axis] = slice(0, n + shift)
        dst[axis] = slice(-shift, n)
    out[tuple(dst)] = values[tuple(src)]
    return out


def laplacian_array(values, grid: GridSpec, method: Optional[str] = None) -> np.ndarray:
    method = _default_method(grid, method)
    if method == "spectral":
        k2 = sum(k**2 for k in grid.wavenumbers())
        out = sfft.ifftn(-k2 * sfft.fftn(values))
        return out if np.iscomplexobj(values) else out.real
    h2 = grid.spacing**2
    out = -2.0 * grid.dim * values
    for ax in range(grid.dim):
        out = out + _shifted(values, grid, ax, 1) + _shifted(values, grid, ax, -1)
    return out / h2


_FD2_COEFFS = {
    2: (-2.0, 1.0),
    4: (-5 / 2, 4 / 3, -1 / 12),
    6: (-49 / 18, 3 / 2, -3 / 20, 1 / 90),
    8: (-205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560),
}


def fd_laplacian(values, grid: GridSpec, order: int = 2) -> np.ndarray:
    """Central-difference Laplacian of the given even order (2, 4, 6 or 8).

    On free grids the stencil reads zeros beyond the boundary, so the result is
    meaningful on ``grid.interior_mask(order // 2)`` only.
    """
    if order not in _FD2_COEFFS:
        raise ValueError(f"unsupported finite-difference order {order}")
    coeffs = _FD2_COEFFS[order]
    out = grid.dim * coeffs[0] * values
    for ax in range(grid.dim):
        for k, c in enumerate(coeffs[1:], start=1):
            out = out + c * (_shifted(values, grid, ax, k) + _shifted(values, grid, ax, -k))
    return out / grid.spacing**2


def derivative_array(values, grid: GridSpec, axis: int, method: Optional[str] = None):
    method = _default_method(grid, method)
    if method == "spectral":
        k = 2 * np.pi * sfft.fftfreq(grid.points, d=grid.spacing)
        k[grid.points // 2] = 0.0  # odd derivative: drop the Nyquist mode
        shape = [1] * grid.dim
        shape[axis] = grid.points
        out = sfft.ifft(1j * k.reshape(shape) * sfft.fft(values, axis=axis), axis=axis)
        return out if np.iscomplexobj(values) else out.real
    return (_shifted(values, grid, axis, 1) - _shifted(values, grid, axis, -1)) / (2 * grid.spacing)


def laplacian(f: ScalarField, method: Optional[str] = None) -> ScalarField:
    """Spectral on periodic grids, second-order central differences otherwise.

    On free grids the values beyond the boundary are taken to be zero, so only
    interior nodes carry the O(h^2) accuracy.
    """
    return ScalarField(f.grid, laplacian_array(f.values, f.grid, method))


def gradient(f: ScalarField, method: Optional[str] = None) -> VectorField:
    comps = [derivative_array(f.values, f.grid, a, method) for a in range(f.grid.dim)]
    return VectorField(f.grid, np.stack(comps))


def divergence(v: VectorField, method: Optional[str] = None) -> ScalarField:
    if v.components.shape[0] != v.grid.dim:
        raise ShapeError("vector field dimension does not match its grid")
    out = sum(derivative_array(v.components[a], v.grid, a, method) for a in range(v.grid.dim))
    return ScalarField(v.grid, out)


# ---------------------------------------------------------------------------
# interpolation

def _periodic_weights(u, n: int, period: float):
    """Trigonometric (periodic sinc) interpolation weights for offsets ``u``."""
    a = np.pi * np.asarray(u, float) / period
    s = np.sin(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.sin(n * a) * np.cos(a) / (n * s)
    near = np.abs(s) < 1e-13
    if np.any(near):
        w = np.where(near, 1.0, w)
    return w


def _fractional_index(x, grid: GridSpec):
    return (np.asarray(x, float) + grid.extent) / grid.spacing


def _node_gather(values, grid: GridSpec, q):
    """Return values at fractional indices ``q`` (P, d) if all are nodes, else None."""
    r = np.rint(q)
    if np.max(np.abs(q - r), initial=0.0) > _NODE_TOL:
        return None
    idx = r.astype(np.int64)
    if grid.periodic:
        idx %= grid.points
    elif idx.min(initial=0) < 0 or idx.max(initial=0) > grid.points - 1:
        return None
    return values[tuple(idx.T)]


def _trig_contract(arr, pts, grid: GridSpec, chunk_elems: int = 4_000_000):
    """Contract the leading ``k`` node axes of ``arr`` against trig weights.

    ``arr`` has shape ``(n,)*k + (R,)``, ``pts`` has shape ``(P, k)``;
    returns ``(P, R)``.
    """
    n = grid.points
    k = pts.shape[1]
    R = arr.shape[-1]
    period = 2 * grid.extent
    xs = grid.axis
    flat = arr.reshape(n, -1)
    P = pts.shape[0]
    per_point = max(1, n ** (k - 1) * R)
    step = max(1, chunk_elems // per_point)
    out = np.empty((P, R), dtype=np.result_type(arr.dtype, float))
    for lo in range(0, P, step):
        p = pts[lo:lo + step]
        W0 = _periodic_weights(p[:, 0:1] - xs[None, :], n, period)
        T = (W0 @ flat).reshape((len(p),) + (n,) * (k - 1) + (R,))
        for j in range(1, k):
            Wj = _periodic_weights(p[:, j:j + 1] - xs[None, :], n, period)
            Wj = Wj.reshape((len(p), n) + (1,) * (T.ndim - 2))
            T = np.sum(T * Wj, axis=1)
        out[lo:lo + step] = T.reshape(len(p), R)
    return out


def _outside(q, grid: GridSpec):
    """Mask of points (fractional index rows) outside the stored domain."""
    if grid.periodic:
        return np.any((q < 0) | (q > grid.points), axis=1)
    return np.any((q < -_NODE_TOL) | (q > grid.points - 1 + _NODE_TOL), axis=1)


def _spline_eval(values, grid: GridSpec, q, order: int):
    mode = "grid-wrap" if grid.periodic else "nearest"
    coords = q.T
    if np.iscomplexobj(values):
        re = ndimage.map_coordinates(values.real, coords, order=order, mode=mode)
        im = ndimage.map_coordinates(values.imag, coords, order=order, mode=mode)
        return re + 1j * im
    return ndimage.map_coordinates(values, coords, order=order, mode=mode)


def _default_interp(grid: GridSpec, mode: Optional[str]) -> str:
    if mode is None:
        return "trig" if grid.periodic else "linear"
    if mode not in ("trig", "linear", "spline"):
        raise ValueError(f"unknown interpolation mode {mode!r}")
    if mode == "trig" and not grid.periodic:
        raise ValueError("trigonometric interpolation needs a periodic grid")
    return mode


def sample_points(values, grid: GridSpec, pts, mode: Optional[str] = None,
                  outside: Optional[str] = None) -> np.ndarray:
    """Interpolate node ``values`` at arbitrary points ``pts`` of shape (P, d).

    ``outside`` is one of ``"wrap"`` (periodic default), ``"error"`` (free default)
    or ``"zero"``.
    """
    mode = _default_interp(grid, mode)
    pts = np.atleast_2d(np.asarray(pts, float))
    if pts.shape[1] != grid.dim:
        raise ShapeError(f"points must have {grid.dim} coordinates")
    outside = outside or ("wrap" if grid.periodic else "error")
    q = _fractional_index(pts, grid)
    out_mask = _outside(q, grid)
    if outside == "error" and np.any(out_mask):
        raise DomainError(f"{int(out_mask.sum())} query point(s) outside the grid domain")
    if outside == "wrap" and not grid.periodic:
        raise ValueError("wrap-around is only defined on periodic grids")
    gathered = _node_gather(values, grid, q)
    if gathered is not None:
        out = np.array(gathered)
    elif mode == "trig":
        out = _trig_contract(values.reshape(grid.shape + (1,)), pts, grid)[:, 0]
    else:
        out = _spline_eval(values, grid, q, 1 if mode == "linear" else 5)
    if outside == "zero" and np.any(out_mask):
        out = np.where(out_mask, 0, out)
    if not np.iscomplexobj(values):
        out = np.real(out)
    return out


def sample_at(f: ScalarField, x, mode: Optional[str] = None, outside: Optional[str] = None):
    """Value of ``f`` at point ``x`` (shape (d,)) or points (shape (P, d))."""
    x = np.asarray(x, float)
    out = sample_points(f.values, f.grid, x.reshape(-1, f.grid.dim), mode, outside)
    return out[0] if x.ndim == 1 else out


def _components(M, tol=0.0):
    """Groups of axes coupled by the nonzero pattern of ``M``."""
    d = M.shape[0]
    parent = list(range(d))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(d):
        for j in range(d):
            if abs(M[i, j]) > tol:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(d):
        groups.setdefault(find(i), []).append(i)
    return [sorted(g) for g in groups.values()]


def resample_affine(values, grid: GridSpec, M, v, mode: Optional[str] = None,
                    outside: Optional[str] = None):
    """Evaluate node ``values`` at ``M y + v`` for every grid node ``y``.

    Returns ``(array, outside_mask)``. Trigonometric resampling factorises over
    groups of axes that ``M`` couples, so diagonal maps cost ``O(n^(d+1))``.
    """
    mode = _default_interp(grid, mode)
    M = np.asarray(M, float).reshape(grid.dim, grid.dim)
    v = np.asarray(v, float).reshape(grid.dim)
    outside = outside or ("wrap" if grid.periodic else "error")
    nodes = grid.nodes()
    pts = nodes @ M.T + v
    q = _fractional_index(pts, grid)
    out_mask = _outside(q, grid).reshape(grid.shape)
    if outside == "error" and np.any(out_mask):
        raise DomainError(f"{int(out_mask.sum())} resampled node(s) fall outside the grid domain")
    if outside == "wrap" and not grid.periodic:
        raise ValueError("wrap-around is only defined on periodic grids")
    gathered = _node_gather(values, grid, q)
    if gathered is not None:
        out = np.array(gathered).reshape(grid.shape)
    elif mode != "trig":
        out = _spline_eval(values, grid, q, 1 if mode == "linear" else 5).reshape(grid.shape)
    else:
        out = np.asarray(values)
        n, d, xs = grid.points, grid.dim, grid.axis
        for comp in _components(M):
            k = len(comp)
            rest = [a for a in range(d) if a not in comp]
            arr = np.moveaxis(out, comp, list(range(k)))
            rest_shape = arr.shape[k:]
            arr = arr.reshape((n,) * k + (-1,))
            sub = np.meshgrid(*([xs] * k), indexing="ij")
            ys = np.stack([s.ravel() for s in sub], axis=1)
            cp = ys @ M[np.ix_(comp, comp)].T + v[comp]
            res = _trig_contract(arr, cp, grid)
            res = res.reshape((n,) * k + rest_shape)
            out = np.moveaxis(res, list(range(k)), comp)
            del rest
    if outside == "zero" and np.any(out_mask):
        out = np.where(out_mask, 0, out)
    if not np.iscomplexobj(values):
        out = np.real(out)
    return out, out_mask


def erode(mask, steps: int = 1) -> np.ndarray:
    if steps <= 0:
        return mask
    return ndimage.binary_erosion(mask, iterations=steps, border_value=0)


def grid_like(grid: GridSpec, **changes) -> GridSpec:
    kw = grid.to_dict()
    kw.update(changes)
    return GridSpec(**kw)


def as_values(f) -> np.ndarray:
    if isinstance(f, (ScalarField,)):
        return f.values
    if isinstance(f, WaveFunction):
        return f.psi
    return np.asarray(f)
