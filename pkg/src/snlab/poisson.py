"""Free-space Poisson solves by zero-padded (domain-doubled) FFT convolution.

Two discrete kernels are available:

``"lattice"``
    the Green function of the 2nd-order finite-difference Laplacian on the
    infinite lattice, ``G(n) = int_0^inf prod_i exp(-2t) I_{n_i}(2t) dt``.  The
    resulting potential satisfies the discrete Poisson equation exactly (up to
    quadrature of ``G``) at every sampled node and decays like the continuum
    Green function ``C_d/|x|^(d-2)`` far from the source.
``"cell-averaged"``
    the continuum kernel sampled at node offsets, with the singular self-cell
    replaced by the kernel's average over one cell.
``"spectral"`` (d = 3)
    the kernel truncated beyond the box diameter, whose Fourier transform is
    smooth enough to sample on a 4x oversampled grid.  Gives spectral accuracy
    in the continuum sense for smooth sources.
"""

from __future__ import annotations

import functools
import math

import numpy as np
import scipy.fft as sfft
from scipy import integrate, special

from .errors import GridMismatchError, UnsupportedDimensionError
from .grid import GridSpec, PhysicalConstants, ScalarField, discrete_norm, grid_like, laplacian_array

KERNELS = ("lattice", "cell-averaged", "spectral")

# trapezoid nodes in y = log t for the lattice Green function integral
_Y_MIN, _Y_MAX, _Y_STEP = -38.0, 18.0, 0.1


def coulomb_constant(d: int) -> float:
    return PhysicalConstants(d=d).C_d


def _lattice_table(d: int, kmax: int) -> np.ndarray:
    """``G(k_1..k_d)`` for ``0 <= k_i <= kmax``, unit lattice spacing."""
    y = np.arange(_Y_MIN, _Y_MAX + _Y_STEP / 2, _Y_STEP)
    t = np.exp(y)
    k = np.arange(kmax + 1)
    T = special.ive(k[:, None], 2.0 * t[None, :])  # (kmax+1, ny)
    wts = t * _Y_STEP
    wts[0] *= 0.5
    wts[-1] *= 0.5
    # beyond y_max use the large-argument expansion of ive, integrated exactly
    mu = 4.0 * k.astype(float) ** 2
    a = (mu - 1) / 16
    b = (mu - 1) * (mu - 9) / 512
    A = sum(_axis_view(a, i, d) for i in range(d))
    B = sum(_axis_view(b, i, d) for i in range(d))
    for i in range(d):
        for j in range(i + 1, d):
            B = B + _axis_view(a, i, d) * _axis_view(a, j, d)
    T_end, p = t[-1], d / 2
    tail = (4 * np.pi) ** (-p) * (T_end ** (1 - p) / (p - 1) - A * T_end ** (-p) / p
                                  + B * T_end ** (-1 - p) / (p + 1))
    if d == 3:
        A = T * wts
        out = np.einsum("ay,by,cy->abc", A, T, T, optimize=True)
    else:
        out = T * wts
        for _ in range(d - 1):
            out = np.einsum("...y,by->...by", out, T)
        out = out.sum(axis=-1)
    # Euler-Maclaurin end correction: the integrand decays like t^(1-d/2) there
    end = t[-1]
    for i in range(d):
        end = end * _axis_view(T[:, -1], i, d)
    corr = _Y_STEP**2 / 12 * (p - 1) * end
    return out + tail + corr


def _axis_view(v, axis, d):
    shape = [1] * d
    shape[axis] = len(v)
    return v.reshape(shape)


def _cell_self_value(d: int) -> float:
    """Average of ``|u|^(2-d)`` over the unit cube centred at the origin."""
    a = (d - 2) / 2

    def f(t):
        if t == 0:
            return 0.0
        one = math.sqrt(math.pi / t) * math.erf(math.sqrt(t) / 2)
        return t ** (a - 1) * one**d

    val = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
    return val / math.gamma(a)


def _truncated_kernel(d: int, n: int) -> np.ndarray:
    """Continuum kernel cut off at the box diameter ``sqrt(d) n`` (unit spacing), doubled-grid layout."""
    if d != 3:
        raise UnsupportedDimensionError("the spectral kernel is implemented for d = 3 only")
    M = 4 * n
    R = math.sqrt(d) * n  # box diameter in cells
    k = 2 * np.pi * sfft.fftfreq(M)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
    kk = np.sqrt(k2)
    with np.errstate(divide="ignore", invalid="ignore"):
        Kh = 2.0 * np.sin(R * kk / 2) ** 2 / k2
    Kh[0, 0, 0] = R**2 / 2
    K = sfft.ifftn(Kh).real
    del Kh, k2, kk
    idx = np.mod(_offsets(n), M)
    return K[np.ix_(idx, idx, idx)]


def _offsets(n: int) -> np.ndarray:
    """Offsets of the doubled periodic axis of length ``2n`` in FFT order."""
    i = np.arange(2 * n)
    return np.where(i < n, i, i - 2 * n)


@functools.lru_cache(maxsize=16)
def kernel_values(d: int, n: int, kernel: str = "lattice") -> np.ndarray:
    """Dimensionless kernel on the doubled ``(2n)^d`` offset grid (FFT order).

    The physical kernel is ``h^(2-d)`` times this; the ``-n`` offsets, never used
    by a convolution restricted to the box, are zeroed.
    """
    if d <= 2:
        raise UnsupportedDimensionError(f"free-space kernel needs d > 2, got d={d}")
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    off = _offsets(n)
    if kernel == "spectral":
        K = _truncated_kernel(d, n)
    elif kernel == "lattice":
        table = _lattice_table(d, n)
        K = table[np.ix_(*([np.abs(off)] * d))]
    else:
        C = coulomb_constant(d)
        mesh = np.meshgrid(*([off.astype(float)] * d), indexing="ij")
        r2 = sum(m**2 for m in mesh)
        with np.errstate(divide="ignore"):
            K = C * r2 ** (-(d - 2) / 2)
        K[(0,) * d] = C * _cell_self_value(d)
    K = np.array(K, dtype=float)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = n
        K[tuple(sl)] = 0.0
    K.flags.writeable = False
    return K


@functools.lru_cache(maxsize=16)
def _kernel_hat(d: int, n: int, kernel: str) -> np.ndarray:
    out = sfft.rfftn(kernel_values(d, n, kernel))
    out.flags.writeable = False
    return out


def _check_dim(grid: GridSpec):
    if grid.dim <= 2:
        raise UnsupportedDimensionError(
            f"the decaying Green function needs d > 2, got d={grid.dim}")


def solve_free_poisson(source, grid: GridSpec, kernel: str = "lattice") -> np.ndarray:
    """Solution of ``Delta u = source`` that vanishes at infinity.

    ``source`` is supported on the box; the result is sampled on the same nodes.
    """
    _check_dim(grid)
    d, n, h = grid.dim, grid.points, grid.spacing
    src = np.asarray(source, dtype=float)
    padded = np.zeros((2 * n,) * d)
    padded[(slice(0, n),) * d] = src
    conv = sfft.irfftn(sfft.rfftn(padded) * _kernel_hat(d, n, kernel), s=padded.shape)
    return -(h**2) * conv[(slice(0, n),) * d]


def greens_potential(rho: ScalarField, pc: PhysicalConstants, kernel: str = "lattice") -> ScalarField:
    """Newtonian potential ``U`` with ``Delta U = 4 pi G rho`` and ``U -> 0`` at infinity."""
    if pc.d != rho.grid.dim:
        raise GridMismatchError("constants and density disagree on the dimension")
    _check_dim(rho.grid)
    vals = np.real(rho.values)
    if not np.any(vals):
        return ScalarField(rho.grid, np.zeros(rho.grid.shape))
    return ScalarField(rho.grid, solve_free_poisson(4 * np.pi * pc.G * vals, rho.grid, kernel))


def direct_sum(rho: ScalarField, pc: PhysicalConstants, kernel: str = "lattice",
               chunk: int = 256) -> ScalarField:
    """Same potential as ``greens_potential`` by explicit O(N^2) summation."""
    grid = rho.grid
    _check_dim(grid)
    d, n, h = grid.dim, grid.points, grid.spacing
    K = kernel_values(d, n, kernel)
    idx = np.indices(grid.shape).reshape(d, -1).T
    src = np.real(rho.values).ravel()
    nz = np.nonzero(src)[0]
    out = np.zeros(len(idx))
    for lo in range(0, len(idx), chunk):
        tgt = idx[lo:lo + chunk]
        diff = (tgt[:, None, :] - idx[None, nz, :]) % (2 * n)
        out[lo:lo + chunk] = K[tuple(np.moveaxis(diff, -1, 0))] @ src[nz]
    return ScalarField(grid, -4 * np.pi * pc.G * h**2 * out.reshape(grid.shape))


def box_interior(grid: GridSpec, margin: int = 1) -> np.ndarray:
    """Nodes at least ``margin`` cells from every face, ignoring periodicity."""
    return grid_like(grid, boundary="free").interior_mask(margin)


def poisson_residual(U: ScalarField, rho: ScalarField, pc: PhysicalConstants,
                     relative: bool = False, margin: int = 1) -> float:
    """Discrete L2 norm of ``Delta U - 4 pi G rho`` over interior nodes.

    The Laplacian is the 2nd-order central difference.  With ``relative`` the
    norm is divided by that of ``4 pi G rho`` (when nonzero).
    """
    if U.grid != rho.grid:
        raise GridMismatchError("U and rho live on different grids")
    grid = U.grid
    free = grid_like(grid, boundary="free")
    lap = laplacian_array(np.real(U.values), free, method="fd")
    src = 4 * np.pi * pc.G * np.real(rho.values)
    mask = box_interior(grid, margin)
    res = discrete_norm(lap - src, grid, mask)
    if relative:
        scale = discrete_norm(src, grid, mask)
        if scale > 0:
            return res / scale
    return res
