"""Binary and CSV serialisation of grid fields and trajectories.

Binary layout (little-endian): the magic ``b"SNLF"``, a fixed header
``(version u4, dim i4, n i4, L f8, boundary i4, components i4, complex i4)`` with
boundary 0 = periodic and 1 = free, then the values as row-major float64, one
block per component (real and imaginary parts as separate blocks).
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InvalidFieldError, ShapeError
from .grid import GridSpec, ScalarField, VectorField, WaveFunction

MAGIC = b"SNLF"
VERSION = 1
CSV_VERSION = "snlab-csv-1"
_HEADER = np.dtype([("version", "<u4"), ("dim", "<i4"), ("n", "<i4"), ("L", "<f8"),
                    ("boundary", "<i4"), ("components", "<i4"), ("complex", "<i4")])

PathLike = Union[str, Path]


def _blocks(field):
    if isinstance(field, WaveFunction):
        return field.grid, np.asarray(field.psi)[None], True
    if isinstance(field, VectorField):
        return field.grid, np.asarray(field.components, float), False
    if isinstance(field, ScalarField):
        vals = np.asarray(field.values)
        cplx = np.iscomplexobj(vals)
        return field.grid, vals[None], cplx
    raise InvalidFieldError(f"cannot serialise {type(field).__name__}")


def to_bytes(field) -> bytes:
    grid, comps, cplx = _blocks(field)
    head = np.zeros((), _HEADER)
    head["version"], head["dim"], head["n"] = VERSION, grid.dim, grid.points
    head["L"] = grid.extent
    head["boundary"] = 0 if grid.periodic else 1
    head["components"] = comps.shape[0]
    head["complex"] = int(cplx)
    parts = [MAGIC, head.tobytes()]
    for c in comps:
        if cplx:
            parts += [np.ascontiguousarray(c.real, "<f8").tobytes(),
                      np.ascontiguousarray(c.imag, "<f8").tobytes()]
        else:
            parts.append(np.ascontiguousarray(np.real(c), "<f8").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes, mass: float = 1.0, time: float = 0.0):
    """Inverse of :func:`to_bytes`.  Complex single-component data returns a WaveFunction."""
    if data[:4] != MAGIC:
        raise InvalidFieldError("not an snlab field file (bad magic)")
    off = 4 + _HEADER.itemsize
    if len(data) < off:
        raise InvalidFieldError("truncated header")
    head = np.frombuffer(data[4:off], _HEADER)[0]
    if int(head["version"]) != VERSION:
        raise InvalidFieldError(f"unsupported field version {int(head['version'])}")
    grid = GridSpec(int(head["dim"]), float(head["L"]), int(head["n"]),
                    "periodic" if int(head["boundary"]) == 0 else "free")
    ncomp, cplx = int(head["components"]), bool(head["complex"])
    count = grid.points**grid.dim
    blocks = ncomp * (2 if cplx else 1)
    if len(data) != off + 8 * count * blocks:
        raise ShapeError(f"payload has {len(data) - off} bytes, expected {8 * count * blocks}")
    vals = np.frombuffer(data[off:], "<f8").reshape((blocks,) + grid.shape).astype(float)
    if cplx:
        vals = vals[0::2] + 1j * vals[1::2]
    if ncomp == 1 and cplx:
        return WaveFunction(grid, vals[0], mass, time)
    if ncomp == 1:
        return ScalarField(grid, vals[0])
    return VectorField(grid, vals)


def write_field(path: PathLike, field) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(field))
    return path


def read_field(path: PathLike, **kw):
    return from_bytes(Path(path).read_bytes(), **kw)


def field_csv(field) -> str:
    """Index columns ``i0..``, coordinate columns ``x0..`` and value columns."""
    grid, comps, cplx = _blocks(field)
    d = grid.dim
    names = [f"i{a}" for a in range(d)] + [f"x{a}" for a in range(d)]
    if cplx:
        for c in range(len(comps)):
            names += [f"re{c}", f"im{c}"] if len(comps) > 1 else ["re", "im"]
    else:
        names += [f"v{c}" for c in range(len(comps))] if len(comps) > 1 else ["value"]
    idx = np.indices(grid.shape).reshape(d, -1).T
    x = grid.nodes()
    cols = [idx, x]
    for c in comps:
        flat = c.reshape(-1)
        cols.append(np.stack([flat.real, flat.imag], 1) if cplx else flat.real[:, None])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"# {CSV_VERSION}"])
    w.writerow(names)
    table = np.hstack([np.asarray(c, float) for c in cols])
    for row, ij in zip(table, idx):
        w.writerow([str(int(v)) for v in ij] + [repr(float(v)) for v in row[d:]])
    return buf.getvalue()


def trajectory_csv(traj, axis: int = 0) -> str:
    """Rows ``(t, x, |psi|^2, U)`` along one axis through the box centre, every recorded time."""
    grid = traj.grid
    mid = grid.points // 2
    sl = [mid] * grid.dim
    sl[axis] = slice(None)
    sl = tuple(sl)
    x = grid.axis
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"# {CSV_VERSION}"])
    w.writerow(["t", "x", "density", "U"])
    for t, wf, U in zip(traj.times, traj.states, traj.potentials):
        dens = np.abs(wf.psi[sl]) ** 2
        for xi, di, ui in zip(x, dens, np.asarray(U.values)[sl]):
            w.writerow([repr(float(t)), repr(float(xi)), repr(float(di)), repr(float(ui))])
    return buf.getvalue()


def read_csv_table(text: str):
    """Header names and a float array from CSV produced here."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])
