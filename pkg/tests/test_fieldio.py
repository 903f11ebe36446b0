import numpy as np
import pytest

from snlab import fieldio
from snlab.errors import InvalidFieldError, ShapeError
from snlab.grid import GridSpec, ScalarField, VectorField, WaveFunction, gaussian


@pytest.fixture
def grid():
    return GridSpec(2, 3.0, 8)


def test_wavefunction_round_trip(grid, tmp_path):
    wf = gaussian(grid, 0.8, momentum=[0.5, -0.2])
    path = fieldio.write_field(tmp_path / "psi.snlf", wf)
    back = fieldio.read_field(path, mass=wf.mass)
    assert isinstance(back, WaveFunction)
    assert back.grid == grid
    np.testing.assert_array_equal(back.psi, wf.psi)


def test_scalar_and_vector_round_trip(rng):
    grid = GridSpec(3, 2.0, 6, "free")
    s = ScalarField(grid, rng.normal(size=grid.shape))
    v = VectorField(grid, rng.normal(size=(3,) + grid.shape))
    s2 = fieldio.from_bytes(fieldio.to_bytes(s))
    v2 = fieldio.from_bytes(fieldio.to_bytes(v))
    assert isinstance(s2, ScalarField) and isinstance(v2, VectorField)
    assert s2.grid == grid and not s2.grid.periodic
    np.testing.assert_array_equal(s2.values, s.values)
    np.testing.assert_array_equal(v2.components, v.components)


def test_byte_layout(grid):
    data = fieldio.to_bytes(ScalarField(grid, np.zeros(grid.shape)))
    assert data[:4] == b"SNLF"
    assert len(data) == 4 + fieldio._HEADER.itemsize + 8 * 64


def test_corrupt_inputs(grid):
    data = fieldio.to_bytes(gaussian(grid, 1.0))
    with pytest.raises(InvalidFieldError, match="magic"):
        fieldio.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(InvalidFieldError, match="truncated"):
        fieldio.from_bytes(data[:10])
    with pytest.raises(ShapeError):
        fieldio.from_bytes(data[:-8])
    bad = bytearray(data)
    bad[4:8] = (7).to_bytes(4, "little")
    with pytest.raises(InvalidFieldError, match="version"):
        fieldio.from_bytes(bytes(bad))


def test_field_csv_columns(grid):
    wf = gaussian(grid, 1.0)
    text = fieldio.field_csv(wf)
    assert text.splitlines()[0] == "# snlab-csv-1"
    names, table = fieldio.read_csv_table(text)
    assert names == ["i0", "i1", "x0", "x1", "re", "im"]
    assert table.shape == (64, 6)
    np.testing.assert_allclose(table[:, 4] + 1j * table[:, 5], wf.psi.reshape(-1), rtol=0, atol=0)
    np.testing.assert_allclose(table[:, 2:4], grid.nodes())
    names, _ = fieldio.read_csv_table(fieldio.field_csv(ScalarField(grid, np.ones(grid.shape))))
    assert names[-1] == "value"


def test_trajectory_csv():
    from snlab.grid import PhysicalConstants
    from snlab.solver import SolverConfig, evolve

    grid = GridSpec(1, 5.0, 16)
    pc = PhysicalConstants(1.0, 0.0, 1)
    traj = evolve(gaussian(grid, 1.0), SolverConfig(dt=0.01, steps=3, constants=pc))
    names, table = fieldio.read_csv_table(fieldio.trajectory_csv(traj))
    assert names == ["t", "x", "density", "U"]
    assert table.shape == (4 * 16, 4)
    np.testing.assert_allclose(np.unique(table[:, 0]), traj.times)
