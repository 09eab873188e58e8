"""GridFunction lattice semantics, quadrature, and serialization."""

import numpy as np
import pytest

from matweight.dyadic import Cube
from matweight.grid import GridFunction, cell_slice, read_matw1, write_matw1
from matweight.weight import MatrixWeight


def test_resolution_must_be_power_of_two():
    with pytest.raises(ValueError):
        GridFunction(Cube.unit(1), 3, np.zeros((3, 1)))


def test_from_callable_shapes():
    f = GridFunction.from_callable(
        Cube.unit(2), 8, lambda X: np.stack([X[:, 0], X[:, 1]], axis=1)
    )
    assert f.values.shape == (8, 8, 2)
    assert f.n == 2
    assert f.dim == 2
    assert np.allclose(f.nodes()[0], [1 / 16, 1 / 16])


def test_lp_norm_constant_exact():
    f = GridFunction.from_callable(
        Cube.box([-1.0], 1), 16, lambda X: np.full((len(X), 1), 3.0)
    )
    # ||3||_{L^2([-1,1))} = 3 sqrt(2)
    assert np.isclose(f.lp_norm(2.0), 3.0 * np.sqrt(2.0))
    assert np.isclose(f.lp_norm(1.0), 6.0)


def test_lp_norm_midpoint_linear():
    f = GridFunction.from_callable(
        Cube.unit(1), 2**10, lambda X: X[:, 0:1]
    )
    assert np.isclose(f.lp_norm(2.0), 1.0 / np.sqrt(3.0), atol=1e-6)


def test_weighted_lp_norm_identity_weight_matches_plain():
    w = MatrixWeight("constant", 1, 2, matrix=np.eye(2))
    f = GridFunction.from_callable(
        Cube.unit(1), 64,
        lambda X: np.stack([np.sin(X[:, 0]), np.cos(X[:, 0])], axis=1),
    )
    assert np.isclose(f.weighted_lp_norm(2.0, w, 0.5), f.lp_norm(2.0))


def test_mean_and_algebra():
    f = GridFunction.from_callable(Cube.unit(1), 8, lambda X: X[:, 0:1])
    g = 2.0 * f + f
    assert np.allclose(g.values, 3.0 * f.values)
    assert np.isclose(f.mean()[0], 0.5)


def test_cell_slice_exact_subcube():
    base = Cube.box([-1.0], 1)
    res = 16
    q = base.children()[0]  # [-1, 0)
    (rng,) = cell_slice(base, res, q)
    assert rng == (0, 8)
    # a cube that misses the lattice entirely
    outside = Cube.box([4.0], 0)
    assert cell_slice(base, res, outside) is None


def test_cell_slice_2d_quarter():
    base = Cube.unit(2)
    q = Cube((1, 0), -1, 2)  # [1/2,1) x [0,1/2)
    r0, r1 = cell_slice(base, 8, q)
    assert r0 == (4, 8)
    assert r1 == (0, 4)


def test_json_roundtrip():
    f = GridFunction.from_callable(
        Cube.box([-1.0, -1.0], 1), 4,
        lambda X: np.stack([X[:, 0] * X[:, 1], X[:, 0]], axis=1),
    )
    g = GridFunction.from_json(f.to_json())
    assert g.base == f.base
    assert g.resolution == f.resolution
    assert np.allclose(g.values, f.values)


def test_matw1_roundtrip(tmp_path):
    arr = np.arange(2 * 8 * 8, dtype=float).reshape(8, 8, 2)
    path = tmp_path / "field.matw1"
    write_matw1(path, arr, 2, 2, (8, 8))
    data, n, d, dims = read_matw1(path)
    assert (n, d, dims) == (2, 2, (8, 8))
    assert np.array_equal(data.reshape(arr.shape), arr)


def test_matw1_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.matw1"
    path.write_bytes(b"NOPE1" + b"\x00" * 32)
    with pytest.raises(ValueError):
        read_matw1(path)
