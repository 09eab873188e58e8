"""Lattice-sampled functions over a base cube, with midpoint quadrature.

GridFunction stores C^n vector fields (or n x d matrix fields, e.g.
Jacobians) on a regular 2^r lattice; the MATW1 binary format and a JSON
form are provided for interchange.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .dyadic import Cube, midpoint_nodes
from .errors import ResolutionTooLow

__all__ = ["GridFunction", "cell_slice", "write_matw1", "read_matw1"]

_MAGIC = b"MATW1"


@dataclass
class GridFunction:
    base: Cube
    resolution: int
    values: np.ndarray  # (res,)*d + (n,)  or  (res,)*d + (n, d)
    codomain: str = "vector"

    def __post_init__(self):
        d = self.base.dim
        if self.resolution & (self.resolution - 1):
            raise ValueError("resolution must be a power of two")
        expect = (self.resolution,) * d
        if self.values.shape[:d] != expect:
            raise ValueError(
                f"values shape {self.values.shape} does not match lattice {expect}"
            )
        if self.codomain not in ("vector", "matrix"):
            raise ValueError("codomain must be 'vector' or 'matrix'")

    # -- geometry ----------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def n(self) -> int:
        return self.values.shape[self.dim]

    @property
    def cell_width(self) -> float:
        return float(self.base.side) / self.resolution

    @property
    def cell_volume(self) -> float:
        return self.cell_width**self.dim

    def nodes(self) -> np.ndarray:
        """Cell midpoints, shape (res^d, d), matching flat_values order."""
        return midpoint_nodes(self.base, self.resolution)

    def flat_values(self) -> np.ndarray:
        return self.values.reshape((-1,) + self.values.shape[self.dim :])

    # -- algebra -----------------------------------------------------------

    def copy_with(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.base, self.resolution, values, self.codomain)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return self.copy_with(self.values + other.values)

    def __mul__(self, c) -> "GridFunction":
        return self.copy_with(self.values * c)

    __rmul__ = __mul__

    # -- quadrature --------------------------------------------------------

    def lp_norm(self, p: float) -> float:
        """Midpoint-rule L^p norm of the pointwise Euclidean magnitude."""
        mag = np.linalg.norm(
            self.flat_values().reshape(len(self.nodes()), -1), axis=1
        )
        return float((np.sum(mag**p) * self.cell_volume) ** (1.0 / p))

    def weighted_lp_norm(self, p: float, w, power: float) -> float:
        """L^p norm of |W^power(x) f(x)| (vector) or ||W^power Df||_op (matrix)."""
        X = self.nodes()
        (Ws,), _ = w.powers_at(X, [power])
        F = self.flat_values()
        if self.codomain == "vector":
            mag = np.linalg.norm(
                np.einsum("mij,mj->mi", Ws, F), axis=1
            )
        else:
            prod = np.einsum("mij,mjk->mik", Ws, F)
            mag = np.linalg.norm(prod, ord=2, axis=(1, 2))
        return float((np.sum(mag**p) * self.cell_volume) ** (1.0 / p))

    def mean(self) -> np.ndarray:
        return self.flat_values().mean(axis=0)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_callable(
        cls,
        base: Cube,
        resolution: int,
        fn: Callable[[np.ndarray], np.ndarray],
        codomain: str = "vector",
    ) -> "GridFunction":
        """Sample fn on the lattice; fn maps (M, d) points to (M, ...) values."""
        X = midpoint_nodes(base, resolution)
        vals = np.asarray(fn(X))
        if vals.ndim == 1:
            vals = vals[:, None]
        shape = (resolution,) * base.dim + vals.shape[1:]
        return cls(base, resolution, vals.reshape(shape), codomain)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "base": json.loads(self.base.to_json()),
                "resolution": self.resolution,
                "codomain": self.codomain,
                "shape": list(self.values.shape),
                "values": np.asarray(self.values, dtype=float)
                .ravel()
                .tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        d = json.loads(text)
        base = Cube.from_json(json.dumps(d["base"]))
        vals = np.array(d["values"], dtype=float).reshape(d["shape"])
        return cls(base, d["resolution"], vals, d["codomain"])


def cell_slice(base: Cube, resolution: int, cube: Cube):
    """Per-axis index ranges of lattice cells whose centers lie in `cube`.

    Exact rational arithmetic; clipped to the lattice.  Returns a list of
    (i0, i1) half-open ranges, or None if the intersection is empty.
    """
    h = base.side / resolution
    out = []
    for ax in range(base.dim):
        # center b.low + (i + 1/2) h in [cube.low, cube.high)
        lo = (cube.low[ax] - base.low[ax]) / h - Fraction(1, 2)
        hi = (cube.high[ax] - base.low[ax]) / h - Fraction(1, 2)
        i0 = max(0, _ceil_frac(lo))
        i1 = min(resolution, _ceil_frac(hi))
        if i1 <= i0:
            return None
        out.append((i0, i1))
    return out


def _ceil_frac(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def write_matw1(path, array: np.ndarray, n: int, d: int, dims) -> None:
    """MATW1 binary lattice: magic, n, d, dims, then row-major float64."""
    arr = np.ascontiguousarray(array, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(struct.pack(f"<{d}I", *dims))
        fh.write(arr.tobytes())


def read_matw1(path):
    """Returns (data, n, d, dims); trailing shape inferred from the payload."""
    with open(path, "rb") as fh:
        if fh.read(5) != _MAGIC:
            raise ValueError("not a MATW1 file")
        n, d = struct.unpack("<II", fh.read(8))
        dims = struct.unpack(f"<{d}I", fh.read(4 * d))
        data = np.frombuffer(fh.read(), dtype=np.float64)
    sites = int(np.prod(dims))
    per = data.size // sites
    if per * sites != data.size:
        raise ValueError("MATW1 payload does not tile the lattice")
    return data.reshape(dims + (per,)), n, d, dims
