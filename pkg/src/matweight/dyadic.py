"""Dyadic cubes, shifted dyadic grids, and truncated cube families.

A cube in the grid with shift t in {0, 1/3}^d at scale k is

    2^k * ([0,1)^d + m + (-1)^k * t),   m integer lattice index.

The (-1)^k alternation of the shift keeps every grid nested: the children
of a cube of scale k are cubes of scale k-1 *in the same grid*, with
integer index arithmetic (see :meth:`Cube.children`).  Coordinates are
exact `fractions.Fraction` values, so containment tests never suffer
float rounding at deep scales.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

__all__ = ["Cube", "CubeFamily", "shifted_cover", "midpoint_nodes"]

_THIRD = Fraction(1, 3)


def _sign(scale: int) -> int:
    return -1 if scale & 1 else 1


@dataclass(frozen=True)
class Cube:
    """Axis-parallel cube with exact dyadic-rational geometry."""

    corner: tuple[int, ...]
    scale: int
    dim: int
    shift: tuple[int, ...] = ()  # per-axis flag, 1 means shift 1/3
    # Grid members have corner_scale == scale (low = 2^scale * corner).
    # Off-grid base cubes such as [-1,1)^d express the corner on a finer
    # lattice: low = 2^corner_scale * corner, with shift forced to 0.
    corner_scale: int = None  # type: ignore[assignment]

    def __post_init__(self):
        if not self.shift:
            object.__setattr__(self, "shift", (0,) * self.dim)
        if len(self.corner) != self.dim or len(self.shift) != self.dim:
            raise ValueError("corner/shift length must equal dim")
        cs = self.corner_scale
        if cs is None:
            cs = self.scale
        if cs > self.scale:
            raise ValueError("corner_scale cannot exceed scale")
        # canonical form: coarsest lattice that holds the corner
        corner = self.corner
        while cs < self.scale and all(c % 2 == 0 for c in corner):
            corner = tuple(c // 2 for c in corner)
            cs += 1
        if cs != self.scale and any(self.shift):
            raise ValueError("shifted cubes must be grid members")
        object.__setattr__(self, "corner", corner)
        object.__setattr__(self, "corner_scale", cs)

    # -- geometry ----------------------------------------------------------

    @property
    def side(self) -> Fraction:
        return Fraction(2) ** self.scale

    @property
    def volume(self) -> Fraction:
        return Fraction(2) ** (self.scale * self.dim)

    @property
    def low(self) -> tuple[Fraction, ...]:
        unit = Fraction(2) ** self.corner_scale
        s = _sign(self.scale)
        return tuple(
            unit * m + self.side * s * t * _THIRD
            for m, t in zip(self.corner, self.shift)
        )

    @property
    def high(self) -> tuple[Fraction, ...]:
        return tuple(a + self.side for a in self.low)

    @property
    def center(self) -> tuple[Fraction, ...]:
        h = self.side / 2
        return tuple(a + h for a in self.low)

    def contains_point(self, x: Sequence) -> bool:
        # Fraction(float) is the exact binary rational, so this is exact.
        return all(
            lo <= Fraction(xi) < hi
            for lo, hi, xi in zip(self.low, self.high, x)
        )

    def contains_point_f(self, x: Sequence[float]) -> bool:
        """Float containment (half-open), for quadrature-node bookkeeping."""
        return all(
            float(lo) <= xi < float(hi)
            for lo, hi, xi in zip(self.low, self.high, x)
        )

    def contains_cube(self, other: "Cube") -> bool:
        return all(
            slo <= olo and ohi <= shi
            for slo, shi, olo, ohi in zip(
                self.low, self.high, other.low, other.high
            )
        )

    def intersects(self, other: "Cube") -> bool:
        return all(
            olo < shi and slo < ohi
            for slo, shi, olo, ohi in zip(
                self.low, self.high, other.low, other.high
            )
        )

    # -- grid structure ----------------------------------------------------

    def children(self) -> list["Cube"]:
        """The 2^d scale-(k-1) cubes tiling this cube (same grid for grid
        members; bisection of the coordinate box otherwise)."""
        if self.corner_scale == self.scale:
            s = _sign(self.scale)
            base = tuple(
                2 * m + s * t for m, t in zip(self.corner, self.shift)
            )
            out = []
            for c in itertools.product((0, 1), repeat=self.dim):
                corner = tuple(b + ci for b, ci in zip(base, c))
                out.append(
                    Cube(corner, self.scale - 1, self.dim, self.shift)
                )
            return out
        cs = min(self.corner_scale, self.scale - 1)
        base = tuple(m << (self.corner_scale - cs) for m in self.corner)
        half = 1 << (self.scale - 1 - cs)
        out = []
        for c in itertools.product((0, 1), repeat=self.dim):
            corner = tuple(b + ci * half for b, ci in zip(base, c))
            out.append(
                Cube(corner, self.scale - 1, self.dim,
                     corner_scale=cs)
            )
        return out

    def parent(self) -> "Cube":
        if self.corner_scale != self.scale:
            raise ValueError("parent is defined for grid members only")
        sp = _sign(self.scale + 1)
        corner = tuple(
            (m - sp * t) >> 1 for m, t in zip(self.corner, self.shift)
        )
        return Cube(corner, self.scale + 1, self.dim, self.shift)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        d = {
            "corner": list(self.corner),
            "scale": self.scale,
            "dim": self.dim,
            "shift": list(self.shift),
        }
        if self.corner_scale != self.scale:
            d["corner_scale"] = self.corner_scale
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "Cube":
        d = json.loads(text)
        return cls(
            tuple(d["corner"]), d["scale"], d["dim"], tuple(d["shift"]),
            corner_scale=d.get("corner_scale"),
        )

    @classmethod
    def box(cls, low, scale: int) -> "Cube":
        """Cube with exact low corner `low` (dyadic rationals) and side 2^scale."""
        lows = [Fraction(x) for x in low]
        cs = scale
        for x in lows:
            while (x / Fraction(2) ** cs).denominator != 1:
                cs -= 1
                if cs < scale - 62:
                    raise ValueError("corner is not a dyadic rational")
        corner = tuple(int(x / Fraction(2) ** cs) for x in lows)
        return cls(corner, scale, len(lows), corner_scale=cs)

    @classmethod
    def unit(cls, dim: int) -> "Cube":
        return cls((0,) * dim, 0, dim)

    def __repr__(self):
        lo = ", ".join(str(a) for a in self.low)
        return f"Cube(low=[{lo}], side={self.side}, dim={self.dim})"


@dataclass(frozen=True)
class CubeFamily:
    """All dyadic descendants of `base` down to depth `max_depth`."""

    base: Cube
    max_depth: int

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def __len__(self) -> int:
        d = self.base.dim
        return sum(2 ** (j * d) for j in range(self.max_depth + 1))

    def enumerate(self) -> Iterator[Cube]:
        """Every member exactly once, coarse-to-fine."""
        level = [self.base]
        for depth in range(self.max_depth + 1):
            yield from level
            if depth < self.max_depth:
                level = [c for q in level for c in q.children()]

    def at_depth(self, depth: int) -> list[Cube]:
        level = [self.base]
        for _ in range(depth):
            level = [c for q in level for c in q.children()]
        return level

    def descriptor(self) -> dict:
        return {
            "base": json.loads(self.base.to_json()),
            "max_depth": self.max_depth,
        }


def shifted_cover(q) -> tuple[tuple[int, ...], Cube]:
    """Find (t, Q_t) with Q_t in the shift-t grid, q subset Q_t, l(Q_t) <= 6 l(q).

    `q` is a Cube or a pair (low, side) with exact or float coordinates.
    """
    if isinstance(q, Cube):
        low, side, dim = q.low, q.side, q.dim
    else:
        low, side = q
        low = tuple(Fraction(x) for x in low)
        side = Fraction(side)
        dim = len(low)

    s_min = math.ceil(math.log2(side))
    high = tuple(a + side for a in low)
    for s in range(s_min, s_min + 4):
        if Fraction(2) ** s > 6 * side:
            break
        step = Fraction(2) ** s
        sg = _sign(s)
        for shift in itertools.product((0, 1), repeat=dim):
            corner = tuple(
                math.floor(lo / step - sg * t * _THIRD)
                for lo, t in zip(low, shift)
            )
            cand = Cube(corner, s, dim, shift)
            if all(h <= ch for h, ch in zip(high, cand.high)) and all(
                cl <= lo for cl, lo in zip(cand.low, low)
            ):
                return shift, cand
    raise AssertionError("no shifted dyadic cover found within factor 6")


def midpoint_nodes(cube: Cube, per_axis: int) -> np.ndarray:
    """Tensor midpoint nodes, shape (per_axis^d, d), float64.

    Nodes are midpoints of the per_axis^d congruent subcells; for dyadic
    per_axis they never lie on lattice hyperplanes, which keeps power
    weights off their singular sets.
    """
    lo = np.array([float(a) for a in cube.low])
    h = float(cube.side) / per_axis
    axes = [lo[i] + h * (np.arange(per_axis) + 0.5) for i in range(cube.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)
