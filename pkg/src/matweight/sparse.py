"""Stopping-time machinery: heavy function, maximal-cube selections,
leveled families S^k and their disjoint cores E_Q.

Cores are unions of depth-K lattice cells, so every measure comparison
is exact integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dyadic import Cube, CubeFamily, midpoint_nodes
from .errors import ThresholdTooSmall
from .grid import GridFunction, cell_slice
from .kernels import _pyref
from .weight import (MatrixWeight, ap_characteristic, default_nodes,
                     reducing_pair)

__all__ = [
    "HeavyFunction",
    "SparseFamily",
    "heavy_function",
    "heavy_integral_check",
    "stopping_children",
    "stopping_family",
]


@dataclass(frozen=True)
class HeavyFunction:
    root: Cube
    samples: np.ndarray  # (2^m,)*d lattice of N_{Q,m} at cell midpoints
    q_exp: float
    weight_id: str
    depth: int


def heavy_function(w: MatrixWeight, root: Cube, q_exp: float, m: int,
                   p: Optional[float] = None,
                   quad: Optional[int] = None) -> HeavyFunction:
    """N_{Q,m}(x) = max over dyadic R (root >= R containing x, depth <= m)
    of ||W^{1/q}(x) V_R||, at midpoints of the depth-m cells."""
    p = p if p is not None else q_exp
    d = root.dim
    res = 1 << m
    X = midpoint_nodes(root, res)
    (Wq,), _ = w.powers_at(X, [1.0 / q_exp])
    out = np.zeros(len(X))
    for R in CubeFamily(root, m).enumerate():
        rng = cell_slice(root, res, R)
        idx = _cells_flat(rng, res, d)
        V = reducing_pair(w, R, p, q_exp, quad=quad).v
        vals = _pyref._sigma_max(Wq[idx] @ V)
        out[idx] = np.maximum(out[idx], vals)
    return HeavyFunction(root, out.reshape((res,) * d), q_exp,
                         w.weight_id, m)


def _cells_flat(rng, res: int, d: int) -> np.ndarray:
    axes = [np.arange(i0, i1) for i0, i1 in rng]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.ravel_multi_index([g.ravel() for g in grids], (res,) * d)


def heavy_integral_check(hf: HeavyFunction, char_value: float,
                         eps: float = 0.0) -> dict:
    """lhs = int_Q N^{q+eps}, rhs = |Q| * [W]_{A_{p,q}} (truncated value)."""
    d = hf.root.dim
    cellvol = (float(hf.root.side) / (1 << hf.depth)) ** d
    lhs = float(np.sum(hf.samples ** (hf.q_exp + eps)) * cellvol)
    rhs = float(hf.root.volume) * char_value
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs,
            "eps": eps, "depth": hf.depth}


def stopping_children(w: MatrixWeight, q: Cube, p: float, q_exp: float,
                      C: float, depth: int,
                      quad: Optional[int] = None) -> list[Cube]:
    """Maximal dyadic descendants R of q (to `depth`) with
    ||V_q^{-1} V_R|| > C; pairwise disjoint by maximality."""
    if C <= 1.0:
        raise ValueError("need C > 1")
    v_inv = np.linalg.inv(reducing_pair(w, q, p, q_exp, quad=quad).v)
    out: list[Cube] = []

    def recurse(r: Cube, lev: int):
        if lev > depth:
            return
        vr = reducing_pair(w, r, p, q_exp, quad=quad).v
        if np.linalg.norm(v_inv @ vr, ord=2) > C:
            out.append(r)
            return
        for ch in r.children():
            recurse(ch, lev + 1)

    for ch in q.children():
        recurse(ch, 1)
    return out


@dataclass
class SparseFamily:
    root: Cube
    resolution: int
    levels: dict  # k -> list[Cube]
    cores: dict  # Cube -> flat cell-index array at `resolution`
    base_threshold: float
    origin: str
    averages: dict = field(default_factory=dict)  # Cube -> m_P
    report: dict = field(default_factory=dict)

    def selected(self) -> list[Cube]:
        return [q for cubes in self.levels.values() for q in cubes]


def _cube_averages(w, f, root, p, depth, quad):
    """m_P = (1/|P|) int_P |V_P^{-1} W^{-1/p}(y) f(y)| dy for all P in the
    depth-`depth` family, via midpoint sums on f's lattice."""
    X = f.nodes()
    (Wmp,), _ = w.powers_at(X, [-1.0 / p])
    g = np.einsum("mij,mj->mi", Wmp, f.flat_values())
    res, d = f.resolution, f.dim
    averages, cells, parents = {}, {}, {root: None}
    level = [root]
    for lev in range(depth + 1):
        for P in level:
            idx = _cells_flat(cell_slice(root, res, P), res, d)
            vinv = np.linalg.inv(reducing_pair(w, P, p, p, quad=quad).v)
            averages[P] = float(
                np.mean(np.linalg.norm(g[idx] @ vinv.T, axis=1))
            )
            cells[P] = idx
        if lev < depth:
            nxt = []
            for P in level:
                for ch in P.children():
                    parents[ch] = P
                    nxt.append(ch)
            level = nxt
    return averages, cells, parents


def _select_levels(averages: dict, root: Cube, a: float, parents: dict):
    """S^k = cubes maximal w.r.t. m_P > a^k.  The root (no parent in the
    truncated family) is assigned only to its value level floor(log_a m)."""
    anc_max = {root: 0.0}
    order = sorted(averages, key=lambda c: -c.scale)
    for P in order:
        if P != root:
            par = parents[P]
            anc_max[P] = max(anc_max[par], averages[par])
    m_max = max(averages.values())
    if m_max <= 0.0:
        return {}, True

    def val_level(m):
        # the unique k with a^k < m <= a^(k+1)
        k = math.floor(math.log(m, a))
        if a**k >= m:
            k -= 1
        elif a ** (k + 1) < m:
            k += 1
        return k

    k_hi = val_level(m_max)
    k_root = val_level(averages[root]) if averages[root] > 0 else None
    k_lo = min(val_level(m) for m in averages.values() if m > 0)
    levels: dict[int, list] = {}
    seen: dict[Cube, int] = {}
    ok = True
    for k in range(k_lo, k_hi + 1):
        thresh = a**k
        sel = []
        for P in order:
            if averages[P] <= thresh:
                continue
            if P == root:
                if k == k_root:
                    sel.append(P)
                continue
            if anc_max[P] <= thresh:
                sel.append(P)
        if sel:
            for P in sel:
                if P in seen:
                    ok = False
                seen[P] = k
            levels[k] = sel
    return levels, ok


def stopping_family(w: MatrixWeight, f: GridFunction, root: Cube, p: float,
                    a: Optional[float] = None, depth: Optional[int] = None,
                    quad: Optional[int] = None) -> SparseFamily:
    """Leveled stopping-time family with exact lattice-cell cores.

    With a=None the threshold is auto-calibrated: start at the
    characteristic scaling [W]^{(1+p')/p} and double until the level
    disjointness and core-measure invariants pass.
    """
    res = f.resolution
    K = depth if depth is not None else int(math.log2(res))
    averages, cells, parents = _cube_averages(w, f, root, p, K, quad)

    auto = a is None
    if auto:
        pprime = p / (p - 1.0)
        char = ap_characteristic(
            w, p, CubeFamily(root, min(K, 4)), quad=4
        ).value
        a_try = max(2.0, char ** ((1.0 + pprime) / p))
    else:
        a_try = a

    trace = []
    for _ in range(64):
        levels, ok = _select_levels(averages, root, a_try, parents)
        cores, core_ok = _build_cores(levels, cells)
        trace.append({"a": a_try, "levels_ok": ok, "cores_ok": core_ok})
        if ok and core_ok:
            return SparseFamily(
                root, res, levels, cores, a_try,
                "stopping_time", averages,
                {"auto": auto, "trace": trace},
            )
        if not auto:
            raise ThresholdTooSmall(
                f"a={a_try} violates level disjointness or core measure"
            )
        a_try *= 2.0
    raise ThresholdTooSmall("auto calibration failed to find admissible a")


def _build_cores(levels: dict, cells: dict):
    selected = [q for cubes in levels.values() for q in cubes]
    cores = {}
    ok = True
    for Q in selected:
        inner = [
            R for R in selected
            if R is not Q and R.scale < Q.scale and Q.contains_cube(R)
        ]
        core = set(cells[Q].tolist())
        for R in inner:
            core -= set(cells[R].tolist())
        idx = np.array(sorted(core), dtype=int)
        cores[Q] = idx
        if 2 * len(idx) < len(cells[Q]):
            ok = False
    return cores, ok
