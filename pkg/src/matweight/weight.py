"""Matrix weights, fractional powers, reducing operators, characteristics.

A matrix weight is an a.e. positive-definite symmetric n x n matrix
function on R^d.  Supported kinds:

* ``constant``      -- one PSD matrix;
* ``power_radial``  -- W_ij(x) = a_ij |x|^{gamma_ij};
* ``power_axis``    -- W_ij(x) = a_ij prod_k |x_k|^{gamma^k_ij};
* ``sampled``       -- piecewise-constant on a lattice over a base cube.

Characteristics are suprema over a truncated CubeFamily of the two-layer
averages; every Characteristic records the family and quadrature that
produced it so values are reproducible bit-for-bit.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .dyadic import Cube, CubeFamily, midpoint_nodes
from .errors import NotSymmetric, QuadratureFailure, SingularPoint

__all__ = [
    "MatrixWeight",
    "ReducingPair",
    "Characteristic",
    "matrix_power",
    "average_weight",
    "reducing_pair",
    "ap_characteristic",
    "apq_characteristic",
    "apq_lattice",
    "a2_trace",
    "dual_weight",
    "blm_is_a2",
    "probe_directions",
    "default_nodes",
]

EIG_FLOOR_REL = 1e-12
SYM_TOL = 1e-9


def default_nodes(d: int) -> int:
    """Default midpoint nodes per axis per cube (2^4 for d<=2, 2^3 for d=3)."""
    return 16 if d <= 2 else 8


class MatrixWeight:
    """Matrix weight on R^d; immutable after construction."""

    def __init__(self, kind, d, n, *, matrix=None, gamma=None,
                 base=None, values=None, weight_id=None):
        self.kind = kind
        self.d = int(d)
        self.n = int(n)
        self.weight_id = weight_id or f"{kind}-{d}d-{n}n"
        if kind == "constant":
            self.matrix = _check_sym(np.asarray(matrix, dtype=float))
        elif kind == "power_radial":
            self.matrix = _check_sym(np.asarray(matrix, dtype=float))
            self.gamma = _check_sym(np.asarray(gamma, dtype=float))
        elif kind == "power_axis":
            self.matrix = _check_sym(np.asarray(matrix, dtype=float))
            g = np.asarray(gamma, dtype=float)
            if g.shape != (d, n, n):
                raise ValueError("power_axis gamma must have shape (d, n, n)")
            for k in range(d):
                _check_sym(g[k])
            self.gamma = g
        elif kind == "sampled":
            self.base = base
            v = np.asarray(values, dtype=float)
            if v.shape[-2:] != (n, n):
                raise ValueError("sampled values must end in (n, n)")
            asym = np.max(np.abs(v - np.swapaxes(v, -1, -2)))
            if asym > SYM_TOL * max(1.0, np.max(np.abs(v))):
                raise NotSymmetric(
                    f"sampled weight asymmetry {asym:.2e} exceeds {SYM_TOL}"
                )
            self.values = 0.5 * (v + np.swapaxes(v, -1, -2))
            self.resolution = v.shape[0]
        else:
            raise ValueError(f"unknown weight kind {kind!r}")

    # -- evaluation --------------------------------------------------------

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Raw symmetric matrices at points X (M, d); may be indefinite for
        invalid power exponents (flooring happens in powers_at)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        M = X.shape[0]
        if self.kind == "constant":
            return np.broadcast_to(self.matrix, (M, self.n, self.n)).copy()
        if self.kind == "power_radial":
            r = np.linalg.norm(X, axis=1)
            if np.any((r == 0.0) & np.any(self.gamma != 0.0)):
                raise SingularPoint("power_radial evaluated at the origin")
            return self.matrix * np.power(
                r[:, None, None], self.gamma[None, :, :]
            )
        if self.kind == "power_axis":
            out = np.broadcast_to(
                self.matrix, (M, self.n, self.n)
            ).astype(float).copy()
            for k in range(self.d):
                a = np.abs(X[:, k])
                if np.any((a == 0.0) & np.any(self.gamma[k] != 0.0)):
                    raise SingularPoint(
                        f"power_axis evaluated on the axis x_{k}=0"
                    )
                out *= np.power(a[:, None, None], self.gamma[k][None])
            return out
        # sampled: piecewise constant on lattice cells
        lo = np.array([float(a) for a in self.base.low])
        h = float(self.base.side) / self.resolution
        idx = np.floor((X - lo) / h).astype(int)
        idx = np.clip(idx, 0, self.resolution - 1)
        flat = self.values.reshape((-1, self.n, self.n))
        lin = np.zeros(len(X), dtype=int)
        for k in range(self.d):
            lin = lin * self.resolution + idx[:, k]
        return flat[lin]

    def evaluate(self, x) -> np.ndarray:
        """PSD matrix at a single point (eigenvalues floored)."""
        m, _ = floor_psd(self.evaluate_many(np.asarray(x, float)[None]))
        return m[0]

    def powers_at(self, X: np.ndarray, exponents) -> tuple[list, np.ndarray]:
        """Fractional powers W(x)^s for each s, one eigendecomposition.

        Returns ([stack_per_exponent], flags) where flags marks points at
        which the raw matrix needed flooring to become positive definite.
        """
        raw = self.evaluate_many(X)
        ev, U = np.linalg.eigh(raw)
        top = np.maximum(ev[:, -1], 0.0)
        floor = np.maximum(EIG_FLOOR_REL * top, np.finfo(float).tiny)
        flags = ev[:, 0] < floor
        evc = np.maximum(ev, floor[:, None])
        out = []
        for s in exponents:
            lam = evc**s
            out.append(np.einsum("mij,mj,mkj->mik", U, lam, U))
        return out, flags

    def to_spec(self) -> dict:
        d = {"kind": self.kind, "n": self.n, "d": self.d,
             "weight_id": self.weight_id}
        if self.kind in ("constant", "power_radial", "power_axis"):
            d["matrix"] = self.matrix.ravel().tolist()
        if self.kind == "power_radial":
            d["gamma"] = self.gamma.ravel().tolist()
        if self.kind == "power_axis":
            d["gamma"] = self.gamma.ravel().tolist()
        return d


def _check_sym(m: np.ndarray) -> np.ndarray:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if np.max(np.abs(m - m.T)) > SYM_TOL * max(1.0, np.max(np.abs(m))):
        raise NotSymmetric("matrix is not symmetric")
    return 0.5 * (m + m.T)


def floor_psd(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clip eigenvalues to the relative floor; flag matrices that needed it."""
    ev, U = np.linalg.eigh(mats)
    top = np.maximum(ev[..., -1], 0.0)
    floor = np.maximum(EIG_FLOOR_REL * top, np.finfo(float).tiny)
    flags = ev[..., 0] < floor
    evc = np.maximum(ev, floor[..., None])
    return np.einsum("...ij,...j,...kj->...ik", U, evc, U), flags


def matrix_power(m: np.ndarray, s: float) -> np.ndarray:
    """m**s via eigendecomposition; eigenvalues floored at 1e-12 * max."""
    m = _check_sym(np.asarray(m, dtype=float))
    ev, U = np.linalg.eigh(m)
    floor = max(EIG_FLOOR_REL * max(ev[-1], 0.0), np.finfo(float).tiny)
    ev = np.maximum(ev, floor)
    return (U * ev**s) @ U.T


def average_weight(w: MatrixWeight, q: Cube, power: float = 1.0,
                   quad: Optional[int] = None) -> np.ndarray:
    """(1/|Q|) integral of W(x)^power by the tensor midpoint rule."""
    m = quad or default_nodes(q.dim)
    X = midpoint_nodes(q, m)
    (mats,), _ = w.powers_at(X, [power])
    out = mats.mean(axis=0)
    if not np.all(np.isfinite(out)):
        raise QuadratureFailure(f"non-finite average on {q}")
    return out


# -- reducing operators ----------------------------------------------------

@dataclass(frozen=True)
class ReducingPair:
    v: np.ndarray
    v_prime: np.ndarray
    cube: Cube
    exponents: tuple[float, float]
    equivalence_slack: float


def probe_directions(n: int, count: Optional[int] = None) -> np.ndarray:
    """Fixed quasi-uniform unit directions (default 2 n^2), deterministic."""
    if n == 1:
        return np.array([[1.0]])
    count = count or 2 * n * n
    rng = np.random.Generator(np.random.Philox(key=0))
    dirs = [np.eye(n)[i] for i in range(n)]
    while len(dirs) < count:
        v = rng.normal(size=n)
        v /= np.linalg.norm(v)
        dirs.append(v)
    return np.array(dirs[:count])


def mvee_symmetric(points: np.ndarray, tol: float = 1e-10,
                   limit: int = 2000) -> np.ndarray:
    """Shape matrix A of the minimum-volume origin-centered ellipsoid
    {x : x^T A x <= 1} enclosing the symmetric point set {+-points}.

    Khachiyan's barycentric coordinate ascent, symmetric variant.
    """
    P = np.asarray(points, dtype=float)
    N, m = P.shape
    u = np.full(N, 1.0 / N)
    for _ in range(limit):
        X = (P.T * u) @ P
        Xi = np.linalg.inv(X)
        M = np.einsum("ij,jk,ik->i", P, Xi, P)
        j = int(np.argmax(M))
        step = (M[j] - m) / (m * (M[j] - 1.0))
        if step <= tol:
            break
        u *= 1.0 - step
        u[j] += step
    X = (P.T * u) @ P
    return np.linalg.inv(X) / m


def _rho_fit(mats: np.ndarray, r: float, n: int) -> tuple[np.ndarray, float]:
    """PSD matrix V with |V e| ~ rho(e) = (mean_j |mats_j e|^r)^{1/r}.

    Exact for r=2 / n=1; otherwise the inscribed-ellipsoid fit of the
    rho unit ball on the fixed probe set.  Returns (V, measured slack).
    """
    if n == 1:
        rho = float(np.mean(np.abs(mats[:, 0, 0]) ** r) ** (1.0 / r))
        return np.array([[rho]]), 1.0
    if r == 2:
        S = np.einsum("mki,mkj->ij", mats, mats) / mats.shape[0]
        return matrix_power(S, 0.5), 1.0
    E = probe_directions(n)
    norms = np.linalg.norm(np.einsum("mij,kj->kmi", mats, E), axis=2)
    rho = np.mean(norms**r, axis=1) ** (1.0 / r)
    pts = E / rho[:, None]
    A = mvee_symmetric(np.vstack([pts, -pts]))
    V = matrix_power(A, 0.5)
    fitted = np.linalg.norm(E @ V.T, axis=1)
    ratio = fitted / rho
    slack = float(max(ratio.max(), 1.0 / ratio.min()))
    return V, slack


def reducing_pair(w: MatrixWeight, q: Cube, p: float, q_exp: float,
                  quad: Optional[int] = None) -> ReducingPair:
    """The pair (V_Q, V'_Q): PSD matrices with |V_Q e| equivalent (slack
    sqrt(n)) to the p'-mean of |W^{-1/q} e| and |V'_Q e| to the q-mean of
    |W^{1/q} e| over the cube."""
    if not (1.0 < p <= q_exp):
        raise ValueError("need 1 < p <= q")
    pprime = p / (p - 1.0)
    m = quad or default_nodes(q.dim)
    X = midpoint_nodes(q, m)
    (Wq, Wmq), _ = w.powers_at(X, [1.0 / q_exp, -1.0 / q_exp])
    V, s1 = _rho_fit(Wmq, pprime, w.n)
    Vp, s2 = _rho_fit(Wq, q_exp, w.n)
    return ReducingPair(V, Vp, q, (p, q_exp), max(s1, s2))


# -- characteristics -------------------------------------------------------

@dataclass(frozen=True)
class Characteristic:
    value: float
    weight_id: str
    exponents: tuple[float, float]
    family: dict
    method: str
    quad: int
    degenerate: bool = False
    argmax_cube: Optional[Cube] = None

    def to_json(self) -> str:
        d = {
            "value": self.value,
            "weight_id": self.weight_id,
            "p": self.exponents[0],
            "q": self.exponents[1],
            "family": self.family,
            "method": self.method,
            "quad": self.quad,
            "degenerate": self.degenerate,
        }
        return json.dumps(d)


def apq_characteristic(w: MatrixWeight, p: float, q_exp: float,
                       fam: CubeFamily, quad: Optional[int] = None,
                       method: str = "definition") -> Characteristic:
    """Truncated sup over fam of
    (1/|Q|) int_Q ((1/|Q|) int_Q ||W^{1/q}(x) W^{-1/q}(y)||^{p'} dy)^{q/p'} dx.
    """
    if not (1.0 < p <= q_exp):
        raise ValueError("need 1 < p <= q")
    pprime = p / (p - 1.0)
    m = quad or default_nodes(w.d)
    best, best_cube, degen = -np.inf, None, False

    if method == "reducing":
        for cube in fam.enumerate():
            rp = reducing_pair(w, cube, p, q_exp, quad=m)
            val = float(
                np.linalg.norm(rp.v @ rp.v_prime, ord=2) ** q_exp
            )
            if val > best:
                best, best_cube = val, cube
    elif method == "definition":
        if w.kind == "constant":
            # averages of a constant are exact: one cube, one node
            cubes = [fam.base]
            m_eff = 1
        else:
            cubes = list(fam.enumerate())
            m_eff = m
        for cube in cubes:
            X = midpoint_nodes(cube, m_eff)
            (Wq, Wmq), flags = w.powers_at(X, [1.0 / q_exp, -1.0 / q_exp])
            degen = degen or bool(flags.any())
            inner = kernels.mean_opnorm_pow(Wq, Wmq, pprime)
            val = float(np.mean(inner ** (q_exp / pprime)))
            if not np.isfinite(val):
                raise QuadratureFailure(f"non-finite characteristic on {cube}")
            if val > best:
                best, best_cube = val, cube
    else:
        raise ValueError(f"unknown method {method!r}")

    return Characteristic(best, w.weight_id, (p, q_exp),
                          fam.descriptor(), method, m, degen, best_cube)


def ap_characteristic(w: MatrixWeight, p: float, fam: CubeFamily,
                      quad: Optional[int] = None,
                      method: str = "definition") -> Characteristic:
    """[W]_{A_p}: the A_{p,q} characteristic with q = p."""
    return apq_characteristic(w, p, p, fam, quad=quad, method=method)


def _lattice_slices(index, depth: int, span: int, d: int, res: int):
    """Flat node indices of the depth-`depth` cube with per-axis
    multi-index `index` on the res-per-axis lattice."""
    axes = [np.arange(i * span, (i + 1) * span) for i in index]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.ravel_multi_index([g.ravel() for g in grids], (res,) * d)


def _exact_inverse(w: MatrixWeight) -> Optional[MatrixWeight]:
    """Analytic pointwise inverse for mean-structure power weights.

    When gamma_ij = (gamma_ii + gamma_jj)/2 the weight factors as
    D(x) A D(x) with D diagonal, so W^{-1} = A^{-1} with exponents -gamma
    exactly.  Evaluating that form avoids the catastrophic conditioning
    of inverting W pointwise when the diagonal exponents are far apart.
    """
    if w.kind not in ("power_radial", "power_axis"):
        return None
    tables = [w.gamma] if w.kind == "power_radial" else list(w.gamma)
    for t in tables:
        diag = np.diag(t)
        mean = 0.5 * (diag[:, None] + diag[None, :])
        if np.max(np.abs(t - mean)) > 1e-12:
            return None
    if np.min(np.linalg.eigvalsh(w.matrix)) <= SYM_TOL * np.max(
            np.abs(w.matrix)):
        return None
    return MatrixWeight(w.kind, w.d, w.n,
                        matrix=matrix_power(w.matrix, -1.0), gamma=-w.gamma,
                        weight_id=f"inv({w.weight_id})")


def _cube_at(base: Cube, depth: int, index) -> Cube:
    if any(base.shift):
        raise ValueError("refined lattices need an unshifted base cube")
    lows = [
        lo + i * base.side / (1 << depth)
        for lo, i in zip(base.low, index)
    ]
    return Cube.box(lows, base.scale - depth)


def apq_lattice(w: MatrixWeight, p: float, q_exp: float, fam: CubeFamily,
                quad: Optional[int] = None) -> Characteristic:
    """Definition-form characteristic with depth-refined quadrature:
    every cube is averaged on the depth-K global lattice (quad nodes per
    axis per deepest cell), so divergent averages grow with K instead of
    being scale-invariant.  Quadratic cost in the node count; intended
    for d = 1 or shallow families.
    """
    if not (1.0 < p <= q_exp):
        raise ValueError("need 1 < p <= q")
    pprime = p / (p - 1.0)
    m = quad or default_nodes(w.d)
    K, d = fam.max_depth, w.d
    res = m * (1 << K)
    if res**d > 4096:
        raise ValueError(
            f"lattice method needs {res ** d} nodes per axis set; "
            "use a shallower family or the fixed-quad definition"
        )
    X = midpoint_nodes(fam.base, res)
    (Wq, Wmq), flags = w.powers_at(X, [1.0 / q_exp, -1.0 / q_exp])
    degen = bool(flags.any())
    best, best_cube = -np.inf, None
    for j in range(K + 1):
        span = m * (1 << (K - j))
        for index in itertools.product(range(1 << j), repeat=d):
            idx = _lattice_slices(index, j, span, d, res)
            inner = kernels.mean_opnorm_pow(Wq[idx], Wmq[idx], pprime)
            val = float(np.mean(inner ** (q_exp / pprime)))
            if not np.isfinite(val):
                raise QuadratureFailure("non-finite lattice characteristic")
            if val > best:
                best, best_cube = val, _cube_at(fam.base, j, index)
    return Characteristic(best, w.weight_id, (p, q_exp),
                          fam.descriptor(), "lattice", m, degen, best_cube)


def a2_trace(w: MatrixWeight, fam: CubeFamily,
             quad: Optional[int] = None,
             refine: bool = False) -> Characteristic:
    """sup_Q tr(avg_Q W . avg_Q W^{-1}) / n, normalized so identity scores 1.

    With ``refine=True`` every cube's averages are computed on the
    depth-K global lattice (quad midpoints per axis per deepest cell),
    aggregated bottom-up by child means.  Fixed per-cube quadrature is
    scale-invariant on homogeneous weights, so only the refined variant
    can reveal averages that diverge under deepening; it costs one
    evaluation sweep of (quad * 2^K)^d nodes.
    """
    m = quad or default_nodes(w.d)
    if w.kind == "constant" or not refine:
        best, best_cube, degen = -np.inf, None, False
        cubes = [fam.base] if w.kind == "constant" else list(fam.enumerate())
        m_eff = 1 if w.kind == "constant" else m
        for cube in cubes:
            X = midpoint_nodes(cube, m_eff)
            (W1, Wm1), flags = w.powers_at(X, [1.0, -1.0])
            degen = degen or bool(flags.any())
            val = float(np.trace(W1.mean(axis=0) @ Wm1.mean(axis=0))) / w.n
            if val > best:
                best, best_cube = val, cube
        return Characteristic(best, w.weight_id, (2.0, 2.0),
                              fam.descriptor(), "trace", m_eff, degen,
                              best_cube)

    K, d, n = fam.max_depth, w.d, w.n
    res = m * (1 << K)
    X = midpoint_nodes(fam.base, res)
    winv = _exact_inverse(w)
    if winv is not None:
        (W1,), flags = w.powers_at(X, [1.0])
        (Wm1,), _ = winv.powers_at(X, [1.0])
    else:
        (W1, Wm1), flags = w.powers_at(X, [1.0, -1.0])
    degen = bool(flags.any())
    # collapse quadrature nodes into per-deepest-cell means
    cell_shape = sum(((1 << K, m) for _ in range(d)), ())
    quad_axes = tuple(range(1, 2 * d, 2))
    A = W1.reshape(cell_shape + (n, n)).mean(axis=quad_axes)
    B = Wm1.reshape(cell_shape + (n, n)).mean(axis=quad_axes)
    best, best_cube = -np.inf, None
    for j in range(K, -1, -1):
        vals = np.einsum("...ij,...ji->...", A, B) / n
        if not np.all(np.isfinite(vals)):
            raise QuadratureFailure("non-finite trace characteristic")
        flat = int(np.argmax(vals))
        if float(vals.flat[flat]) > best:
            best = float(vals.flat[flat])
            index = np.unravel_index(flat, vals.shape)
            best_cube = _cube_at(fam.base, j, index)
        if j:  # coarsen by averaging 2^d children
            half = sum(((1 << (j - 1), 2) for _ in range(d)), ())
            pair_axes = tuple(range(1, 2 * d, 2))
            A = A.reshape(half + (n, n)).mean(axis=pair_axes)
            B = B.reshape(half + (n, n)).mean(axis=pair_axes)
    return Characteristic(best, w.weight_id, (2.0, 2.0),
                          fam.descriptor(), "trace-refined", m, degen,
                          best_cube)


def dual_weight(w: MatrixWeight, p: float, q_exp: float) -> MatrixWeight:
    """W^{-p'/q}; power kinds map kind-to-kind with exponents scaled by -p'/q."""
    s = (p / (p - 1.0)) / q_exp
    wid = f"dual({w.weight_id})"
    if w.kind == "constant":
        return MatrixWeight("constant", w.d, w.n,
                            matrix=matrix_power(w.matrix, -s), weight_id=wid)
    if w.kind == "power_radial":
        return MatrixWeight("power_radial", w.d, w.n,
                            matrix=matrix_power(w.matrix, -s),
                            gamma=-s * w.gamma, weight_id=wid)
    if w.kind == "power_axis":
        return MatrixWeight("power_axis", w.d, w.n,
                            matrix=matrix_power(w.matrix, -s),
                            gamma=-s * w.gamma, weight_id=wid)
    vals, _ = floor_psd(w.values)
    ev, U = np.linalg.eigh(vals)
    ev = np.maximum(ev, np.finfo(float).tiny)
    dual_vals = np.einsum("...ij,...j,...kj->...ik", U, ev ** (-s), U)
    return MatrixWeight("sampled", w.d, w.n, base=w.base,
                        values=dual_vals, weight_id=wid)


def blm_is_a2(A: np.ndarray, gammas: np.ndarray, variant: str,
              d: int, tol: float = 1e-12) -> bool:
    """Power-weight A_2 membership test.

    radial: -d < gamma_ii < d and gamma_ij = (gamma_ii + gamma_jj)/2;
    axis:   -1 < gamma^k_ii < 1 and the same mean structure per axis.
    """
    A = np.asarray(A, dtype=float)
    if np.min(np.linalg.eigvalsh(0.5 * (A + A.T))) <= 0:
        return False
    g = np.asarray(gammas, dtype=float)
    if variant == "radial":
        tables, bound = [g], float(d)
    elif variant == "axis":
        tables, bound = list(g), 1.0
    else:
        raise ValueError("variant must be 'radial' or 'axis'")
    for t in tables:
        diag = np.diag(t)
        if np.any(diag <= -bound) or np.any(diag >= bound):
            return False
        mean = 0.5 * (diag[:, None] + diag[None, :])
        if np.max(np.abs(t - mean)) > tol:
            return False
    return True
