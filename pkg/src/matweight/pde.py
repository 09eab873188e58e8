"""Q1 tensor-grid Galerkin solvers for degenerate linear elliptic systems
and the degenerate p-Laplacian, plus local-regularity diagnostics
(Caccioppoli, reverse-Holder exponent sweep, decay fit, d=2 Holder
modulus).

The linear system is  -d/dx_a (A_{ij}^{ab}(x) d/dx_b u_j) = -div F  in
divergence form; the nonlinear solver minimizes the p-energy
int <Du G, Du>_F^{p/2}.  Coefficients are sampled at element
barycenters; reference-element gradient integrals are computed once and
exactly, so A = I reproduces the textbook Laplace stiffness.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dyadic import Cube
from .errors import (BallOutsideDomain, LineSearchFailure, NonConvergence,
                     NonEllipticSample, PairOutsideBall, SolverFailure,
                     TooFewRadii)
from .grid import GridFunction

__all__ = [
    "EllipticProblem",
    "DiscreteSolution",
    "assemble_linear",
    "solve_linear",
    "solve_plaplace",
    "ellipticity_check",
    "caccioppoli_check",
    "meyers_exponent",
    "decay_check",
    "holder_modulus",
]


# -- reference Q1 element ----------------------------------------------------

def _shape_gradients(d: int, points: np.ndarray) -> np.ndarray:
    """d/d xi_a phi_t at reference points; shape (npts, 2^d, d).

    Vertex t runs over {0,1}^d in lexicographic order; phi_t is the
    tensor product of 1-xi or xi per axis.
    """
    verts = np.array(list(itertools.product((0, 1), repeat=d)))
    npts = len(points)
    out = np.empty((npts, len(verts), d))
    for ti, v in enumerate(verts):
        lin = np.where(v[None, :] == 1, points, 1.0 - points)  # (npts, d)
        for a in range(d):
            rest = np.prod(np.delete(lin, a, axis=1), axis=1)
            out[:, ti, a] = (2 * v[a] - 1) * rest
    return out


def _shape_values(d: int, points: np.ndarray) -> np.ndarray:
    verts = np.array(list(itertools.product((0, 1), repeat=d)))
    lin = np.where(
        verts[None, :, :] == 1, points[:, None, :], 1.0 - points[:, None, :]
    )
    return np.prod(lin, axis=2)  # (npts, 2^d)


_REF_CACHE: dict = {}


def _reference(d: int) -> dict:
    """Exact reference gradient-product integrals and Gauss data for Q1."""
    if d in _REF_CACHE:
        return _REF_CACHE[d]
    g1 = 0.5 + np.array([-1.0, 1.0]) / (2.0 * math.sqrt(3.0))
    gp = np.array(list(itertools.product(g1, repeat=d)))  # (2^d, d)
    gw = np.full(len(gp), 0.5**d)
    G = _shape_gradients(d, gp)  # (2^d, 2^d, d)
    # E[t, a, u, b] = int dphi_t/dxi_a dphi_u/dxi_b (degree <= 2 per axis,
    # so the 2-point tensor Gauss rule is exact)
    E = np.einsum("g,gta,gub->taub", gw, G, G)
    L = np.einsum("g,gta->ta", gw, G)
    bary = _shape_gradients(d, np.full((1, d), 0.5))[0]  # (2^d, d)
    ref = {"E": E, "L": L, "gp": gp, "gw": gw, "G": G, "bary_grad": bary}
    _REF_CACHE[d] = ref
    return ref


# -- problem / solution ------------------------------------------------------

@dataclass
class EllipticProblem:
    """Degenerate elliptic system on a tensor grid.

    Exactly one of `coefficient` (full tensor, X -> (M, n, n, d, d)) or
    `decoupled` (X -> (M, n, n), meaning A_{ij}^{ab} = B_{ij} delta_ab)
    must be given.  `source` is the divergence-form datum F, X -> (M, n, d);
    `boundary` supplies Dirichlet values X -> (M, n) and doubles as the
    benchmark solution where one exists.  `domain_mask` (X -> bool)
    restricts the active cells, e.g. to an annulus.
    """

    base: Cube
    resolution: int
    n: int = 1
    coefficient: Optional[Callable] = None
    decoupled: Optional[Callable] = None
    weight: Optional[object] = None
    source: Optional[Callable] = None
    boundary: Optional[Callable] = None
    p: float = 2.0
    metric: Optional[np.ndarray] = None  # G for the p-Laplacian
    domain_mask: Optional[Callable] = None
    eig_floor: float = 1e-12
    # Optional flux-consistent per-cell coefficient: callable
    # (cell_low_corners (C, d), h) -> (C, n, n), overriding barycenter
    # sampling of `decoupled`.  Supplying exact harmonic means makes the
    # d=1 scheme nodally exact for degenerate coefficients.
    cell_coefficient: Optional[Callable] = None

    def __post_init__(self):
        forms = sum(
            x is not None
            for x in (self.coefficient, self.decoupled,
                      self.cell_coefficient)
        )
        if forms != 1 and self.metric is None:
            raise ValueError(
                "give exactly one of coefficient/decoupled/cell_coefficient"
            )

    @property
    def d(self) -> int:
        return self.base.dim


@dataclass
class DiscreteSolution:
    values: np.ndarray  # (res+1,)*d + (n,) vertex lattice
    problem: EllipticProblem
    residual: float
    energy: float
    log: list = field(default_factory=list)

    @property
    def resolution(self) -> int:
        return self.values.shape[0] - 1

    def vertex_nodes(self) -> np.ndarray:
        prob = self.problem
        lo = np.array([float(a) for a in prob.base.low])
        h = float(prob.base.side) / self.resolution
        axes = [lo[i] + h * np.arange(self.resolution + 1)
                for i in range(prob.d)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Multilinear (Q1) interpolation at points X (M, d)."""
        prob = self.problem
        d, res = prob.d, self.resolution
        lo = np.array([float(a) for a in prob.base.low])
        h = float(prob.base.side) / res
        loc = (np.atleast_2d(X) - lo) / h
        ci = np.clip(np.floor(loc).astype(int), 0, res - 1)
        xi = loc - ci
        phis = _shape_values(d, xi)  # (M, 2^d)
        flat = self.values.reshape(-1, self.values.shape[-1])
        out = 0.0
        for ti, v in enumerate(itertools.product((0, 1), repeat=d)):
            gi = np.ravel_multi_index(
                tuple(ci[:, k] + v[k] for k in range(d)), (res + 1,) * d
            )
            out = out + phis[:, ti, None] * flat[gi]
        return out

    def cell_values(self) -> GridFunction:
        """Q1 solution at cell barycenters, as a lattice function."""
        prob = self.problem
        d, res = prob.d, self.resolution
        n = self.values.shape[-1]
        out = np.zeros((res,) * d + (n,), dtype=self.values.dtype)
        for v in itertools.product((0, 1), repeat=d):
            sl = tuple(slice(vi, vi + res) for vi in v)
            out += self.values[sl]
        out /= 2**d
        return GridFunction(prob.base, res, out, "vector")

    def cell_gradient(self) -> GridFunction:
        """Du at cell barycenters; (n, d) matrix codomain."""
        prob = self.problem
        d, res = prob.d, self.resolution
        n = self.values.shape[-1]
        h = float(prob.base.side) / res
        ref = _reference(d)["bary_grad"]  # (2^d, d)
        out = np.zeros((res,) * d + (n, d), dtype=self.values.dtype)
        for ti, v in enumerate(itertools.product((0, 1), repeat=d)):
            sl = tuple(slice(vi, vi + res) for vi in v)
            out += self.values[sl][..., :, None] * (ref[ti] / h)
        return GridFunction(prob.base, res, out, "matrix")

    def h1p_norm(self, w, p: Optional[float] = None) -> float:
        p = p or self.problem.p
        return (
            self.cell_values().weighted_lp_norm(p, w, 1.0 / p)
            + self.cell_gradient().weighted_lp_norm(p, w, 1.0 / p)
        )


# -- meshing -----------------------------------------------------------------

def _mesh(prob: EllipticProblem) -> dict:
    d, res = prob.d, prob.resolution
    lo = np.array([float(a) for a in prob.base.low])
    h = float(prob.base.side) / res
    cells = np.indices((res,) * d).reshape(d, -1).T  # (res^d, d)
    bary = lo + (cells + 0.5) * h
    if prob.domain_mask is not None:
        active = np.asarray(prob.domain_mask(bary), dtype=bool)
    else:
        active = np.ones(len(cells), dtype=bool)
    acell = cells[active]
    conn = np.empty((len(acell), 2**d), dtype=int)
    for ti, v in enumerate(itertools.product((0, 1), repeat=d)):
        conn[:, ti] = np.ravel_multi_index(
            tuple(acell[:, k] + v[k] for k in range(d)), (res + 1,) * d
        )
    # vertex classification: interior iff all 2^d incident cell slots
    # exist and are active
    pad = np.zeros((res + 2,) * d, dtype=bool)
    pad[(slice(1, -1),) * d] = active.reshape((res,) * d)
    interior = np.ones((res + 1,) * d, dtype=bool)
    touched = np.zeros((res + 1,) * d, dtype=bool)
    for v in itertools.product((0, 1), repeat=d):
        sl = tuple(slice(vi, vi + res + 1) for vi in v)
        interior &= pad[sl]
        touched |= pad[sl]
    axes = [lo[i] + h * np.arange(res + 1) for i in range(d)]
    grids = np.meshgrid(*axes, indexing="ij")
    verts = np.stack([g.ravel() for g in grids], axis=-1)
    return {
        "h": h,
        "verts": verts,
        "conn": conn,
        "bary": bary[active],
        "active": active,
        "interior": interior.ravel(),
        "touched": touched.ravel(),
        "nv": (res + 1) ** d,
    }


def _coefficient_tensor(prob: EllipticProblem, X: np.ndarray) -> np.ndarray:
    d, n = prob.d, prob.n
    if prob.cell_coefficient is not None:
        h = float(prob.base.side) / prob.resolution
        B = np.asarray(prob.cell_coefficient(X - 0.5 * h, h))
        if B.shape != (len(X), n, n):
            raise ValueError(f"cell coefficient shape {B.shape} invalid")
        return np.einsum("cij,ab->cijab", B, np.eye(d))
    if prob.coefficient is not None:
        A = np.asarray(prob.coefficient(X))
        if A.shape != (len(X), n, n, d, d):
            raise ValueError(f"coefficient shape {A.shape} invalid")
        return A
    B = np.asarray(prob.decoupled(X))
    if B.shape != (len(X), n, n):
        raise ValueError(f"decoupled coefficient shape {B.shape} invalid")
    return np.einsum("cij,ab->cijab", B, np.eye(d))


def _floor_coefficient(A: np.ndarray, rel_floor: float) -> tuple:
    """Floor the Hermitian-part eigenvalues of the (nd x nd) flattening so
    the assembled system is invertible; returns (A, report)."""
    C, n, _, d, _ = A.shape
    M = A.transpose(0, 1, 3, 2, 4).reshape(C, n * d, n * d)
    H = 0.5 * (M + np.conj(np.swapaxes(M, 1, 2)))
    eigs = np.linalg.eigvalsh(H)
    top = float(eigs.max()) if eigs.size else 1.0
    floor = rel_floor * max(top, 1.0)
    deficit = floor - eigs[:, 0]
    bad = deficit > 0
    if np.any(bad):
        bump = np.zeros(C)
        bump[bad] = deficit[bad]
        eye = np.eye(n * d)
        M = M + bump[:, None, None] * eye
        A = M.reshape(C, n, d, n, d).transpose(0, 1, 3, 2, 4)
    report = {
        "floor": floor,
        "floored_cells": int(np.count_nonzero(bad)),
        "min_eig": float(eigs[:, 0].min()) if eigs.size else 0.0,
    }
    return A, report


def ellipticity_check(prob: EllipticProblem, n_samples: int = 64,
                      n_dirs: int = 8) -> dict:
    """Measure the sandwich  Re<A eta, eta> >= c ||W^{1/p} eta||_F^2  and
    |<A nu, eta>| <= C ||W^{1/p} eta|| ||W^{1/p} nu||  at random element
    barycenters / directions; raises if a sample has c <= 0."""
    mesh = _mesh(prob)
    rng = np.random.Generator(np.random.Philox(key=7))
    bary = mesh["bary"]
    take = rng.choice(len(bary), size=min(n_samples, len(bary)),
                      replace=False)
    X = bary[take]
    A = _coefficient_tensor(prob, X)
    n, d = prob.n, prob.d
    if prob.weight is not None:
        (Wp,), _ = prob.weight.powers_at(X, [1.0 / prob.p])
    else:
        Wp = np.broadcast_to(np.eye(n), (len(X), n, n))
    c_min, C_max = np.inf, 0.0
    for _ in range(n_dirs):
        eta = rng.standard_normal((n, d))
        nu = rng.standard_normal((n, d))
        qa = np.real(np.einsum("cijab,jb,ia->c", A, eta, eta))
        cross = np.abs(np.einsum("cijab,jb,ia->c", A, nu, eta))
        ne = np.linalg.norm(np.einsum("cij,ja->cia", Wp, eta),
                            axis=(1, 2)) ** 2
        nn = np.linalg.norm(np.einsum("cij,ja->cia", Wp, nu),
                            axis=(1, 2)) ** 2
        c_min = min(c_min, float(np.min(qa / ne)))
        C_max = max(C_max, float(np.max(cross / np.sqrt(ne * nn))))
    if c_min <= 0.0:
        raise NonEllipticSample(
            f"measured lower ellipticity constant {c_min:.3e} <= 0"
        )
    return {"c": c_min, "C": C_max, "samples": len(X), "dirs": n_dirs}


# -- linear path -------------------------------------------------------------

def assemble_linear(prob: EllipticProblem) -> dict:
    """Stiffness from int <A Du, Dphi>_F with barycenter coefficient
    sampling and exact reference gradient-product integrals; load from
    -int <F, Dphi>_F."""
    d, n = prob.d, prob.n
    mesh = _mesh(prob)
    h = mesh["h"]
    ref = _reference(d)
    A = _coefficient_tensor(prob, mesh["bary"])
    A, floor_report = _floor_coefficient(A, prob.eig_floor)
    dtype = complex if np.iscomplexobj(A) else float
    # Kloc[c, t, i, u, j] = h^{d-2} sum_{a,b} A[c,i,j,a,b] E[t,a,u,b]
    Kloc = h ** (d - 2) * np.einsum("cijab,taub->ctiuj", A, ref["E"])
    conn = mesh["conn"]
    nvtx = mesh["nv"]
    two_d = 2**d
    rows = (conn[:, :, None, None, None] * n
            + np.arange(n)[None, None, :, None, None])
    rows = np.broadcast_to(rows, Kloc.shape).ravel()
    cols = (conn[:, None, None, :, None] * n
            + np.arange(n)[None, None, None, None, :])
    cols = np.broadcast_to(cols, Kloc.shape).ravel()
    K = sp.coo_matrix(
        (Kloc.ravel(), (rows, cols)), shape=(nvtx * n, nvtx * n),
        dtype=dtype,
    ).tocsr()
    rhs = np.zeros(nvtx * n, dtype=dtype)
    if prob.source is not None:
        F = np.asarray(prob.source(mesh["bary"]))  # (C, n, d)
        load = -h ** (d - 1) * np.einsum("cia,ta->cti", F, ref["L"])
        idx = (conn[:, :, None] * n + np.arange(n)[None, None, :]).ravel()
        np.add.at(rhs, idx, load.ravel())
    if prob.boundary is not None:
        u_bc = np.asarray(prob.boundary(mesh["verts"])).reshape(nvtx, n)
    else:
        u_bc = np.zeros((nvtx, n), dtype=dtype)
    return {
        "K": K,
        "rhs": rhs,
        "mesh": mesh,
        "u_bc": u_bc,
        "floor": floor_report,
        "dtype": dtype,
    }


def solve_linear(prob: EllipticProblem) -> DiscreteSolution:
    """Galerkin solution of the linear system; Dirichlet data on boundary
    and inactive vertices."""
    sys = assemble_linear(prob)
    K, rhs, mesh = sys["K"], sys["rhs"], sys["mesh"]
    n = prob.n
    nvtx = mesh["nv"]
    free = np.repeat(mesh["interior"], n)
    u = sys["u_bc"].astype(sys["dtype"]).ravel()
    u[np.repeat(~mesh["touched"], n)] = 0.0
    b = rhs[free] - K[free][:, ~free] @ u[~free]
    Kff = K[free][:, free].tocsc()
    try:
        x = spla.spsolve(Kff, b)
    except Exception as exc:  # pragma: no cover
        raise SolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SolverFailure("direct solve returned non-finite values")
    u[free] = x
    res = float(np.linalg.norm(K[free] @ u - rhs[free]))
    energy = float(np.real(0.5 * np.vdot(u, K @ u) - np.vdot(rhs, u)))
    vals = u.reshape((prob.resolution + 1,) * prob.d + (n,))
    if sys["dtype"] is float:
        vals = np.real(vals)
    return DiscreteSolution(vals, prob, res, energy,
                            log=[{"floor": sys["floor"]}])


# -- nonlinear path ----------------------------------------------------------

def _plaplace_state(prob: EllipticProblem, mesh: dict):
    d = prob.d
    ref = _reference(d)
    G = np.asarray(prob.metric, dtype=float)
    if G.shape != (d, d):
        raise ValueError("metric G must be (d, d)")
    if prob.source is not None:
        F = np.asarray(prob.source(mesh["bary"]))
    else:
        F = None
    return ref, G, F


def _plaplace_energy_grad(u, prob, mesh, ref, G, F, want_grad=True):
    d, n = prob.d, prob.n
    h = mesh["h"]
    conn = mesh["conn"]
    p = prob.p
    Gphi = ref["G"]  # (ngp, 2^d, d)
    gw = ref["gw"] * h**d
    U = u.reshape(-1, n)[conn]  # (C, 2^d, n)
    Du = np.einsum("cti,gta->cgia", U, Gphi) / h
    S = np.einsum("cgia,ab,cgib->cg", Du, G, Du)
    S = np.maximum(S, 0.0)
    energy = float(np.sum(gw[None, :] * S ** (p / 2.0)))
    if F is not None:
        energy += float(np.einsum("g,cia,cgia->", gw, F, Du))
    if not want_grad:
        return energy, None, S
    DuG = np.einsum("cgia,ab->cgib", Du, G)
    coef = p * S ** ((p - 2.0) / 2.0)
    eloc = np.einsum("g,cg,cgia,gta->cti", gw, coef, DuG, Gphi) / h
    if F is not None:
        eloc += np.einsum("g,cia,gta->cti", gw, F, Gphi) / h
    grad = np.zeros(u.shape)
    idx = (conn[:, :, None] * n + np.arange(n)[None, None, :]).ravel()
    np.add.at(grad, idx, eloc.ravel())
    return energy, grad, S


def _lagged_stiffness(prob, mesh, ref, G, S, reg):
    """Linearized (lagged-diffusivity) stiffness with per-Gauss-point
    coefficient p * S^{(p-2)/2}, used as descent preconditioner."""
    d, n = prob.d, prob.n
    h = mesh["h"]
    p = prob.p
    gw = ref["gw"] * h**d
    Gphi = ref["G"]
    coef = p * (S + reg) ** ((p - 2.0) / 2.0)  # (C, ngp)
    # Eloc[c,t,u] = sum_g gw coef[c,g] (Gphi[g,t] G Gphi[g,u]) / h^2
    cross = np.einsum("gta,ab,gub->gtu", Gphi, G, Gphi)
    Eloc = np.einsum("g,cg,gtu->ctu", gw, coef, cross) / h**2
    conn = mesh["conn"]
    nvtx = mesh["nv"]
    eye = np.eye(n)
    Kloc = Eloc[:, :, None, :, None] * eye[None, None, :, None, :]
    rows = np.broadcast_to(
        conn[:, :, None, None, None] * n
        + np.arange(n)[None, None, :, None, None], Kloc.shape).ravel()
    cols = np.broadcast_to(
        conn[:, None, None, :, None] * n
        + np.arange(n)[None, None, None, None, :], Kloc.shape).ravel()
    return sp.coo_matrix(
        (Kloc.ravel(), (rows, cols)), shape=(nvtx * n, nvtx * n)
    ).tocsr()


def solve_plaplace(prob: EllipticProblem, max_iter: int = 200,
                   armijo_c: float = 1e-4, max_backtracks: int = 40,
                   initial: Optional[np.ndarray] = None
                   ) -> DiscreteSolution:
    """Minimize the discrete p-energy by preconditioned descent with
    Armijo backtracking.  Convergence: relative energy decrease below
    1e-10 sustained over 20 iterations (or a vanishing gradient)."""
    if prob.p <= 2.0:
        raise ValueError("p-Laplacian path requires p > 2")
    mesh = _mesh(prob)
    ref, G, F = _plaplace_state(prob, mesh)
    n = prob.n
    nvtx = mesh["nv"]
    free = np.repeat(mesh["interior"], n)
    if prob.boundary is not None:
        u = np.asarray(prob.boundary(mesh["verts"]), dtype=float)
        u = u.reshape(nvtx, n).ravel()
    else:
        u = np.zeros(nvtx * n)
    u[np.repeat(~mesh["touched"], n)] = 0.0
    if initial is not None:
        # interior values only; Dirichlet data stays authoritative
        u[free] = np.asarray(initial, dtype=float).ravel()[free]
    energy, grad, S = _plaplace_energy_grad(u, prob, mesh, ref, G, F)
    energies = [energy]
    stall = 0
    scale = max(float(np.mean(S)), 1e-30)
    for it in range(max_iter):
        gfree = grad[free]
        gnorm = float(np.linalg.norm(gfree))
        if gnorm < 1e-14 * max(1.0, abs(energy)):
            break
        K = _lagged_stiffness(prob, mesh, ref, G, S, reg=1e-10 * scale)
        Kff = K[free][:, free].tocsc()
        step_dir = np.zeros_like(u)
        step_dir[free] = -spla.spsolve(Kff, gfree)
        slope = float(np.dot(grad[free], step_dir[free]))
        if slope >= 0.0:  # fall back to plain gradient descent
            step_dir[free] = -gfree / max(gnorm, 1e-30)
            slope = float(np.dot(grad[free], step_dir[free]))
        t = 1.0
        for _ in range(max_backtracks):
            e_try, _, _ = _plaplace_energy_grad(
                u + t * step_dir, prob, mesh, ref, G, F, want_grad=False
            )
            if e_try <= energy + armijo_c * t * slope:
                break
            t *= 0.5
        else:
            raise LineSearchFailure(
                f"backtracking exhausted at iteration {it}"
            )
        u = u + t * step_dir
        energy, grad, S = _plaplace_energy_grad(u, prob, mesh, ref, G, F)
        prev = energies[-1]
        energies.append(energy)
        rel = (prev - energy) / max(abs(prev), 1e-30)
        stall = stall + 1 if rel < 1e-10 else 0
        if stall >= 20:
            break
    else:
        raise NonConvergence(
            f"no convergence in {max_iter} iterations "
            f"(last rel decrease {rel:.2e})"
        )
    _, grad, _ = _plaplace_energy_grad(u, prob, mesh, ref, G, F)
    res = float(np.linalg.norm(grad[free]))
    vals = u.reshape((prob.resolution + 1,) * prob.d + (n,))
    return DiscreteSolution(vals, prob, res, energy,
                            log=[{"energies": energies}])


# -- diagnostics -------------------------------------------------------------

def _ball_cells(sol: DiscreteSolution, center, radius: float,
                require_inside: bool = True) -> np.ndarray:
    prob = sol.problem
    gf = sol.cell_values()
    X = gf.nodes()
    rr = np.linalg.norm(X - np.asarray(center, float)[None, :], axis=1)
    idx = np.nonzero(rr < radius)[0]
    if require_inside:
        lo = np.array([float(a) for a in prob.base.low])
        hi = np.array([float(a) for a in prob.base.high])
        c = np.asarray(center, float)
        if np.any(c - radius < lo) or np.any(c + radius > hi):
            raise BallOutsideDomain(
                f"ball({center}, {radius}) leaves the base cube"
            )
        if prob.domain_mask is not None:
            mesh_active = np.zeros(len(X), dtype=bool)
            mesh_active[
                np.nonzero(np.asarray(prob.domain_mask(X), bool))[0]
            ] = True
            if not np.all(mesh_active[idx]):
                raise BallOutsideDomain(
                    "ball intersects inactive cells of the domain"
                )
    return idx


def _weighted_p_integral(w, vals, X, p, power, cellvol) -> float:
    if w is not None:
        (Ws,), _ = w.powers_at(X, [power])
    else:
        nn = vals.shape[1]
        Ws = np.broadcast_to(np.eye(nn), (len(X), nn, nn))
    if vals.ndim == 2:
        mag = np.linalg.norm(np.einsum("mij,mj->mi", Ws, vals), axis=1)
    else:
        prod = np.einsum("mij,mjk->mik", Ws, vals)
        mag = np.linalg.norm(prod, ord=2, axis=(1, 2))
    return float(np.sum(mag**p) * cellvol)


def caccioppoli_check(sol: DiscreteSolution, center, r: float) -> dict:
    """lhs = int_{B_{r/2}} ||W^{1/p} Du||^p;
    rhs = r^{-p} int_{B_r \\ B_{r/2}} |W^{1/p} u|^p
          + int_{B_r} ||W^{-1/p} F||^{p'}."""
    prob = sol.problem
    p = prob.p
    w = prob.weight
    u = sol.cell_values()
    Du = sol.cell_gradient()
    X = u.nodes()
    cv = u.cell_volume
    inner = _ball_cells(sol, center, r / 2.0)
    outer = _ball_cells(sol, center, r)
    ring = np.setdiff1d(outer, inner, assume_unique=True)
    lhs = _weighted_p_integral(
        w, Du.flat_values()[inner], X[inner], p, 1.0 / p, cv
    )
    rhs = r ** (-p) * _weighted_p_integral(
        w, u.flat_values()[ring], X[ring], p, 1.0 / p, cv
    )
    if prob.source is not None:
        pprime = p / (p - 1.0)
        F = np.asarray(prob.source(X[outer]))
        rhs += _weighted_p_integral(w, F, X[outer], pprime, -1.0 / p, cv)
    tiny = 1e-14 * max(1.0, float(np.abs(u.values).max()) ** p)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ratio": lhs / rhs if rhs > tiny else 0.0,
        "vacuous": lhs <= tiny and rhs <= tiny,
    }


def meyers_exponent(sol: DiscreteSolution, center, r: float,
                    q_grid=None, band: float = 3.0) -> dict:
    """Reverse-Holder sweep: largest q > p with
    ((1/|B_{r/2}|) int ||W^{1/p} Du||^q)^{1/q}
      <= band * [ p-mean over B_r + F-term ]."""
    prob = sol.problem
    p, w = prob.p, prob.weight
    Du = sol.cell_gradient()
    X = Du.nodes()
    cv = Du.cell_volume
    inner = _ball_cells(sol, center, r / 2.0)
    outer = _ball_cells(sol, center, r)
    if q_grid is None:
        q_grid = p * np.array([1.0 + 0.25 * k for k in range(1, 29)])
    if w is not None:
        (Wp,), _ = w.powers_at(X, [1.0 / p])
    else:
        Wp = np.broadcast_to(np.eye(prob.n), (len(X), prob.n, prob.n))
    prod = np.einsum("mij,mjk->mik", Wp, Du.flat_values())
    mag = np.linalg.norm(prod, ord=2, axis=(1, 2))
    vol_in = len(inner) * cv
    vol_out = len(outer) * cv
    rhs = (np.sum(mag[outer] ** p) * cv / vol_out) ** (1.0 / p)
    if prob.source is not None:
        pprime = p / (p - 1.0)
        F = np.asarray(prob.source(X[outer]))
        rhs += (_weighted_p_integral(w, F, X[outer], pprime, -1.0 / p, cv)
                / vol_out) ** (1.0 / pprime)
    base = (np.sum(mag[inner] ** p) * cv / vol_in) ** (1.0 / p)
    rows = []
    q_max = p
    for q in q_grid:
        lhs = (np.sum(mag[inner] ** q) * cv / vol_in) ** (1.0 / q)
        ok = rhs > 0 and lhs <= band * rhs
        rows.append({"q": float(q), "lhs": float(lhs), "ok": bool(ok)})
        if ok:
            q_max = float(q)
        else:
            break
    return {
        "q_max": q_max,
        "rhs": float(rhs),
        "base_ratio": float(base / rhs) if rhs > 0 else 0.0,
        "band": band,
        "rows": rows,
    }


def decay_check(sol: DiscreteSolution, center, R: float,
                n_radii: int = 3, ratio: float = 8.0) -> dict:
    """Fit gamma in int_{B_r} ||W^{1/2} Du||^2 ~ (r/R)^gamma over radii
    R * ratio^{-j}."""
    if n_radii < 3:
        raise TooFewRadii("need at least 3 radii for the decay fit")
    prob = sol.problem
    Du = sol.cell_gradient()
    X = Du.nodes()
    cv = Du.cell_volume
    radii, ints = [], []
    for j in range(n_radii):
        rj = R * ratio ** (-j)
        idx = _ball_cells(sol, center, rj)
        if len(idx) == 0:
            break
        val = _weighted_p_integral(
            prob.weight, Du.flat_values()[idx], X[idx], 2.0, 0.5, cv
        )
        if val <= 0.0:
            break
        radii.append(rj)
        ints.append(val)
    if len(radii) < 3:
        if max(ints, default=0.0) == 0.0:
            return {"gamma": 0.0, "vacuous": True, "radii": radii}
        raise TooFewRadii(
            f"only {len(radii)} usable radii at this resolution"
        )
    lr, li = np.log(radii), np.log(ints)
    gamma, icpt = np.polyfit(lr, li, 1)
    resid = float(np.max(np.abs(li - (gamma * lr + icpt))))
    return {
        "gamma": float(gamma),
        "residual": resid,
        "radii": radii,
        "integrals": ints,
        "vacuous": False,
    }


def holder_modulus(sol: DiscreteSolution, pairs, center, R: float,
                   eps_grid=None) -> dict:
    """d=2 pointwise modulus: per pair (x, y),
    C_xy = (sup_{B'} |B'|^{eps-1} int_{B'} ||W^{-1/2}||^2)^{1/2} over
    rasterized balls at dyadic radii <= 2|x-y| centered at the midpoint;
    reports, per eps, the minimal C_cal with
    |u(x) - u(y)| <= C_cal * C_xy (|x-y|/R)^eps."""
    prob = sol.problem
    if prob.d != 2:
        raise ValueError("holder_modulus is a d=2 diagnostic")
    if eps_grid is None:
        eps_grid = [0.05 * k for k in range(1, 21)]
    w = prob.weight
    gf = sol.cell_values()
    X = gf.nodes()
    cv = gf.cell_volume
    if w is not None:
        (Wm,), _ = w.powers_at(X, [-0.5])
        wm2 = np.linalg.norm(Wm, ord=2, axis=(1, 2)) ** 2
    else:
        wm2 = np.ones(len(X))
    c = np.asarray(center, float)
    out_rows = []
    for x, y in pairs:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if np.linalg.norm(x - c) > R or np.linalg.norm(y - c) > R:
            raise PairOutsideBall(f"pair ({x}, {y}) leaves B_R")
        sep = float(np.linalg.norm(x - y))
        if sep == 0.0:
            out_rows.append({"sep": 0.0, "du": 0.0, "sup": {}})
            continue
        mid = 0.5 * (x + y)
        k_hi = math.floor(math.log2(2.0 * sep))
        sup_per_eps = {}
        for k in range(k_hi, k_hi - 4, -1):
            rad = 2.0**k
            if rad < sep / 2.0:
                break
            rr = np.linalg.norm(X - mid[None, :], axis=1)
            idx = np.nonzero(rr < rad)[0]
            if len(idx) == 0:
                continue
            vol = len(idx) * cv
            integ = float(np.sum(wm2[idx]) * cv)
            for eps in eps_grid:
                v = vol ** (eps - 1.0) * integ
                sup_per_eps[eps] = max(sup_per_eps.get(eps, 0.0), v)
        du = float(np.linalg.norm(
            sol.evaluate(x[None]) - sol.evaluate(y[None])
        ))
        out_rows.append({"sep": sep, "du": du, "sup": sup_per_eps})
    table = {}
    for eps in eps_grid:
        c_cal = 0.0
        for row in out_rows:
            if row["sep"] == 0.0 or eps not in row["sup"]:
                continue
            cxy = math.sqrt(row["sup"][eps])
            denom = cxy * (row["sep"] / R) ** eps
            if denom > 0:
                c_cal = max(c_cal, row["du"] / denom)
        table[eps] = c_cal
    return {"c_cal": table, "pairs": len(out_rows)}
