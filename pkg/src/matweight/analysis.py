"""Numerical verifiers for the matrix Poincare / Sobolev inequalities
(with eps-gain), the global Sobolev inequality, the gradient
representation formula, and the annulus comparison lemmas.

All verifiers return ratios lhs / rhs-without-constant; nothing here
asserts an inequality, the calibration happens in the test batteries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dyadic import Cube
from .errors import (EmptyAnnulus, ExponentOutOfRange, ResolutionTooLow,
                     SupportViolation)
from .grid import GridFunction

__all__ = [
    "InequalityReport",
    "jacobian",
    "representation_check",
    "poincare_ratio",
    "sobolev_ratio",
    "global_sobolev_ratio",
    "annulus_mean_comparison",
    "annulus_poincare",
    "default_eps",
]


@dataclass(frozen=True)
class InequalityReport:
    lhs: float
    rhs_without_c: float
    ratio: float
    exponents: tuple  # (p, eps)
    descriptor: str
    predicted_exponent: float  # characteristic power of the proved constant


def default_eps(p: float, char_value: float, c: float = 0.1) -> float:
    """eps = c / [W]^{max(1, p'/p)}, the scaling of the proved gain."""
    pprime = p / (p - 1.0)
    return c / char_value ** max(1.0, pprime / p)


def predicted_constant_exponent(p: float) -> float:
    pprime = p / (p - 1.0)
    return max(1.0 + 2.0 * pprime / p, 2.0 + pprime / p)


def jacobian(f: GridFunction) -> GridFunction:
    """Df by centered differences (one-sided at the boundary), exact on
    affine data; codomain matrix (n, d)."""
    if f.resolution < 4:
        raise ResolutionTooLow("jacobian needs at least 4 cells per axis")
    d, n, h = f.dim, f.n, f.cell_width
    vals = f.values
    out = np.empty(vals.shape[:d] + (n, d), dtype=vals.dtype)
    for ax in range(d):
        der = np.gradient(vals, h, axis=ax, edge_order=2)
        out[..., ax] = der
    return GridFunction(f.base, f.resolution, out, "matrix")


def _boundary_mask(f: GridFunction, width: int = 1) -> np.ndarray:
    d = f.dim
    res = f.resolution
    mask = np.zeros((res,) * d, dtype=bool)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = slice(0, width)
        mask[tuple(sl)] = True
        sl[ax] = slice(res - width, res)
        mask[tuple(sl)] = True
    return mask


def representation_check(f: GridFunction, stride: int = None) -> dict:
    """Reconstruct f from its gradient:
    f_i(x) = -(1/(d omega_d)) int <grad f_i(y), y - x> / |x-y|^d dy,
    reporting the max reconstruction error on a strided point set."""
    d = f.dim
    mag = np.linalg.norm(f.flat_values(), axis=1)
    top = mag.max()
    if top > 0 and mag[_boundary_mask(f).ravel()].max() > 1e-3 * top:
        raise SupportViolation("f does not vanish near the boundary")
    omega = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
    Df = jacobian(f)
    X = f.nodes()
    grads = Df.flat_values()  # (N, n, d)
    vol = f.cell_volume
    if stride is None:
        stride = max(1, f.resolution // 16)
    sel = np.arange(len(X)).reshape((f.resolution,) * d)
    sel = sel[(slice(None, None, stride),) * d].ravel()
    errs = []
    F = f.flat_values()
    for i in sel:
        diff = X[i][None, :] - X  # x - y
        r = np.linalg.norm(diff, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ker = diff / r[:, None] ** d
        ker[i] = 0.0  # diagonal cell: odd kernel, symmetric cell
        rec = np.einsum("mnd,md->n", grads, ker) * vol / (d * omega)
        errs.append(np.linalg.norm(rec - F[i]))
    max_err = float(np.max(errs))
    return {
        "max_error": max_err,
        "rel_error": max_err / top if top > 0 else 0.0,
        "points": len(sel),
        "resolution": f.resolution,
    }


def _weighted_power_mean(f_vals, w, X, p, power, cellvol, volume):
    (Ws,), _ = w.powers_at(X, [power])
    if f_vals.ndim == 2:
        mag = np.linalg.norm(np.einsum("mij,mj->mi", Ws, f_vals), axis=1)
    else:
        prod = np.einsum("mij,mjk->mik", Ws, f_vals)
        mag = np.linalg.norm(prod, ord=2, axis=(1, 2))
    return float((np.sum(mag**p) * cellvol / volume) ** (1.0 / p))


def poincare_ratio(w, p: float, eps: float, f: GridFunction,
                   q: Cube = None) -> InequalityReport:
    """lhs = ((1/|Q|) int |W^{1/p}(f - f_Q)|^{p+eps})^{1/(p+eps)};
    rhs = |Q|^{1/d} ((1/|Q|) int ||W^{1/p} Df||^{p-eps})^{1/(p-eps)};
    f_Q is the plain (unweighted) average."""
    if not 0.0 <= eps < p - 1.0:
        raise ExponentOutOfRange("need 0 <= eps < p - 1")
    q = q or f.base
    X = f.nodes()
    vol = float(q.volume)
    centered = f.flat_values() - f.mean()[None, :]
    lhs = _weighted_power_mean(
        centered, w, X, p + eps, 1.0 / p, f.cell_volume, vol
    )
    Df = jacobian(f)
    rhs = float(q.side) * _weighted_power_mean(
        Df.flat_values(), w, X, p - eps, 1.0 / p, f.cell_volume, vol
    )
    ratio = lhs / rhs if rhs > 0 else 0.0
    return InequalityReport(lhs, rhs, ratio, (p, eps), f"poincare:{q}",
                            predicted_constant_exponent(p))


def sobolev_ratio(w, p: float, eps: float, f: GridFunction,
                  q: Cube = None) -> InequalityReport:
    """As poincare_ratio but without mean subtraction; f must vanish
    near the cube boundary."""
    if not 0.0 <= eps < p - 1.0:
        raise ExponentOutOfRange("need 0 <= eps < p - 1")
    q = q or f.base
    mag = np.linalg.norm(f.flat_values(), axis=1)
    top = mag.max()
    if top > 0 and mag[_boundary_mask(f).ravel()].max() > 1e-3 * top:
        raise SupportViolation("f does not vanish near the cube boundary")
    X = f.nodes()
    vol = float(q.volume)
    lhs = _weighted_power_mean(
        f.flat_values(), w, X, p + eps, 1.0 / p, f.cell_volume, vol
    )
    Df = jacobian(f)
    rhs = float(q.side) * _weighted_power_mean(
        Df.flat_values(), w, X, p - eps, 1.0 / p, f.cell_volume, vol
    )
    ratio = lhs / rhs if rhs > 0 else 0.0
    return InequalityReport(lhs, rhs, ratio, (p, eps), f"sobolev:{q}",
                            predicted_constant_exponent(p))


def global_sobolev_ratio(w, p: float, f: GridFunction) -> dict:
    """||W^{1/q} f||_{L^q} / ||W^{1/q} Df||_{L^p} with 1/q = 1/p - 1/d."""
    d = f.dim
    if p >= d:
        raise ExponentOutOfRange("global inequality needs p < d")
    q_exp = 1.0 / (1.0 / p - 1.0 / d)
    mag = np.linalg.norm(f.flat_values(), axis=1)
    top = mag.max()
    if top > 0 and mag[_boundary_mask(f).ravel()].max() > 1e-3 * top:
        raise SupportViolation("f does not decay at the box boundary")
    num = f.weighted_lp_norm(q_exp, w, 1.0 / q_exp)
    den = jacobian(f).weighted_lp_norm(p, w, 1.0 / q_exp)
    return {
        "lhs": num,
        "rhs": den,
        "ratio": num / den if den > 0 else 0.0,
        "p": p,
        "q": q_exp,
    }


def _mask_indices(f: GridFunction, center, r_in: float, r_out: float):
    X = f.nodes()
    rr = np.linalg.norm(X - np.asarray(center, float)[None, :], axis=1)
    idx = np.nonzero((rr >= r_in) & (rr < r_out))[0]
    return idx


def annulus_mean_comparison(w, p: float, u: GridFunction, center,
                            r: float, a: np.ndarray,
                            char_value: float) -> dict:
    """Mean-vs-arbitrary-constant comparison on the annulus
    B_{r/2} minus B_{r/4}: lhs about the annulus mean, rhs about `a`,
    scaled by the truncated characteristic."""
    idx = _mask_indices(u, center, r / 4.0, r / 2.0)
    if len(idx) == 0:
        raise EmptyAnnulus("no lattice cells in the annulus")
    X = u.nodes()[idx]
    U = u.flat_values()[idx]
    u_b = U.mean(axis=0)
    (Ws,), _ = w.powers_at(X, [1.0 / p])
    lhs = float(np.mean(
        np.linalg.norm(np.einsum("mij,mj->mi", Ws, U - u_b), axis=1) ** p
    ))
    about_a = float(np.mean(
        np.linalg.norm(
            np.einsum("mij,mj->mi", Ws, U - np.asarray(a)[None, :]), axis=1
        ) ** p
    ))
    rhs = char_value * about_a
    return {"lhs": lhs, "rhs": rhs,
            "ratio": lhs / rhs if rhs > 0 else 0.0,
            "cells": len(idx)}


def annulus_poincare(w, p: float, u: GridFunction, center,
                     r: float) -> dict:
    """lhs = int over B_{r/2} minus B_{r/4} of |W^{1/p}(u - u_ann)|^p;
    rhs = r^p int over B_r minus B_{r/8} of ||W^{1/p} Du||^p."""
    ann = _mask_indices(u, center, r / 4.0, r / 2.0)
    big = _mask_indices(u, center, r / 8.0, r)
    if len(ann) == 0 or len(big) == 0:
        raise EmptyAnnulus("annulus rasterization is empty")
    X = u.nodes()
    U = u.flat_values()
    u_ann = U[ann].mean(axis=0)
    (Ws_a,), _ = w.powers_at(X[ann], [1.0 / p])
    lhs = float(np.sum(
        np.linalg.norm(
            np.einsum("mij,mj->mi", Ws_a, U[ann] - u_ann), axis=1
        ) ** p
    ) * u.cell_volume)
    Du = jacobian(u).flat_values()[big]
    (Ws_b,), _ = w.powers_at(X[big], [1.0 / p])
    prod = np.einsum("mij,mjk->mik", Ws_b, Du)
    rhs = float(r**p * np.sum(
        np.linalg.norm(prod, ord=2, axis=(1, 2)) ** p
    ) * u.cell_volume)
    return {"lhs": lhs, "rhs": rhs,
            "ratio": lhs / rhs if rhs > 0 else 0.0,
            "predicted_exponent": 2.0}
