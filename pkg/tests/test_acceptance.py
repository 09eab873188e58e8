"""Full-size acceptance battery: closed forms, oracle equivalence,
dichotomies, invariants, convergence orders, and artifact determinism."""

import time

import numpy as np
import pytest

from matweight import analysis, battery, cli, operators, pde, sparse, weight
from matweight.dyadic import Cube, CubeFamily
from matweight.grid import GridFunction
from matweight.weight import MatrixWeight

import oracles


def _scalar_fn(w):
    a = float(w.matrix[0, 0])
    gamma = float(w.gamma[0, 0])
    return lambda X: a * np.linalg.norm(X, axis=1) ** gamma


# 1 -------------------------------------------------------------------------

def test_identity_weight_characteristics_are_one():
    t0 = time.perf_counter()
    for d in (1, 2):
        fam = CubeFamily(Cube.unit(d), 6)
        wI = MatrixWeight("constant", d, 2, matrix=np.eye(2))
        for p in (1.5, 2.0, 3.0):
            assert abs(weight.ap_characteristic(wI, p, fam).value - 1.0) \
                < 1e-8
        assert abs(weight.apq_characteristic(wI, 2.0, 3.0, fam).value
                   - 1.0) < 1e-8
        assert abs(weight.a2_trace(wI, fam).value - 1.0) < 1e-8
    assert time.perf_counter() - t0 < 10.0


# 2 -------------------------------------------------------------------------

def test_scalar_oracle_equivalence():
    t0 = time.perf_counter()
    base = Cube.unit(1)
    fam = CubeFamily(base, 4)
    f_char = GridFunction.from_callable(
        base, 32, lambda X: np.sin(3.0 * X[:, 0:1])
    )
    f_poin = GridFunction.from_callable(
        base, 128, lambda X: np.cos(2.0 * X[:, 0:1]) + X[:, 0:1]
    )
    for w in battery.random_scalar_power_weights(5, 1, seed=42):
        w_fn = _scalar_fn(w)
        # characteristic
        got = weight.ap_characteristic(w, 2.0, fam, quad=8).value
        want = oracles.scalar_apq(w_fn, [0.0], 1.0, 4, 2.0, 2.0, 8)
        assert np.isclose(got, want, rtol=1e-6)
        # maximal operator
        Mf = operators.maximal(
            w, 0.0, 2.0, 2.0, f_char, CubeFamily(base, 3)
        )
        want_m = oracles.scalar_maximal(
            w_fn, 0.0, 2.0, f_char.values[:, 0], [0.0], 1.0, 3
        )
        assert np.allclose(Mf.flat_values()[:, 0], want_m, rtol=1e-6)
        # Poincare ratio
        rep = analysis.poincare_ratio(w, 2.0, 0.2, f_poin)
        lhs, rhs = oracles.scalar_poincare(
            w_fn, 2.0, 0.2, f_poin.values[:, 0], [0.0], 1.0
        )
        assert np.isclose(rep.lhs, lhs, rtol=1e-6)
        assert np.isclose(rep.rhs_without_c, rhs, rtol=1e-6)
    assert time.perf_counter() - t0 < 60.0


# 3 -------------------------------------------------------------------------

def test_blm_dichotomy_truncation_growth():
    t0 = time.perf_counter()
    base = Cube.box((-1.0, -1.0), 1)
    for gammas in battery.blm_gamma_grid(2, 5):
        admissible = weight.blm_is_a2(battery._BLM_A, gammas, "radial", 2)
        w = MatrixWeight("power_radial", 2, 2, matrix=battery._BLM_A,
                         gamma=gammas)
        vals = {}
        for K in (6, 8):
            vals[K] = weight.a2_trace(
                w, CubeFamily(base, K), quad=4, refine=True
            ).value
        growth = vals[8] / vals[6]
        if admissible:
            assert growth < 1.5, (gammas, growth)
        else:
            assert growth > 2.0, (gammas, growth)
    assert time.perf_counter() - t0 < 300.0


# 4 -------------------------------------------------------------------------

def test_duality_log_ratio_band():
    p, q = 2.0, 3.0
    pp, qp = p / (p - 1.0), q / (q - 1.0)
    fam = CubeFamily(Cube.unit(1), 4)
    s = pp / q
    for w in battery.random_power_weights(10, 1, 2, seed=7):
        ch = weight.apq_characteristic(w, p, q, fam, quad=8).value
        dual = weight.dual_weight(w, p, q)
        ch_dual = weight.apq_characteristic(dual, qp, pp, fam,
                                            quad=8).value
        ratio = np.log(ch_dual) / np.log(ch)
        assert 0.5 * s <= ratio <= 2.0 * s


# 5 -------------------------------------------------------------------------

def test_sparse_invariants_twenty_instances():
    root = Cube.unit(1)
    weights = battery.random_scalar_power_weights(4, 1, seed=11)
    fns = battery.function_battery(root, 64, 1, seed=11)[:5]
    checked = 0
    for w in weights:
        for f in fns:
            fam = sparse.stopping_family(w, f, root, 2.0, depth=5, quad=8)
            seen = set()
            for cubes in fam.levels.values():
                for q in cubes:
                    assert q not in seen  # S^k pairwise disjoint
                    seen.add(q)
            used = set()
            for q in fam.selected():
                core = set(fam.cores[q].tolist())
                assert not (core & used)  # cores disjoint
                used |= core
                side_cells = round(float(q.side) * fam.resolution)
                assert 2 * len(core) >= side_cells  # |E_Q| >= |Q|/2
            checked += 1
    assert checked == 20


# 6 -------------------------------------------------------------------------

def test_heavy_function_single_constant():
    root = Cube.box([-1.0], 1)
    fam = CubeFamily(root, 4)
    ratios = []
    for w in battery.random_scalar_power_weights(6, 1, seed=5):
        hf = sparse.heavy_function(w, root, 2.0, 4, quad=8)
        ch = weight.ap_characteristic(w, 2.0, fam, quad=8).value
        ratios.append(sparse.heavy_integral_check(hf, ch)["ratio"])
    for w in battery.blm_a2_battery(1, 5)[:4]:
        hf = sparse.heavy_function(w, root, 2.0, 4, quad=8)
        ch = weight.ap_characteristic(w, 2.0, fam, quad=8).value
        ratios.append(sparse.heavy_integral_check(hf, ch)["ratio"])
    assert max(ratios) / min(ratios) < 50.0


# 7 -------------------------------------------------------------------------

def test_weak_type_single_constant_battery():
    base = Cube.box([-1.0], 1)
    fam = CubeFamily(base, 4)
    w = MatrixWeight("power_radial", 1, 1, matrix=np.eye(1),
                     gamma=np.array([[0.5]]))
    lam = np.geomspace(1e-2, 1e2, 20)
    constants = []
    for f in battery.function_battery(base, 64, 1, seed=3)[:4]:
        out = operators.weak_type_check(w, 0.0, 2.0, 2.0, f, lam, fam)
        assert len(out["rows"]) == 20
        assert all(r["ratio"] <= out["C"] + 1e-15 for r in out["rows"])
        constants.append(out["C"])
    assert all(np.isfinite(c) and c > 0 for c in constants)


# 8 -------------------------------------------------------------------------

def test_riesz_closed_form_and_order():
    errs = {}
    for k in (10, 11, 12):
        f = GridFunction.from_callable(
            Cube.unit(1), 2**k, lambda X: np.ones((len(X), 1))
        )
        out = operators.riesz(0.5, f).flat_values()[:, 0]
        x = f.nodes()[:, 0]
        errs[k] = float(np.abs(out - oracles.riesz_halfline(x)).max())
    assert errs[12] < 1e-4
    orders = [np.log2(errs[k] / errs[k + 1]) for k in (10, 11)]
    assert min(orders) >= 1.0


# 9 -------------------------------------------------------------------------

def test_poincare_closed_form_and_weighted_slope():
    f = GridFunction.from_callable(Cube.unit(1), 2**12,
                                   lambda X: X[:, 0:1])
    wI = MatrixWeight("constant", 1, 1, matrix=np.eye(1))
    rep = analysis.poincare_ratio(wI, 2.0, 0.0, f)
    assert abs(rep.ratio - 1.0 / np.sqrt(12.0)) < 1e-4

    fam = CubeFamily(Cube.unit(1), 4)
    g = GridFunction.from_callable(Cube.unit(1), 256,
                                   lambda X: np.sin(3.0 * X[:, 0:1]))
    chars, ratios = [], []
    for w in battery.random_scalar_power_weights(6, 1, seed=9,
                                                 margin=0.05):
        chars.append(weight.ap_characteristic(w, 2.0, fam, quad=8).value)
        ratios.append(analysis.poincare_ratio(w, 2.0, 0.0, g).ratio)
    assert all(np.isfinite(r) and r > 0 for r in ratios)
    slope = np.polyfit(np.log(chars), np.log(ratios), 1)[0]
    assert slope <= 3.5


# 10 ------------------------------------------------------------------------

def test_pde_convergence_and_degenerate_benchmark():
    def exact(X):
        return (np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1]))[:, None]

    def source(X):
        gx = np.pi * np.cos(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])
        gy = np.pi * np.sin(np.pi * X[:, 0]) * np.cos(np.pi * X[:, 1])
        return -np.stack([gx, gy], axis=1)[:, None, :]

    errs = {}
    for res in (2**7, 2**8):
        t0 = time.perf_counter()
        sol = pde.solve_linear(pde.EllipticProblem(
            Cube.unit(2), res, n=1,
            decoupled=lambda X: np.ones((len(X), 1, 1)),
            boundary=exact, source=source,
        ))
        assert time.perf_counter() - t0 < 120.0
        errs[res] = np.abs(
            sol.values.reshape(-1, 1) - exact(sol.vertex_nodes())
        ).max()
    order = np.log2(errs[2**7] / errs[2**8])
    assert 1.7 <= order <= 2.3

    # harmonic polynomial: nodally exact
    sol_h = pde.solve_linear(pde.EllipticProblem(
        Cube.box((-1.0, -1.0), 1), 2**6, n=1,
        decoupled=lambda X: np.ones((len(X), 1, 1)),
        boundary=lambda X: (X[:, 0] ** 2 - X[:, 1] ** 2)[:, None],
    ))
    Xh = sol_h.vertex_nodes()
    assert np.abs(
        sol_h.values.reshape(-1) - (Xh[:, 0] ** 2 - Xh[:, 1] ** 2)
    ).max() < 1e-9

    # degenerate 1d closed form at 2^10
    def harm(low, h):
        x0 = np.clip(low[:, 0], 0.0, None)
        x1 = x0 + h
        return (h / (2.0 * (np.sqrt(x1) - np.sqrt(x0))))[:, None, None]

    t0 = time.perf_counter()
    sol_d = pde.solve_linear(pde.EllipticProblem(
        Cube.unit(1), 2**10, n=1, cell_coefficient=harm,
        boundary=lambda X: np.clip(X[:, 0:1], 0.0, None) ** 0.5,
    ))
    assert time.perf_counter() - t0 < 120.0
    xv = sol_d.vertex_nodes()[:, 0]
    assert np.abs(sol_d.values[:, 0] - np.sqrt(xv)).max() < 1e-3


# 11 / 12 -------------------------------------------------------------------

def _weighted_solution(w, res):
    base = Cube.box((-1.0, -1.0), 1)
    return pde.solve_linear(pde.EllipticProblem(
        base, res, n=1,
        decoupled=lambda X: w.evaluate_many(X), weight=w,
        boundary=lambda X: (X[:, 0] ** 2 - X[:, 1] ** 2)[:, None],
    ))


def test_caccioppoli_weight_independence():
    base = Cube.box((-1.0, -1.0), 1)
    fam = CubeFamily(base, 6)
    chars, ratios = [], []
    for w in battery.random_scalar_power_weights(6, 2, seed=13,
                                                 margin=0.05):
        chars.append(weight.a2_trace(w, fam, quad=2, refine=True).value)
        sol = _weighted_solution(w, 2**6)
        ratios.append(pde.caccioppoli_check(sol, (0.0, 0.0), 0.8)["ratio"])
    slope = np.polyfit(np.log(chars), np.log(ratios), 1)[0]
    assert -0.5 <= slope <= 0.5


def test_meyers_gain_and_refinement_stability():
    w = battery.random_scalar_power_weights(6, 2, seed=13, margin=0.05)[1]
    qmax = {}
    for res in (2**6, 2**7):
        sol = _weighted_solution(w, res)
        rep = pde.meyers_exponent(sol, (0.0, 0.0), 0.8)
        assert rep["q_max"] > 2.0
        qmax[res] = rep["q_max"]
    assert abs(qmax[2**7] - qmax[2**6]) <= 0.1 * qmax[2**6]


# 13 ------------------------------------------------------------------------

def test_plaplace_benchmarks():
    # affine minimizer from a random start
    prob = pde.EllipticProblem(Cube.unit(1), 2**6, n=1, metric=np.eye(1),
                               p=4.0, boundary=lambda X: X[:, 0:1])
    rng = battery.rng_for(17, stream=1)
    sol = pde.solve_plaplace(prob, initial=rng.standard_normal(2**6 + 1))
    assert np.abs(
        sol.values[:, 0] - sol.vertex_nodes()[:, 0]
    ).max() < 1e-6
    for run in (sol,):
        E = run.log[0]["energies"]
        assert all(b <= a + 1e-12 * max(1.0, abs(a))
                   for a, b in zip(E, E[1:]))

    # radial p-harmonic profile on an annulus
    def exact(X):
        return (np.linalg.norm(X, axis=1) ** (2.0 / 3.0))[:, None]

    def mask(X):
        r = np.linalg.norm(X, axis=1)
        return (r > 0.25) & (r < 0.95)

    prob_r = pde.EllipticProblem(Cube.box((-1.0, -1.0), 1), 2**5, n=1,
                                 metric=np.eye(2), p=4.0, boundary=exact,
                                 domain_mask=mask)
    sol_r = pde.solve_plaplace(prob_r)
    E = sol_r.log[0]["energies"]
    assert all(b <= a + 1e-12 * max(1.0, abs(a))
               for a, b in zip(E, E[1:]))
    th = np.linspace(0.0, 2.0 * np.pi, 120, endpoint=False)
    for r in (0.4, 0.55, 0.7):
        P = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        assert np.abs(sol_r.evaluate(P) - exact(P)).max() < 1e-2
    # nonlinear Meyers gain above p
    rep = pde.meyers_exponent(sol_r, (0.55, 0.0), 0.25)
    assert rep["q_max"] > 4.0


# 14 ------------------------------------------------------------------------

def test_suite_acceptance_byte_identical(tmp_path, capsys):
    payloads = []
    for name in ("run1", "run2"):
        out_dir = tmp_path / name
        code = cli.main(["suite", "acceptance", "--fast", "--seed", "0",
                         "--out-dir", str(out_dir)])
        assert code == 0
        payloads.append((out_dir / "acceptance.csv").read_bytes())
    capsys.readouterr()
    assert payloads[0] == payloads[1]
