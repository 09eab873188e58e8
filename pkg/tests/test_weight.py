"""Matrix weights: powers, averages, reducing operators, characteristics,
duality, and the power-weight admissibility dichotomy."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matweight.dyadic import Cube, CubeFamily
from matweight.errors import NotSymmetric, SingularPoint
from matweight.weight import (MatrixWeight, a2_trace, ap_characteristic,
                              apq_characteristic, apq_lattice,
                              average_weight, blm_is_a2, dual_weight,
                              matrix_power, reducing_pair)

import oracles


def scalar_power(gamma, a=1.0, d=1):
    return MatrixWeight("power_radial", d, 1, matrix=np.array([[a]]),
                        gamma=np.array([[gamma]]))


# -- pointwise evaluation ----------------------------------------------------

def test_constant_weight_evaluates_to_itself():
    C = np.array([[2.0, 1.0], [1.0, 3.0]])
    w = MatrixWeight("constant", 2, 2, matrix=C)
    X = np.array([[0.3, 0.4], [100.0, -5.0]])
    out = w.evaluate_many(X)
    assert np.allclose(out, C[None])


def test_scalar_sqrt_weight_value():
    w = scalar_power(0.5)
    assert np.isclose(w.evaluate_many(np.array([[4.0]]))[0, 0, 0], 2.0)


def test_power_radial_entrywise():
    A = np.eye(2)
    g = np.array([[1.0, 0.5], [0.5, 0.0]])
    w = MatrixWeight("power_radial", 2, 2, matrix=A, gamma=g)
    x = np.array([[1.0, 0.0]])  # |x| = 1
    raw = w.evaluate_many(x)[0]
    assert np.allclose(raw, [[1.0, 0.0], [0.0, 1.0]])
    # at |x| = 4 the entries are a_ij 4^{gamma_ij}
    raw = w.evaluate_many(np.array([[4.0, 0.0]]))[0]
    assert np.allclose(np.diag(raw), [4.0, 1.0])


def test_powers_at_flags_non_psd_points():
    # all-ones gamma structure with A = ones is PSD-degenerate pointwise
    w = MatrixWeight("power_radial", 2, 2, matrix=np.ones((2, 2)),
                     gamma=np.zeros((2, 2)))
    (W1,), flags = w.powers_at(np.array([[0.5, 0.5]]), [1.0])
    assert flags[0]  # rank-one matrix needed flooring
    assert np.all(np.linalg.eigvalsh(W1[0]) > 0)


def test_power_radial_singular_at_origin():
    w = scalar_power(0.5, d=2)
    with pytest.raises(SingularPoint):
        w.evaluate_many(np.array([[0.0, 0.0]]))


def test_power_axis_shape_check_and_value():
    g = np.zeros((2, 1, 1))
    g[0, 0, 0] = 1.0
    w = MatrixWeight("power_axis", 2, 1, matrix=np.eye(1), gamma=g)
    out = w.evaluate_many(np.array([[2.0, 5.0]]))
    assert np.isclose(out[0, 0, 0], 2.0)  # only |x_0| enters
    with pytest.raises(ValueError):
        MatrixWeight("power_axis", 2, 1, matrix=np.eye(1),
                     gamma=np.zeros((1, 1)))


def test_sampled_weight_symmetry_rejected():
    vals = np.zeros((4, 2, 2))
    vals[:] = np.eye(2)
    vals[0, 0, 1] = 1.0  # asymmetric
    with pytest.raises(NotSymmetric):
        MatrixWeight("sampled", 1, 2, base=Cube.unit(1), values=vals)


def test_sampled_weight_piecewise_constant_lookup():
    vals = np.stack([np.eye(2) * (k + 1) for k in range(4)])
    w = MatrixWeight("sampled", 1, 2, base=Cube.unit(1), values=vals)
    out = w.evaluate_many(np.array([[0.1], [0.9]]))
    assert np.allclose(out[0], np.eye(2) * 1.0)
    assert np.allclose(out[1], np.eye(2) * 4.0)


# -- matrix_power ------------------------------------------------------------

@given(seed=st.integers(0, 2**16), n=st.integers(1, 4),
       s=st.floats(0.1, 3.0))
@settings(max_examples=50, deadline=None)
def test_matrix_power_roundtrip_and_symmetry(seed, n, s):
    rng = np.random.Generator(np.random.Philox(key=seed))
    B = rng.standard_normal((n, n))
    M = B @ B.T + np.eye(n)  # well conditioned PSD
    P = matrix_power(M, s)
    assert np.allclose(P, P.T, atol=1e-10)
    back = matrix_power(P, 1.0 / s)
    assert np.allclose(back, M, rtol=1e-10, atol=1e-10)


def test_matrix_power_identity_is_fixed_point():
    assert np.allclose(matrix_power(np.eye(3), 0.37), np.eye(3))


# -- averages ----------------------------------------------------------------

def test_average_weight_constant_exact():
    C = np.array([[3.0, 1.0], [1.0, 2.0]])
    w = MatrixWeight("constant", 1, 2, matrix=C)
    assert np.allclose(average_weight(w, Cube.unit(1)), C)


def test_average_weight_scalar_power_closed_form():
    # avg of x^{1/2} on [0,1) is 2/3
    w = scalar_power(0.5)
    avg = average_weight(w, Cube.unit(1), quad=2**12)[0, 0]
    assert np.isclose(avg, 2.0 / 3.0, atol=1e-5)


# -- reducing operators ------------------------------------------------------

def test_reducing_pair_scalar_closed_form():
    w = scalar_power(0.5)
    q = Cube.unit(1)
    rp = reducing_pair(w, q, 2.0, 2.0, quad=2**10)
    # V ~ (avg w^{-1})^{1/2}, V' ~ (avg w)^{1/2}; avg x^{-1/2} = 2.
    # The midpoint rule sees the x^{-1/2} singularity at O(h^{1/2}).
    assert np.isclose(rp.v[0, 0], np.sqrt(2.0), atol=1e-2)
    assert np.isclose(rp.v_prime[0, 0], np.sqrt(2.0 / 3.0), atol=1e-4)
    assert rp.equivalence_slack == 1.0


def test_reducing_pair_matrix_p2_exact_form():
    rng = np.random.Generator(np.random.Philox(key=11))
    B = rng.standard_normal((2, 2))
    w = MatrixWeight("constant", 1, 2, matrix=B @ B.T + np.eye(2))
    rp = reducing_pair(w, Cube.unit(1), 2.0, 2.0)
    # for a constant weight V' = W^{1/2} and V = W^{-1/2}
    assert np.allclose(rp.v_prime, matrix_power(w.matrix, 0.5), atol=1e-9)
    assert np.allclose(rp.v, matrix_power(w.matrix, -0.5), atol=1e-9)


def test_reducing_method_matches_definition_for_scalars():
    # n=1: both reduce to avg(w) * avg(w^{-p'/q})^{q/p'} exactly
    fam = CubeFamily(Cube.box([-1.0], 1), 4)
    for gamma, p in ((0.5, 2.0), (-0.3, 1.5), (0.25, 3.0)):
        w = scalar_power(gamma)
        cd = apq_characteristic(w, p, p, fam, quad=16).value
        cr = apq_characteristic(w, p, p, fam, quad=16,
                                method="reducing").value
        assert np.isclose(cd, cr, rtol=1e-8)


def test_reducing_method_within_slack_band_for_matrices():
    rng = np.random.Generator(np.random.Philox(key=12))
    B = rng.standard_normal((2, 2))
    w = MatrixWeight("power_radial", 1, 2, matrix=B @ B.T + 2 * np.eye(2),
                     gamma=np.full((2, 2), 0.25))
    fam = CubeFamily(Cube.box([-1.0], 1), 3)
    cd = apq_characteristic(w, 2.0, 2.0, fam, quad=8).value
    cr = apq_characteristic(w, 2.0, 2.0, fam, quad=8,
                            method="reducing").value
    n = 2
    assert cr / n <= cd <= cr * n


# -- characteristics ---------------------------------------------------------

def test_identity_characteristics_are_one():
    for d in (1, 2):
        w = MatrixWeight("constant", d, 2, matrix=np.eye(2))
        fam = CubeFamily(Cube.unit(d), 3)
        for p in (1.5, 2.0, 3.0):
            assert abs(ap_characteristic(w, p, fam).value - 1.0) < 1e-8
        assert abs(apq_characteristic(w, 2.0, 3.0, fam).value - 1.0) < 1e-8
        assert abs(a2_trace(w, fam).value - 1.0) < 1e-8
        assert abs(a2_trace(w, fam, refine=True).value - 1.0) < 1e-8


def test_constant_weight_characteristic_is_one():
    C = np.array([[5.0, 2.0], [2.0, 1.0]])
    w = MatrixWeight("constant", 1, 2, matrix=C)
    fam = CubeFamily(Cube.unit(1), 4)
    assert abs(ap_characteristic(w, 2.0, fam).value - 1.0) < 1e-8


def test_scalar_oracle_agreement_sqrt_x():
    w = scalar_power(0.5)
    fam = CubeFamily(Cube.box([-1.0], 1), 6)
    got = apq_characteristic(w, 2.0, 2.0, fam, quad=8).value
    want = oracles.scalar_apq(
        lambda X: np.abs(X[:, 0]) ** 0.5, [-1.0], 2.0, 6, 2.0, 2.0, 8
    )
    assert np.isclose(got, want, rtol=1e-6)


@pytest.mark.parametrize("gamma,p,q", [
    (0.5, 2.0, 2.0),
    (-0.4, 1.5, 1.5),
    (0.3, 2.0, 3.0),
    (0.7, 3.0, 3.0),
])
def test_scalar_oracle_agreement_battery(gamma, p, q):
    w = scalar_power(gamma)
    fam = CubeFamily(Cube.box([-1.0], 1), 4)
    got = apq_characteristic(w, p, q, fam, quad=8).value
    want = oracles.scalar_apq(
        lambda X: np.abs(X[:, 0]) ** gamma, [-1.0], 2.0, 4, p, q, 8
    )
    assert np.isclose(got, want, rtol=1e-8)


def test_a2_trace_scalar_oracle_agreement():
    w = scalar_power(0.5)
    fam = CubeFamily(Cube.box([-1.0], 1), 5)
    got = a2_trace(w, fam, quad=8).value
    want = oracles.scalar_a2_trace(
        lambda X: np.abs(X[:, 0]) ** 0.5, [-1.0], 2.0, 5, 8
    )
    assert np.isclose(got, want, rtol=1e-10)


def test_characteristic_monotone_in_depth():
    w = scalar_power(0.6)
    base = Cube.box([-1.0], 1)
    prev = 0.0
    for K in range(0, 6):
        val = ap_characteristic(w, 2.0, CubeFamily(base, K), quad=8).value
        assert val >= prev - 1e-12
        prev = val


def test_a2_trace_sandwiched_by_ap2():
    rng = np.random.Generator(np.random.Philox(key=13))
    B = rng.standard_normal((2, 2))
    w = MatrixWeight("power_radial", 1, 2, matrix=B @ B.T + 2 * np.eye(2),
                     gamma=np.full((2, 2), 0.3))
    fam = CubeFamily(Cube.box([-1.0], 1), 3)
    tr = a2_trace(w, fam, quad=8).value
    ap = ap_characteristic(w, 2.0, fam, quad=8).value
    assert ap / w.n - 1e-10 <= tr <= ap + 1e-10


def test_scalar_direction_weight_dominated_by_matrix_char():
    # for each unit direction e the scalar weight |W^{1/2} e|^2 is A_2
    # with characteristic controlled by the matrix characteristic
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    g = np.array([[1.0, 0.5], [0.5, 0.0]])
    w = MatrixWeight("power_radial", 2, 2, matrix=A, gamma=g)
    fam = CubeFamily(Cube.box([-1.0, -1.0], 1), 3)
    cw = ap_characteristic(w, 2.0, fam, quad=4).value

    def scalar_dir(e):
        def fn(X):
            (Wq,), _ = w.powers_at(X, [0.5])
            return np.linalg.norm(Wq @ e, axis=1) ** 2
        return fn

    for e in (np.array([1.0, 0.0]), np.array([0.0, 1.0]),
              np.array([1.0, 1.0]) / np.sqrt(2.0)):
        cs = oracles.scalar_apq(
            scalar_dir(e), [-1.0, -1.0], 2.0, 3, 2.0, 2.0, 4
        )
        assert cs <= 4.0 * w.n * cw


# -- lattice-refined characteristics ----------------------------------------

def test_refined_a2_matches_per_cube_oracle():
    # the bottom-up aggregation must equal per-cube midpoint averages at
    # the matching effective resolution
    gamma = 0.5
    w = scalar_power(gamma)
    base = Cube.box([-1.0], 1)
    K, m = 3, 2
    got = a2_trace(w, CubeFamily(base, K), quad=m, refine=True).value
    best = -np.inf
    for j in range(K + 1):
        s = 2.0 / 2**j
        for i in range(2**j):
            X = oracles.cube_midpoints(
                np.array([-1.0 + i * s]), s, m * 2 ** (K - j), 1
            )
            wv = np.abs(X[:, 0]) ** gamma
            best = max(best, float(np.mean(wv) * np.mean(1.0 / wv)))
    assert np.isclose(got, best, rtol=1e-12)


def test_apq_lattice_matches_per_cube_oracle():
    gamma = -0.4
    w = scalar_power(gamma)
    base = Cube.box([-1.0], 1)
    K, m, p = 3, 2, 2.0
    got = apq_lattice(w, p, p, CubeFamily(base, K), quad=m).value
    best = -np.inf
    for j in range(K + 1):
        s = 2.0 / 2**j
        for i in range(2**j):
            best = max(best, oracles.scalar_apq(
                lambda X: np.abs(X[:, 0]) ** gamma,
                [-1.0 + i * s], s, 0, p, p, m * 2 ** (K - j),
            ))
    assert np.isclose(got, best, rtol=1e-10)


def test_apq_lattice_guards_size():
    w = scalar_power(0.5, d=2)
    with pytest.raises(ValueError):
        apq_lattice(w, 2.0, 2.0, CubeFamily(Cube.box([-1.0, -1.0], 1), 8),
                    quad=8)


def test_boundary_exponent_grows_monotonically():
    # gamma = d sits on the admissibility boundary: the truncated
    # characteristic increases strictly with depth (log-type divergence)
    w = scalar_power(1.0)
    base = Cube.box([-1.0], 1)
    vals = [
        apq_lattice(w, 2.0, 2.0, CubeFamily(base, K), quad=8).value
        for K in range(2, 9)
    ]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_supercritical_exponent_blows_up():
    # strictly above the boundary the growth is geometric: >10x K2->K8
    w = scalar_power(2.0)
    base = Cube.box([-1.0], 1)
    v2 = apq_lattice(w, 2.0, 2.0, CubeFamily(base, 2), quad=8).value
    v8 = apq_lattice(w, 2.0, 2.0, CubeFamily(base, 8), quad=8).value
    assert v8 > 10.0 * v2


def test_admissible_exponent_plateaus():
    w = scalar_power(0.5)
    base = Cube.box([-1.0], 1)
    v6 = apq_lattice(w, 2.0, 2.0, CubeFamily(base, 6), quad=8).value
    v8 = apq_lattice(w, 2.0, 2.0, CubeFamily(base, 8), quad=8).value
    assert v8 / v6 < 1.5


# -- duality -----------------------------------------------------------------

def test_dual_weight_scalar_negates_exponent():
    w = scalar_power(0.5)
    dw = dual_weight(w, 2.0, 2.0)
    assert dw.kind == "power_radial"
    assert np.isclose(dw.gamma[0, 0], -0.5)
    x = np.array([[4.0]])
    assert np.isclose(dw.evaluate_many(x)[0, 0, 0], 0.5)


def test_dual_weight_constant_identity():
    w = MatrixWeight("constant", 1, 2, matrix=np.eye(2))
    dw = dual_weight(w, 2.0, 2.0)
    assert np.allclose(dw.matrix, np.eye(2))


def test_dual_weight_sampled_inverts_pointwise():
    vals = np.stack([np.diag([1.0, 4.0]), np.diag([2.0, 8.0])])
    w = MatrixWeight("sampled", 1, 2, base=Cube.unit(1), values=vals)
    dw = dual_weight(w, 2.0, 2.0)
    out = dw.evaluate_many(np.array([[0.1]]))
    assert np.allclose(out[0], np.diag([1.0, 0.25]), rtol=1e-8)


def test_duality_log_ratio_band():
    rng = np.random.Generator(np.random.Philox(key=14))
    fam = CubeFamily(Cube.box([-1.0], 1), 4)
    p, q = 2.0, 2.0
    pprime = p / (p - 1.0)
    for _ in range(5):
        gamma = float(rng.uniform(0.2, 0.7))
        w = scalar_power(gamma)
        cw = apq_characteristic(w, p, q, fam, quad=8).value
        cd = apq_characteristic(
            dual_weight(w, p, q), q / (q - 1.0), pprime, fam, quad=8
        ).value
        lr = np.log(cd) / np.log(cw)
        assert 0.25 * pprime / q <= lr <= 4.0 * pprime / q


# -- admissibility test ------------------------------------------------------

def test_blm_zero_gamma_is_admissible():
    assert blm_is_a2(np.eye(2), np.zeros((2, 2)), "radial", 2)


def test_blm_radial_example_true():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    g = np.array([[1.0, 0.5], [0.5, 0.0]])
    assert blm_is_a2(A, g, "radial", 2)


def test_blm_off_diagonal_mean_violation_false():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    g = np.array([[1.0, 0.4], [0.4, 0.0]])
    assert not blm_is_a2(A, g, "radial", 2)


def test_blm_diagonal_range():
    A = np.eye(2)
    g = np.array([[2.0, 1.0], [1.0, 0.0]])
    assert not blm_is_a2(A, g, "radial", 2)  # gamma_11 = d = 2
    assert blm_is_a2(A, g * 0.9, "radial", 2)


def test_blm_axis_variant_unit_range():
    A = np.eye(2)
    g = np.zeros((2, 2, 2))
    g[0] = [[0.5, 0.25], [0.25, 0.0]]
    assert blm_is_a2(A, g, "axis", 2)
    g[0, 0, 0] = 1.0
    g[0, 0, 1] = g[0, 1, 0] = 0.5
    assert not blm_is_a2(A, g, "axis", 2)


def test_blm_non_psd_frame_false():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])  # indefinite
    assert not blm_is_a2(A, np.zeros((2, 2)), "radial", 2)
