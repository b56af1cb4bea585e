import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from voltvar.conic import (ConeBlock, ConicError, ConicProgram, ConicSettings, cone_violation,
                           kkt_residuals, planted_program, solve_conic)

SQ2 = np.sqrt(2.0)


def prog(c, A, b, cones):
    return ConicProgram(np.array(c, float), sp.csr_matrix(np.array(A, float)), np.array(b, float), cones)


def soc_case():
    # min t  s.t. (t, 1, 1) in SOC  ->  t = sqrt(2)
    return prog([1, 0, 0], [[0, 1, 0], [0, 0, 1]], [1, 1], [("soc", 3)])


def rsoc_case():
    # min a + b  s.t. 2ab >= 1  ->  a = b = 1/sqrt(2)
    return prog([1, 1, 0], [[0, 0, 1]], [1], [("rsoc", 3)])


def test_soc_analytic():
    sol = solve_conic(soc_case())
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(SQ2, abs=1e-8)
    assert sol.objective == pytest.approx(SQ2, abs=1e-8)
    assert max(sol.residuals) <= 1e-8


def test_rsoc_analytic():
    sol = solve_conic(rsoc_case())
    assert sol.status == "optimal"
    np.testing.assert_allclose(sol.x, [1 / SQ2, 1 / SQ2, 1], atol=1e-8)
    assert sol.objective == pytest.approx(SQ2, abs=1e-8)


def rsoc_boundary_case():
    # min u  s.t. (u, v, w) in RSOC, v = 1, w = 2  ->  u = 2
    return prog([1, 0, 0], [[0, 1, 0], [0, 0, 1]], [1, 2], [("rsoc", 3)])


def test_rsoc_boundary():
    sol = solve_conic(rsoc_boundary_case())
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(2.0, abs=1e-8)
    assert sol.objective == pytest.approx(2.0, abs=1e-8)


def test_lp_analytic():
    sol = solve_conic(prog([1, 2], [[1, 1]], [1], [("nonneg", 2)]))
    assert sol.status == "optimal"
    np.testing.assert_allclose(sol.x, [1, 0], atol=1e-8)


def test_free_and_mixed():
    # min -y + t  s.t. y - u = 0, (t, u) in SOC with free y, bounded by t - 2 = slack
    p = prog([-1, 1, 0, 0], [[1, 0, -1, 0], [0, 1, 0, 1]], [0, 2],
             [("free", 1), ("soc", 2), ("nonneg", 1)])
    sol = solve_conic(p)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(0.0, abs=1e-7)
    assert cone_violation(p, sol.x).max() <= 1e-9


def test_infeasible():
    sol = solve_conic(prog([1, 1], [[1, 1]], [-1], [("nonneg", 2)]))
    assert sol.status == "infeasible"


def test_unbounded():
    sol = solve_conic(prog([-1, 0], [[1, -1]], [0], [("nonneg", 2)]))
    assert sol.status == "unbounded"


def test_soc_infeasible():
    # t <= 1 via slack while (t, 2) must be in SOC
    p = prog([0, 0, 0, 0], [[0, 1, 0, 0], [1, 0, 1, 0]], [2, 1],
             [("soc", 2), ("nonneg", 1), ("free", 1)])
    assert solve_conic(p).status == "infeasible"


def test_settings_not_mutated():
    s = ConicSettings()
    solve_conic(soc_case(), s, tol=1e-6)
    assert s.tol == 1e-8


def test_max_iter_status():
    sol = solve_conic(soc_case(), max_iter=1)
    assert sol.status == "max_iter"


def test_malformed():
    with pytest.raises(ConicError):
        ConeBlock("psd", 3)
    with pytest.raises(ConicError):
        ConeBlock("rsoc", 2)
    with pytest.raises(ConicError):
        prog([1, 0], [[1, 1]], [1], [("soc", 3)])
    with pytest.raises(ConicError):
        prog([np.inf, 0], [[1, 1]], [1], [("nonneg", 2)])


def test_cone_violation():
    p = prog([0] * 9, np.zeros((1, 9)), [0], [("nonneg", 2), ("soc", 3), ("rsoc", 3), ("free", 1)])
    x = np.array([1, -0.5, 1, 0.6, 0.8, 1, 1, 1.5, -9])
    v = cone_violation(p, x)
    np.testing.assert_allclose(v, [0.5, 0.0, 0.25, 0.0])


def test_planted_guards():
    rng = np.random.default_rng(0)
    with pytest.raises(ConicError):
        planted_program(rng, [("free", 3)], 5)
    with pytest.raises(ConicError):
        planted_program(rng, [("free", 3), ("soc", 3)], 3)


def test_kkt_at_plant_is_exact():
    rng = np.random.default_rng(7)
    p, xs, ys, zs = planted_program(rng, [("nonneg", 4), ("soc", 3), ("rsoc", 4), ("free", 2)], 6)

    class Pair:
        x, y, z = xs, ys, zs
    assert max(kkt_residuals(p, Pair)) <= 1e-12
    assert cone_violation(p, xs).max() <= 1e-12
    assert cone_violation(p, zs).max() <= 1e-12
    assert abs(xs @ zs) <= 1e-12


def test_primal_residual_linear_in_perturbation():
    rng = np.random.default_rng(8)
    p, xs, ys, zs = planted_program(rng, [("nonneg", 3), ("soc", 4), ("rsoc", 3)], 5)
    k = 4
    col = np.linalg.norm(p.A[:, k].toarray())

    class Pair:
        y, z = ys, zs
    for delta in (1e-6, 1e-3, 1e-1):
        Pair.x = xs.copy()
        Pair.x[k] += delta
        pf = kkt_residuals(p, Pair)[0]
        assert pf == pytest.approx(col * delta / (1 + np.linalg.norm(p.b)), rel=1e-8)


def random_cones(rng, n_target):
    """Mixed blocks totalling at least ``n_target`` variables, plus a valid row count."""
    cones, n, nf = [("soc", 3)], 3, 0
    while n < n_target:
        kind = ["nonneg", "soc", "rsoc", "free"][rng.integers(4)]
        d = {"nonneg": rng.integers(1, 6), "soc": rng.integers(2, 6),
             "rsoc": rng.integers(3, 6), "free": 1}[kind]
        cones.append((kind, int(d)))
        n += d
        nf += kind == "free"
    return cones, n, int(rng.integers(nf + 1, n))


@pytest.mark.parametrize("seed", range(10))
def test_planted_recovered(seed):
    rng = np.random.default_rng(seed)
    cones, n, m = random_cones(rng, int(rng.integers(10, 80)))
    p, xs, ys, zs = planted_program(rng, cones, m)
    sol = solve_conic(p)
    assert sol.status == "optimal"
    assert max(kkt_residuals(p, sol)) <= 1e-7
    assert sol.objective == pytest.approx(p.c @ xs, abs=1e-6 * (1 + abs(p.c @ xs)))


def test_scaling_invariance():
    rng = np.random.default_rng(11)
    p, xs, *_ = planted_program(rng, [("soc", 4), ("rsoc", 3), ("nonneg", 3)], 5)
    base = solve_conic(p)
    scaled_c = solve_conic(ConicProgram(10 * p.c, p.A, p.b, p.cones))
    assert scaled_c.objective == pytest.approx(10 * base.objective, rel=1e-6, abs=1e-6)
    for case in (soc_case(), rsoc_case(), rsoc_boundary_case()):
        for k in (1e-3, 7.0, 1e3):
            scaled = ConicProgram(k * case.c, case.A, case.b, case.cones)
            np.testing.assert_allclose(solve_conic(scaled).x, solve_conic(case).x, atol=1e-7)
    # row scaling leaves the primal problem unchanged
    D = sp.diags(rng.uniform(0.1, 10, p.m))
    row = solve_conic(ConicProgram(p.c, D @ p.A, D @ p.b, p.cones))
    assert row.objective == pytest.approx(base.objective, rel=1e-6, abs=1e-6)


def test_weak_duality_at_solution():
    rng = np.random.default_rng(5)
    for _ in range(5):
        p, *_ = planted_program(rng, [("soc", 3), ("nonneg", 4), ("rsoc", 4)], 4)
        sol = solve_conic(p)
        assert cone_violation(p, sol.x).max() <= 1e-9
        assert cone_violation(p, sol.z).max() <= 1e-9
        assert sol.x @ sol.z >= -1e-9
        assert p.c @ sol.x - p.b @ sol.y >= -10 * 1e-8


def test_presolve_drops_duplicate_rows():
    A = [[0, 1, 0], [0, 0, 1], [0, 2, 0]]
    sol = solve_conic(prog([1, 0, 0], A, [1, 1, 2], [("soc", 3)]))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(SQ2, abs=1e-8)


@settings(max_examples=15)
@given(st.integers(0, 2**31 - 1))
def test_planted_property(seed):
    rng = np.random.default_rng(seed)
    cones, n, m = random_cones(rng, int(rng.integers(5, 40)))
    p, xs, *_ = planted_program(rng, cones, m)
    sol = solve_conic(p)
    assert sol.status == "optimal"
    assert max(sol.residuals) <= 1e-7
