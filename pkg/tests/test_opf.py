import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from conftest import five_bus_feeder, two_bus_feeder
from voltvar.conic import ConicSettings
from voltvar.distflow import cvr_weights, objective_terms, sweep_solve
from voltvar.feeder import FeederError, InverterSpec, path_feeder
from voltvar.opf import (OpfConfig, Scenario, assemble_socp, check_exactness, cross_validate,
                         scenario_injections, solve_opf)


def test_two_bus_no_inverter_layout():
    m = path_feeder(2, 0.01, 0.02, loads={2: 1.0})
    prog, vmap = assemble_socp(m, Scenario())
    # physical variables P, Q, ell, nu_1, nu_2
    assert len(vmap.all_slots()) == 5
    assert prog.count("rsoc") == 1 and prog.count("soc") == 0
    # three DistFlow rows, one cone copy of nu_1, the root pin and two nu bound rows
    assert prog.m == 3 + 1 + 1 + 2
    assert prog.count("nonneg") == 2


def test_bundled_layout(sce56):
    prog, vmap = assemble_socp(sce56, Scenario.physical(sce56, pv_mw=4.0))
    assert prog.count("rsoc") == 55 + 1
    assert prog.count("soc") == 1
    assert len(vmap.ell) == 55 and list(vmap.q_g) == [45]


def test_var_box(sce56):
    prog, vmap = assemble_socp(sce56, Scenario.physical(sce56, pv_mw=4.0))
    qbar = np.sqrt(5.5**2 - 4.0**2)
    assert qbar == pytest.approx(3.775, abs=5e-4)
    A = prog.A.tocsr()
    j = vmap.q_g[45]
    rows = [i for i in range(prog.m) if A[i, j] != 0 and A[i].nnz == 2 and abs(prog.b[i]) > 1]
    assert sorted(prog.b[rows]) == pytest.approx([-qbar, qbar])


def test_pv_over_rating_rejected(sce56):
    with pytest.raises(FeederError):
        assemble_socp(sce56, Scenario.physical(sce56, pv_mw=6.0))


def test_scenario_validation(sce56):
    with pytest.raises(ValueError):
        Scenario(power_factor=0.0)
    with pytest.raises(ValueError):
        Scenario(load_scale=-1)
    with pytest.raises(FeederError):
        scenario_injections(sce56, Scenario(pv_output={2: 0.5}))
    with pytest.raises(FeederError):
        scenario_injections(sce56, Scenario(cap_states={2: True}))


def test_zero_case():
    m = path_feeder(3, 0.01, 0.02, inverters={3: InverterSpec(1.0)})
    cfg = OpfConfig(drop_standby=True)
    sol = solve_opf(m, Scenario(load_scale=0.0), cfg)
    assert sol.optimal
    assert sol.q_g_star[3] == pytest.approx(0.0, abs=1e-7)
    assert sol.costs.total == pytest.approx(0.0, abs=1e-7)
    np.testing.assert_allclose(sol.state.nu, 1.0, atol=1e-7)
    assert sol.tightness.passed
    cv = cross_validate(m, Scenario(load_scale=0.0), sol, config=cfg)
    assert cv.consistent
    assert abs(cv.sweep_objective) <= 1e-7 and abs(cv.socp_objective) <= 1e-7


def test_zero_flow_gaps_are_zero():
    m = path_feeder(3, 0.01, 0.02)
    sol = solve_opf(m, Scenario(load_scale=0.0))
    ref = sweep_solve(m, scenario_injections(m, Scenario(load_scale=0.0)))
    hand = replace(sol, state=ref)
    rep = check_exactness(hand)
    assert np.all(rep.line_gaps == 0) and rep.max_relative_gap == 0


def test_bundled_exact_and_consistent(sce56):
    for load, pv in [(0.2, 2.5), (0.6, 0.0), (1.0, 5.0)]:
        scen = Scenario.physical(sce56, load, 0.9, pv)
        sol = solve_opf(sce56, scen)
        assert sol.optimal and sol.tightness.passed
        cv = cross_validate(sce56, scen, sol)
        assert cv.consistent, cv.message
        assert cv.objective_rel_diff <= 1e-6


def test_inflated_ell_fails_exactness(sce56):
    sol = solve_opf(sce56, Scenario.physical(sce56, 0.5, 0.9, 1.0))
    ell = sol.state.ell.copy()
    ell[10] += 0.1
    hand = replace(sol, state=replace(sol.state, ell=ell))
    rep = check_exactness(hand)
    assert not rep.passed
    assert rep.worst == ("line", 10)


def test_check_exactness_needs_topology(sce56):
    sol = solve_opf(sce56, Scenario.physical(sce56, 0.5))
    bare = replace(sol, line_from=None)
    with pytest.raises(ValueError):
        check_exactness(bare)
    assert check_exactness(bare, model=sce56).passed


def test_loose_tolerance_shows_mismatch(sce56):
    scen = Scenario.physical(sce56, 0.2, 0.9, 2.5)
    cfg = OpfConfig(conic=ConicSettings(tol=1e-3, presolve=False), tightness_tol=1.0)
    sol = solve_opf(sce56, scen, cfg)
    cv = cross_validate(sce56, scen, sol, 1e-6, cfg)
    assert not cv.consistent and "mismatch" in cv.message
    assert 1e-6 < cv.objective_rel_diff < 1e-2


def test_retry_on_loose_tolerance(sce56):
    scen = Scenario.physical(sce56, 0.2, 0.9, 2.5)
    cfg = OpfConfig(conic=ConicSettings(tol=1e-5, presolve=False))
    sol = solve_opf(sce56, scen, cfg)
    assert sol.retried and sol.tightness.passed
    assert cfg.conic.tol == 1e-5


def test_infeasible_voltage_band(sce56):
    tight = sce56.with_voltage_tolerance(0.01)
    sol = solve_opf(tight, Scenario.physical(tight, 1.0, 0.9, 0.0, cap_states={
        b: False for b in tight.capacitor_buses}))
    assert sol.status == "infeasible"
    assert not cross_validate(tight, Scenario(), sol).consistent


def _heuristic_cost(model, scen, q, cfg=OpfConfig()):
    inj = scenario_injections(model, scen, q)
    st_ = sweep_solve(model, inj, scen.v_root)
    v = st_.voltage
    inside = all(b.v_min - 1e-12 <= v[k] <= b.v_max + 1e-12 for k, b in enumerate(model.buses))
    out = {b: (scen.pv_output.get(b, 0.0), q.get(b, 0.0)) for b in model.inverter_buses}
    return objective_terms(model, st_, out, cvr_weights(model, inj.p_c)).total, inside


@pytest.mark.parametrize("load, pv", [(0.1, 0.0), (0.2, 2.0), (0.5, 4.0), (0.9, 1.0)])
def test_relaxation_lower_bound(sce56, load, pv):
    scen = Scenario.physical(sce56, load, 0.9, pv)
    sol = solve_opf(sce56, scen)
    qbar = sce56.bus(45).inverter.var_limit(scen.pv_output[45])
    for q in (0.0, qbar, -qbar, 0.5 * qbar):
        cost, inside = _heuristic_cost(sce56, scen, {45: q})
        if inside:
            assert sol.socp_objective <= cost + 1e-7


def test_wider_band_never_hurts(sce56):
    scen = Scenario.physical(sce56, 0.3, 0.9, 5.0, cap_states={b: False for b in sce56.capacitor_buses})
    costs = []
    for tol in (0.03, 0.04, 0.05):
        sol = solve_opf(sce56.with_voltage_tolerance(tol), scen)
        assert sol.optimal
        costs.append(sol.costs.total)
    assert costs[0] >= costs[1] - 1e-8 >= costs[2] - 2e-8


def test_over_satisfaction_mode(sce56):
    scen = Scenario.physical(sce56, 0.4, 0.9, 2.0, over_satisfaction=True)
    base = solve_opf(sce56, replace(scen, over_satisfaction=False))
    sol = solve_opf(sce56, scen)
    assert sol.optimal and sol.tightness.passed
    inj = scenario_injections(sce56, scen)
    assert np.all(sol.p_c >= inj.p_c - 1e-8) and np.all(sol.q_c >= inj.q_c - 1e-8)
    # the relaxed-load problem has a larger feasible set, so its optimum is no higher
    assert sol.socp_objective <= base.socp_objective + 1e-7
    cv = cross_validate(sce56, scen, sol)
    assert cv.consistent, cv.message


def test_cvr_exponent_override(sce56):
    scen = Scenario.physical(sce56, 0.5)
    a = solve_opf(sce56, scen, OpfConfig(cvr_exponent=0.0))
    b = solve_opf(sce56, scen, OpfConfig(cvr_exponent=2.0))
    assert a.costs.cvr_cost == 0.0
    assert b.costs.cvr_cost > 0


def test_drop_standby(sce56):
    scen = Scenario.physical(sce56, 0.5, 0.9, 1.0)
    a = solve_opf(sce56, scen)
    b = solve_opf(sce56, scen, OpfConfig(drop_standby=True))
    c_s = sce56.bus(45).inverter.absolute_coeffs()[0]
    assert a.costs.inverter_loss - b.costs.inverter_loss == pytest.approx(c_s, abs=1e-7)


def test_alpha_perturbation_is_continuous(sce56):
    scen = Scenario.physical(sce56, 0.2, 0.9, 2.5)
    base = solve_opf(sce56, scen)
    qbar = sce56.bus(45).inverter.var_limit(scen.pv_output[45])
    assert abs(base.q_g_star[45]) < qbar - 1e-3
    bumped = solve_opf(sce56.with_load_exponent(1.1), scen)
    assert abs(bumped.q_g_star[45] - base.q_g_star[45]) < 0.1 * qbar


@settings(max_examples=10)
@given(st.floats(0.05, 1.0), st.floats(0.85, 1.0), st.floats(0.0, 0.9))
def test_small_feeders_exact(load, pf, pv):
    for m in (two_bus_feeder(), five_bus_feeder()):
        b = m.inverter_buses[0]
        scen = Scenario(load, pf, {b: pv})
        sol = solve_opf(m, scen)
        assert sol.optimal and sol.tightness.passed
        assert cross_validate(m, scen, sol).consistent
