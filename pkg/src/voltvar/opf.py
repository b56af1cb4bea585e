"""Volt/var optimal power flow as a second-order cone program.

For each line ``k`` from bus ``i`` to bus ``j`` the program carries a rotated
cone block ``(ell_k, w_k, P_k, Q_k)`` with ``w_k = nu_i / 2``, so
``2 ell_k w_k >= P_k^2 + Q_k^2`` is the relaxed current definition.  Inverter
losses enter through a cone ``s >= ||(p_g, q_g)||`` and a rotated cone
``t >= p_g^2 + q_g^2``; squared voltages are free variables pinned at the root
and boxed elsewhere through nonnegative slacks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .conic import ConeBlock, ConicProgram, ConicSettings, ConicSolution, solve_conic
from .distflow import (CostBreakdown, Injections, PowerFlowState, SweepError, cvr_weights,
                       objective_terms, sweep_solve)
from .feeder import FeederError, FeederModel

log = logging.getLogger(__name__)

OBJECTIVE_FLOOR = 1e-3


class OpfError(RuntimeError):
    """Assembly or solve failure that is not a plain infeasible scenario."""


@dataclass(frozen=True)
class Scenario:
    """One operating point.

    ``pv_output`` maps inverter bus to real output (pu); inverters not listed
    produce nothing.  ``cap_states`` maps capacitor bus to on/off; capacitors
    not listed are on.
    """

    load_scale: float = 0.2
    power_factor: float = 0.9
    pv_output: Mapping[int, float] = field(default_factory=dict)
    cap_states: Mapping[int, bool] = field(default_factory=dict)
    v_root: float = 1.0
    over_satisfaction: bool = False

    def __post_init__(self):
        if self.load_scale < 0:
            raise ValueError("load_scale must be nonnegative")
        if not 0 < self.power_factor <= 1:
            raise ValueError("power factor must lie in (0, 1]")
        if self.v_root <= 0:
            raise ValueError("v_root must be positive")
        if any(p < 0 for p in self.pv_output.values()):
            raise ValueError("PV output must be nonnegative")

    @classmethod
    def physical(cls, model: FeederModel, load: float = 0.2, pf: float = 0.9, pv_mw: float = 0.0,
                 **kw) -> "Scenario":
        """Scenario with ``pv_mw`` (MW) at every inverter and load as a fraction of peak."""
        p = pv_mw * 1e6 / model.bases.s_base
        return cls(load, pf, {b: p for b in model.inverter_buses}, **kw)


@dataclass(frozen=True)
class OpfConfig:
    cvr_exponent: float | None = None  # overrides every bus's load exponent
    loss_coeffs: tuple[float, float, float] | None = None  # overrides inverter specs (normalised)
    drop_standby: bool = False  # leave c_s out of reported costs
    tightness_tol: float = 1e-6
    conic: ConicSettings = field(default_factory=lambda: ConicSettings(presolve=False))

    def apply(self, model: FeederModel) -> FeederModel:
        if self.cvr_exponent is not None:
            model = model.with_load_exponent(self.cvr_exponent)
        if self.loss_coeffs is not None:
            model = model.with_loss_coeffs(self.loss_coeffs)
        return model


def scenario_injections(model: FeederModel, scen: Scenario, q_g: Mapping[int, float] | None = None
                        ) -> Injections:
    n = model.n_bus
    p_c, q_c, p_g, qg, q_sc = (np.zeros(n) for _ in range(5))
    for k, bus in enumerate(model.buses):
        s = bus.load_at(scen.load_scale, scen.power_factor)
        p_c[k], q_c[k] = s.real, s.imag
        if bus.shunt_cap > 0 and scen.cap_states.get(bus.id, True):
            q_sc[k] = bus.shunt_cap
    for b, p in scen.pv_output.items():
        inv = model.bus(b).inverter if b in model._pos else None
        if inv is None:
            raise FeederError(f"scenario puts PV at bus {b}, which has no inverter")
        inv.var_limit(p)  # range check
        p_g[model.index(b)] = p
    for b, q in (q_g or {}).items():
        qg[model.index(b)] = q
    for b in scen.cap_states:
        if b not in model._pos or model.bus(b).shunt_cap <= 0:
            raise FeederError(f"scenario switches a capacitor at bus {b}, which has none")
    return Injections(p_c, q_c, p_g, qg, q_sc)


@dataclass(frozen=True)
class VariableMap:
    """Positions of the physical quantities inside the conic variable vector.

    Line arrays are indexed by line position, bus arrays by bus position and
    inverter dicts by bus id.  With over-satisfaction, ``p_c``/``q_c`` hold the
    slots of the load variables at loaded buses.
    """

    P: np.ndarray
    Q: np.ndarray
    ell: np.ndarray
    nu: np.ndarray
    q_g: dict
    s: dict
    t: dict
    p_c: dict = field(default_factory=dict)
    q_c: dict = field(default_factory=dict)

    def all_slots(self) -> list[int]:
        out = [*self.P, *self.Q, *self.ell, *self.nu]
        for d in (self.q_g, self.s, self.t, self.p_c, self.q_c):
            out.extend(d.values())
        return [int(i) for i in out]


class _Builder:
    """Accumulates cone blocks, equality rows and objective terms."""

    def __init__(self):
        self.cones: list[ConeBlock] = []
        self.c: list[float] = []
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.b: list[float] = []

    def block(self, kind, dim, cost=None):
        start = len(self.c)
        self.cones.append(ConeBlock(kind, dim))
        self.c.extend(cost if cost is not None else [0.0] * dim)
        return list(range(start, start + dim))

    def row(self, terms, rhs):
        r = len(self.b)
        for col, val in terms:
            if val != 0.0:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(float(val))
        self.b.append(float(rhs))
        return r

    def program(self):
        n = len(self.c)
        A = sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.b), n))
        A.sum_duplicates()
        return ConicProgram(np.array(self.c), A, np.array(self.b), tuple(self.cones))


def assemble_socp(model: FeederModel, scen: Scenario, config: OpfConfig | None = None):
    """Build the relaxed volt/var program.  Returns ``(ConicProgram, VariableMap)``."""
    config = config or OpfConfig()
    model = config.apply(model)
    inj = scenario_injections(model, scen)
    alpha = cvr_weights(model, inj.p_c)
    nb, nl = model.n_bus, model.n_line
    frm = model.line_from
    r, x = model.r, model.x
    B = _Builder()

    # cone blocks: one rotated cone per line
    P, Q, ell, w = (np.zeros(nl, dtype=int) for _ in range(4))
    for k in range(nl):
        ell[k], w[k], P[k], Q[k] = B.block("rsoc", 4, [r[k], 0.0, 0.0, 0.0])

    # inverters
    q_g, s_slot, t_slot, p_copies, q_copy, h_slot = {}, {}, {}, {}, {}, {}
    qbar = {}
    for bus in model.inverter_buses:
        inv = model.bus(bus).inverter
        _, c_v, c_r = inv.absolute_coeffs()
        qbar[bus] = inv.var_limit(scen.pv_output.get(bus, 0.0))
        if c_v > 0:
            s_slot[bus], p1, q_g[bus] = B.block("soc", 3, [c_v, 0.0, 0.0])
            p_copies.setdefault(bus, []).append(p1)
        if c_r > 0:
            t_slot[bus], h_slot[bus], p2, q2 = B.block("rsoc", 4, [c_r, 0.0, 0.0, 0.0])
            p_copies.setdefault(bus, []).append(p2)
            if bus in q_g:
                q_copy[bus] = q2
            else:
                q_g[bus] = q2
        if bus not in q_g:
            (q_g[bus],) = B.block("free", 1)

    # voltage bound slacks, non-root buses
    lo = B.block("nonneg", nb - 1) if nb > 1 else []
    hi = B.block("nonneg", nb - 1) if nb > 1 else []
    qlo, qhi = {}, {}
    for bus in model.inverter_buses:
        qlo[bus], qhi[bus] = B.block("nonneg", 2)

    # squared voltages (free) and, with over-satisfaction, load variables
    nu = np.array([B.block("free", 1, [alpha[k]])[0] for k in range(nb)], dtype=int)
    p_c, q_c, p_ex, q_ex = {}, {}, {}, {}
    if scen.over_satisfaction:
        for k, bus in enumerate(model.buses):
            if k == 0 or (inj.p_c[k] == 0 and inj.q_c[k] == 0):
                continue
            p_c[bus.id], q_c[bus.id] = B.block("free", 2)
            p_ex[bus.id], q_ex[bus.id] = B.block("nonneg", 2)

    # equalities
    children = [[] for _ in range(nb)]
    for k in range(nl):
        children[frm[k]].append(k)
    for k in range(nl):
        j = k + 1
        bid = model.buses[j].id
        # real power balance
        terms = [(P[k], 1.0), (ell[k], -r[k])] + [(P[m], -1.0) for m in children[j]]
        rhs = -inj.p_g[j]
        if bid in p_c:
            terms.append((p_c[bid], -1.0))
        else:
            rhs += inj.p_c[j]
        B.row(terms, rhs)
        # reactive power balance, capacitor output q_sc * nu_j
        terms = [(Q[k], 1.0), (ell[k], -x[k]), (nu[j], inj.q_sc[j])] + [(Q[m], -1.0) for m in children[j]]
        if bid in q_g:
            terms.append((q_g[bid], 1.0))
        rhs = 0.0
        if bid in q_c:
            terms.append((q_c[bid], -1.0))
        else:
            rhs += inj.q_c[j]
        B.row(terms, rhs)
        # voltage drop
        B.row([(nu[j], 1.0), (nu[frm[k]], -1.0), (P[k], 2 * r[k]), (Q[k], 2 * x[k]),
               (ell[k], -(r[k] ** 2 + x[k] ** 2))], 0.0)
        # cone copy of the sending-end squared voltage
        B.row([(w[k], 1.0), (nu[frm[k]], -0.5)], 0.0)
    B.row([(nu[0], 1.0)], scen.v_root**2)
    for k in range(1, nb):
        bus = model.buses[k]
        B.row([(nu[k], 1.0), (lo[k - 1], -1.0)], bus.v_min**2)
        B.row([(nu[k], 1.0), (hi[k - 1], 1.0)], bus.v_max**2)
    for bus in model.inverter_buses:
        p = scen.pv_output.get(bus, 0.0)
        for slot in p_copies.get(bus, []):
            B.row([(slot, 1.0)], p)
        if bus in h_slot:
            B.row([(h_slot[bus], 1.0)], 0.5)
        if bus in q_copy:
            B.row([(q_copy[bus], 1.0), (q_g[bus], -1.0)], 0.0)
        B.row([(q_g[bus], 1.0), (qhi[bus], 1.0)], qbar[bus])
        B.row([(q_g[bus], 1.0), (qlo[bus], -1.0)], -qbar[bus])
    for bid in p_c:
        k = model.index(bid)
        B.row([(p_c[bid], 1.0), (p_ex[bid], -1.0)], inj.p_c[k])
        B.row([(q_c[bid], 1.0), (q_ex[bid], -1.0)], inj.q_c[k])

    vmap = VariableMap(P, Q, ell, nu, q_g, s_slot, t_slot, p_c, q_c)
    return B.program(), vmap


@dataclass(frozen=True)
class TightnessReport:
    line_gaps: np.ndarray  # ell * nu_from - (P^2 + Q^2), per line
    norm_gaps: dict  # s^2 - (p^2 + q^2), per inverter bus
    quad_gaps: dict  # t - (p^2 + q^2), per inverter bus
    max_relative_gap: float
    worst: tuple  # ("line", position) or ("norm"|"quad", bus)
    passed: bool


@dataclass
class OpfSolution:
    status: str
    q_g_star: dict
    state: PowerFlowState | None
    costs: CostBreakdown | None
    tightness: TightnessReport | None
    solver: ConicSolution
    p_g: dict = field(default_factory=dict)
    s: dict = field(default_factory=dict)
    t: dict = field(default_factory=dict)
    p_c: np.ndarray | None = None
    q_c: np.ndarray | None = None
    socp_objective: float = float("nan")  # conic objective plus standby losses
    retried: bool = False
    line_from: np.ndarray | None = None  # sending-bus position of each line

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _relative(gap, scale):
    return abs(gap) / max(1.0, abs(scale))


def check_exactness(solution: OpfSolution, tol: float = 1e-6, model: FeederModel | None = None
                    ) -> TightnessReport:
    """Measure how far the relaxed cone constraints are from equality.

    Each gap is divided by ``max(1, |reference|)`` where the reference is the
    left-hand side (``ell*nu``, ``s^2`` or ``t``); the check passes when every
    such relative gap is at most ``tol``.  ``model`` is needed only when the
    solution carries no line topology (hand-built states).
    """
    st = solution.state
    frm = solution.line_from
    if frm is None:
        if model is None:
            raise ValueError("check_exactness needs the model for this solution")
        frm = model.line_from
    lhs = st.ell * st.nu[frm]
    line_gaps = lhs - (st.P**2 + st.Q**2)
    rel = [(_relative(g, l), ("line", k)) for k, (g, l) in enumerate(zip(line_gaps, lhs))]
    norm_gaps, quad_gaps = {}, {}
    for bus, q in solution.q_g_star.items():
        p = solution.p_g.get(bus, 0.0)
        if bus in solution.s:
            s = solution.s[bus]
            norm_gaps[bus] = s * s - (p * p + q * q)
            rel.append((_relative(norm_gaps[bus], s * s), ("norm", bus)))
        if bus in solution.t:
            t = solution.t[bus]
            quad_gaps[bus] = t - (p * p + q * q)
            rel.append((_relative(quad_gaps[bus], t), ("quad", bus)))
    worst_rel, worst = max(rel, default=(0.0, None), key=lambda item: item[0])
    return TightnessReport(line_gaps, norm_gaps, quad_gaps, worst_rel, worst, worst_rel <= tol)


def _recover(model, scen, config, prog, vmap, sol, inj) -> OpfSolution:
    x = sol.x
    P, Q, ell, nu = x[vmap.P], x[vmap.Q], x[vmap.ell], x[vmap.nu]
    q_star = {b: float(x[i]) for b, i in vmap.q_g.items()}
    p_c, q_c = inj.p_c.copy(), inj.q_c.copy()
    for b, i in vmap.p_c.items():
        p_c[model.index(b)] = x[i]
    for b, i in vmap.q_c.items():
        q_c[model.index(b)] = x[i]
    root_lines = model.line_from == 0
    root_inj = complex(P[root_lines].sum() + p_c[0] - inj.p_g[0],
                       Q[root_lines].sum() + q_c[0] - inj.q_sc[0] * nu[0])
    state = PowerFlowState(P, Q, ell, nu, root_inj, sol.iterations)
    p_g = {b: float(scen.pv_output.get(b, 0.0)) for b in model.inverter_buses}
    coeffs = {b: model.bus(b).inverter.absolute_coeffs() for b in model.inverter_buses}
    if config.drop_standby:
        coeffs = {b: (0.0, cv, cr) for b, (_, cv, cr) in coeffs.items()}
    alpha = cvr_weights(model, inj.p_c)
    costs = objective_terms(model, state, {b: (p_g[b], q_star[b]) for b in q_star}, alpha, coeffs)
    standby = sum(cs for cs, _, _ in coeffs.values())
    out = OpfSolution(
        status="optimal", q_g_star=q_star, state=state, costs=costs, tightness=None, solver=sol,
        p_g=p_g, s={b: float(x[i]) for b, i in vmap.s.items()},
        t={b: float(x[i]) for b, i in vmap.t.items()}, p_c=p_c, q_c=q_c,
        socp_objective=float(prog.c @ x) + standby, line_from=model.line_from)
    out.tightness = check_exactness(out, config.tightness_tol)
    return out


def solve_opf(model: FeederModel, scen: Scenario, config: OpfConfig | None = None) -> OpfSolution:
    """Assemble and solve the relaxed program, then recover physical quantities.

    A non-optimal solver status is passed through (``infeasible`` means the
    voltage limits cannot be met).  If the solver reports optimal but the
    relaxation is not tight to ``config.tightness_tol``, the solve is repeated
    once at a hundredth of the solver tolerance before the result is returned.
    """
    config = config or OpfConfig()
    prog, vmap = assemble_socp(model, scen, config)
    model = config.apply(model)
    inj = scenario_injections(model, scen)
    settings = replace(config.conic)
    sol = solve_conic(prog, settings)
    if not sol.optimal:
        return OpfSolution(sol.status, {}, None, None, None, sol)
    out = _recover(model, scen, config, prog, vmap, sol, inj)
    if not out.tightness.passed:
        log.info("relaxation gap %.2e at tol %.0e; retrying tighter", out.tightness.max_relative_gap,
                 settings.tol)
        settings.tol /= 100
        sol2 = solve_conic(prog, settings)
        if sol2.optimal:
            out = _recover(model, scen, config, prog, vmap, sol2, inj)
        out.retried = True
    return out


@dataclass(frozen=True)
class CrossValidation:
    consistent: bool
    socp_objective: float
    sweep_objective: float
    objective_rel_diff: float
    state_rel_diff: dict  # per quantity: max abs difference / max(1, max abs value)
    sweep_state: PowerFlowState | None = None
    message: str = ""


def cross_validate(model: FeederModel, scen: Scenario, solution: OpfSolution, tol: float = 1e-6,
                   config: OpfConfig | None = None) -> CrossValidation:
    """Re-run the nonlinear sweep at the optimal var injections and compare.

    The comparison covers squared voltages, line flows, squared currents and
    the total cost (line loss + CVR + inverter losses, standby included).
    """
    config = config or OpfConfig()
    model = config.apply(model)
    if not solution.optimal:
        return CrossValidation(False, np.nan, np.nan, np.nan, {}, None, f"solution status {solution.status}")
    inj = scenario_injections(model, scen, solution.q_g_star)
    if solution.p_c is not None:
        inj = Injections(solution.p_c, solution.q_c, inj.p_g, inj.q_g, inj.q_sc)
    try:
        ref = sweep_solve(model, inj, scen.v_root)
    except SweepError as exc:
        return CrossValidation(False, solution.socp_objective, np.nan, np.nan, {}, None, str(exc))
    st = solution.state
    diffs = {}
    for name in ("nu", "P", "Q", "ell"):
        a, b = getattr(st, name), getattr(ref, name)
        diffs[name] = float(np.max(np.abs(a - b), initial=0.0) / max(1.0, np.max(np.abs(b), initial=0.0)))
    coeffs = {b: model.bus(b).inverter.absolute_coeffs() for b in model.inverter_buses}
    if config.drop_standby:
        coeffs = {b: (0.0, cv, cr) for b, (_, cv, cr) in coeffs.items()}
    alpha = cvr_weights(model, scenario_injections(model, scen).p_c)
    outputs = {b: (solution.p_g.get(b, 0.0), q) for b, q in solution.q_g_star.items()}
    sweep_obj = objective_terms(model, ref, outputs, alpha, coeffs).total
    socp_obj = solution.socp_objective
    # below 1e-3 pu (1 kW on the default base) the comparison becomes absolute
    obj_diff = abs(socp_obj - sweep_obj) / max(abs(sweep_obj), OBJECTIVE_FLOOR)
    ok = obj_diff <= tol and max(diffs.values()) <= tol
    msg = "" if ok else f"mismatch: objective {obj_diff:.2e}, state {max(diffs.values()):.2e}"
    return CrossValidation(ok, socp_obj, sweep_obj, obj_diff, diffs, ref, msg)
