"""Parameter sweeps and synthetic time-series studies on a feeder.

All studies return a :class:`Table` whose CSV form is byte-for-byte
deterministic for identical inputs.  Rows are independent and may be farmed
out to a bounded process pool; results always come back in input order.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .distflow import SweepError, cvr_weights, objective_terms, sweep_solve
from .feeder import FeederModel
from .opf import OpfConfig, Scenario, scenario_injections, solve_opf
from .profiles import DayProfile

log = logging.getLogger(__name__)

DEFAULT_TOLERANCES = (0.03, 0.04, 0.05)
LOW_LOAD, HIGH_LOAD = 0.10, 1.00


@dataclass(frozen=True)
class SweepSpec:
    """One swept scenario field over ``[lo, hi]``.

    ``quantity`` is ``"pv_output"`` (per-inverter real output, pu) or
    ``"load_scale"`` (fraction of peak).  The fixed fields describe the rest of
    the operating point.  Capacitors are all switched off unless ``caps_on``.
    """

    quantity: str
    lo: float
    hi: float
    steps: int
    load_scale: float = 0.2
    power_factor: float = 0.9
    pv_output: float = 0.0  # pu at every inverter
    caps_on: bool = False
    v_root: float = 1.0
    over_satisfaction: bool = False

    def __post_init__(self):
        if self.quantity not in ("pv_output", "load_scale"):
            raise ValueError(f"cannot sweep {self.quantity!r}")
        if not self.lo < self.hi:
            raise ValueError(f"empty sweep range [{self.lo}, {self.hi}]")
        if self.steps < 2:
            raise ValueError("a sweep needs at least two steps")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.steps)

    def scenario(self, model: FeederModel, value: float | None = None) -> Scenario:
        load, pv = self.load_scale, self.pv_output
        if value is not None:
            if self.quantity == "pv_output":
                pv = value
            else:
                load = value
        return Scenario(load, self.power_factor, {b: pv for b in model.inverter_buses},
                        {b: self.caps_on for b in model.capacitor_buses}, self.v_root,
                        self.over_satisfaction)


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else f"{float(v):.10g}"
    return v


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    """Ordered map over a bounded process pool (in-process when ``workers <= 1``)."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# ---------------------------------------------------------------------------
# OPF sweeps

class _OpfRow:
    def __init__(self, model, spec, config):
        self.model, self.spec, self.config = model, spec, config

    def __call__(self, value):
        scen = self.spec.scenario(self.model, value)
        try:
            sol = solve_opf(self.model, scen, self.config)
        except Exception as exc:  # per-row failure is recorded, not fatal
            log.warning("%s=%g: %s", self.spec.quantity, value, exc)
            return value, "error", {}, None, float("nan"), False
        if not sol.optimal:
            return value, sol.status, {}, None, float("nan"), False
        t = sol.tightness
        return value, sol.status, sol.q_g_star, sol.costs, t.max_relative_gap, t.passed


def _opf_sweep(model, spec, config, workers, first_col):
    config = config or OpfConfig()
    buses = model.inverter_buses
    mva = model.bases.s_base / 1e6
    cols = [first_col] + [f"q_{b}_pu" for b in buses] + [f"q_{b}_mvar" for b in buses]
    cols += ["line_loss", "cvr_cost", "inverter_loss", "total_cost", "max_rel_gap", "exact", "status"]
    table = Table(cols, meta={"spec": spec})
    for value, status, q, costs, gap, exact in _map(_OpfRow(model, spec, config), list(spec.values), workers):
        qs = [q.get(b, np.nan) for b in buses]
        c = [costs.line_loss, costs.cvr_cost, costs.inverter_loss, costs.total] if costs else [np.nan] * 4
        table.rows.append([float(value)] + qs + [v * mva for v in qs] + c + [gap, exact, status])
    return table


def sweep_pv(model: FeederModel, spec: SweepSpec, config: OpfConfig | None = None,
             workers: int = 1) -> Table:
    """Optimal var injection versus PV output (pu at every inverter)."""
    if not model.inverter_buses:
        raise ValueError("feeder has no inverter")
    if spec.quantity != "pv_output":
        spec = replace(spec, quantity="pv_output")
    return _opf_sweep(model, spec, config, workers, "p_g_pu")


def sweep_load(model: FeederModel, spec: SweepSpec, config: OpfConfig | None = None,
               workers: int = 1) -> Table:
    """Optimal var injection versus load scale."""
    if not model.inverter_buses:
        raise ValueError("feeder has no inverter")
    if spec.quantity != "load_scale":
        spec = replace(spec, quantity="load_scale")
    return _opf_sweep(model, spec, config, workers, "load_scale")


def voltage_profile_nocontrol(model: FeederModel, spec: SweepSpec, pcc: int | None = None) -> Table:
    """Voltages with inverters at unity power factor (``q_g = 0``) along a sweep.

    Reports the voltage at the point of common coupling (the first inverter
    bus unless ``pcc`` is given) and the lowest and highest bus voltages.
    ``meta["pcc_span"]`` is the max-min PCC voltage over converged rows.
    """
    pcc = pcc if pcc is not None else (model.inverter_buses[0] if model.inverter_buses else model.root)
    k_pcc = model.index(pcc)
    ids = model.bus_ids
    table = Table([spec.quantity, "v_pcc", "v_min", "v_min_bus", "v_max", "v_max_bus", "converged"],
                  meta={"pcc": pcc})
    for value in spec.values:
        scen = spec.scenario(model, value)
        try:
            st = sweep_solve(model, scenario_injections(model, scen), scen.v_root)
        except SweepError as exc:
            log.warning("%s=%g: %s", spec.quantity, value, exc)
            table.rows.append([float(value), np.nan, np.nan, -1, np.nan, -1, False])
            continue
        v = st.voltage
        lo, hi = int(np.argmin(v)), int(np.argmax(v))
        table.rows.append([float(value), v[k_pcc], v[lo], ids[lo], v[hi], ids[hi], True])
    vp = table.column("v_pcc")
    vp = vp[np.isfinite(vp)]
    table.meta["pcc_span"] = float(vp.max() - vp.min()) if vp.size else float("nan")
    return table


PLOT_TEMPLATE = '''"""Plot {csv_name}; generated alongside the CSV.  Needs matplotlib."""
import csv
import sys

import matplotlib.pyplot as plt

with open({csv_name!r}) as fh:
    rows = list(csv.DictReader(fh))
x = [float(r[{x!r}]) for r in rows]
fig, ax = plt.subplots()
for name in {ys!r}:
    ax.plot(x, [float(r[name]) for r in rows], marker="o", label=name)
ax.set_xlabel({xlabel!r})
ax.set_ylabel({ylabel!r})
ax.legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else {png!r})
'''


def write_plot_script(csv_path: str | Path, x: str, ys: Iterable[str], xlabel: str = "",
                      ylabel: str = "") -> Path:
    """Write ``<stem>_plot.py`` next to ``csv_path`` and return its path."""
    csv_path = Path(csv_path)
    out = csv_path.with_name(csv_path.stem + "_plot.py")
    out.write_text(PLOT_TEMPLATE.format(csv_name=csv_path.name, x=x, ys=list(ys),
                                        xlabel=xlabel or x, ylabel=ylabel,
                                        png=csv_path.stem + ".png"), encoding="utf-8")
    return out


# ---------------------------------------------------------------------------
# time series

@dataclass(frozen=True)
class ToleranceSummary:
    tolerance: float
    hours_infeasible_unity: float
    hours_infeasible_optimal: float
    average_saving_pct: float  # over jointly feasible samples
    jointly_feasible: int
    feasible_unity: int
    feasible_optimal: int
    inexact: int  # optimal samples that failed the exactness check


@dataclass(frozen=True)
class SavingsReport:
    summaries: tuple[ToleranceSummary, ...]
    samples: int
    hours: float

    def by_tolerance(self, tol: float) -> ToleranceSummary:
        for s in self.summaries:
            if abs(s.tolerance - tol) < 1e-12:
                return s
        raise KeyError(tol)

    def table(self) -> Table:
        t = Table(["tolerance_pct", "hours_infeasible_unity", "hours_infeasible_optimal",
                   "average_saving_pct", "jointly_feasible", "feasible_unity", "feasible_optimal",
                   "inexact"])
        for s in self.summaries:
            t.rows.append([100 * s.tolerance, s.hours_infeasible_unity, s.hours_infeasible_optimal,
                           s.average_saving_pct, s.jointly_feasible, s.feasible_unity,
                           s.feasible_optimal, s.inexact])
        return t


class _SampleEval:
    """Evaluates one (load, pv) operating point at every tolerance.

    Returns per tolerance ``(unity_ok, unity_cost, opt_ok, opt_cost, exact)``.
    Tolerances are visited loosest first: an optimum that already satisfies a
    tighter band is optimal there too, and infeasibility at a loose band
    implies infeasibility at every tighter one.
    """

    def __init__(self, model, tolerances, config, caps_on):
        self.model = config.apply(model)
        self.raw_model = model
        self.tolerances = tuple(sorted(tolerances, reverse=True))
        self.config = config
        self.caps_on = caps_on
        self.models = {tol: model.with_voltage_tolerance(tol) for tol in self.tolerances}

    def __call__(self, key):
        load, pv = key
        m = self.model
        scen = Scenario(load, 0.9, {b: pv * m.bus(b).inverter.pv_capacity for b in m.inverter_buses},
                        {b: self.caps_on for b in m.capacitor_buses})
        inj = scenario_injections(m, scen)
        coeffs = {b: m.bus(b).inverter.absolute_coeffs() for b in m.inverter_buses}
        if self.config.drop_standby:
            coeffs = {b: (0.0, cv, cr) for b, (_, cv, cr) in coeffs.items()}
        try:
            st = sweep_solve(m, inj, scen.v_root)
            outputs = {b: (scen.pv_output[b], 0.0) for b in m.inverter_buses}
            unity_cost = objective_terms(m, st, outputs, cvr_weights(m, inj.p_c), coeffs).total
            v = st.voltage[1:]
        except SweepError:
            unity_cost, v = float("nan"), None
        out = {}
        sol, infeasible = None, False
        for tol in self.tolerances:
            unity_ok = v is not None and bool(np.all(np.abs(v - 1.0) <= tol))
            if not infeasible and (sol is None or not sol.optimal
                                   or np.any(np.abs(sol.state.voltage[1:] - 1.0) > tol + 1e-9)):
                sol = solve_opf(self.models[tol], scen, self.config)
                if sol.status == "infeasible":
                    infeasible = True
                elif not sol.optimal:
                    log.warning("load %.3f pv %.3f tol %.2f: solver status %s", load, pv, tol, sol.status)
            if not infeasible and sol.optimal:
                out[tol] = (unity_ok, unity_cost, True, sol.costs.total, sol.tightness.passed)
            else:
                out[tol] = (unity_ok, unity_cost, False, float("nan"), False)
        return out


def run_timeseries(model: FeederModel, profiles: Sequence[DayProfile],
                   tolerances: Sequence[float] = DEFAULT_TOLERANCES, config: OpfConfig | None = None,
                   caps_on: bool = False, workers: int = 1) -> SavingsReport:
    """Unity power factor versus optimal var control over a set of day profiles.

    PV fractions scale each inverter's PV capacity and load fractions scale
    the feeder peak (pf 0.9).  A sample is infeasible under unity power factor
    when any bus voltage leaves ``1 +/- tol`` on the converged sweep, and
    infeasible under optimal control when the relaxed program is infeasible.
    Percentage savings ``100 * (unity - optimal) / unity`` are averaged only
    over samples where both controls are feasible.  Identical operating points
    are evaluated once.
    """
    if not model.inverter_buses:
        raise ValueError("feeder has no inverter")
    config = config or OpfConfig()
    keys, weights = [], []
    for prof in profiles:
        h = prof.cadence / 60.0
        for _, pv, load in prof.samples:
            keys.append((float(load), float(pv)))
            weights.append(h)
    unique = list(dict.fromkeys(keys))
    results = dict(zip(unique, _map(_SampleEval(model, tolerances, config, caps_on), unique, workers)))
    weights = np.array(weights)
    summaries = []
    for tol in sorted(tolerances):
        rec = [results[k][tol] for k in keys]
        u_ok = np.array([r[0] for r in rec])
        o_ok = np.array([r[2] for r in rec])
        joint = u_ok & o_ok
        u_cost = np.array([r[1] for r in rec])
        o_cost = np.array([r[3] for r in rec])
        saving = 100 * (u_cost[joint] - o_cost[joint]) / u_cost[joint]
        summaries.append(ToleranceSummary(
            tol, float(weights[~u_ok].sum()), float(weights[~o_ok].sum()),
            float(saving.mean()) if saving.size else float("nan"),
            int(joint.sum()), int(u_ok.sum()), int(o_ok.sum()),
            int(sum(1 for r in rec if r[2] and not r[4]))))
    return SavingsReport(tuple(summaries), len(keys), float(weights.sum()))
