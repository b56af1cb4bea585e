"""Command-line front end.

Exit status is 0 on success, 2 when the requested scenario is infeasible and
1 on any error.  Physical units on the command line (MW, %, fractions of peak
load); everything is per-unit internally.

Optional config file (``--config``), one ``key = value`` per line, ``#``
comments::

    loss_coeffs = 0.01, 0.01, 0.01   # c_s, c_v, c_r, normalised to the rating
    cvr_exponent = 1.0               # overrides every bus's load exponent
    drop_standby = false
    solver_tol = 1e-8
    max_iter = 100
    tightness_tol = 1e-6
    voltage_tolerance = 3            # percent, overrides the feeder file limits
    caps = off                       # capacitor states for studies: on | off
    workers = 1
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import feeder as fdr
from .conic import ConicSettings
from .opf import OpfConfig, Scenario, assemble_socp, cross_validate, solve_opf
from .oracle import OracleError, brute_force_opf
from .profiles import CLASSES, synth_profile, synth_year
from .serialize import dump_program, write_solution
from .studies import (LOW_LOAD, SweepSpec, run_timeseries, sweep_load, sweep_pv,
                      voltage_profile_nocontrol, write_plot_script)

log = logging.getLogger("voltvar")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

CONFIG_KEYS = {"loss_coeffs", "cvr_exponent", "drop_standby", "solver_tol", "max_iter",
               "tightness_tol", "voltage_tolerance", "caps", "workers"}


class CliError(Exception):
    pass


def read_config(path: str | Path | None) -> dict:
    """Parse the key-value config file into typed settings."""
    if path is None:
        return {}
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[voltvar]\n" + Path(path).read_text(encoding="utf-8"))
    except (OSError, configparser.Error) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    sect = parser["voltvar"]
    unknown = set(sect) - CONFIG_KEYS
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    try:
        if "loss_coeffs" in sect:
            vals = tuple(float(v) for v in sect["loss_coeffs"].split(","))
            if len(vals) != 3:
                raise ValueError("loss_coeffs needs three values")
            out["loss_coeffs"] = vals
        for key in ("cvr_exponent", "solver_tol", "tightness_tol", "voltage_tolerance"):
            if key in sect:
                out[key] = sect.getfloat(key)
        for key in ("max_iter", "workers"):
            if key in sect:
                out[key] = sect.getint(key)
        if "drop_standby" in sect:
            out["drop_standby"] = sect.getboolean("drop_standby")
        if "caps" in sect:
            out["caps"] = sect.getboolean("caps")
    except ValueError as exc:
        raise CliError(f"bad config value: {exc}") from exc
    return out


def _opf_config(cfg: dict) -> OpfConfig:
    conic = ConicSettings(presolve=False)
    if "solver_tol" in cfg:
        conic = replace(conic, tol=cfg["solver_tol"])
    if "max_iter" in cfg:
        conic = replace(conic, max_iter=cfg["max_iter"])
    return OpfConfig(cvr_exponent=cfg.get("cvr_exponent"), loss_coeffs=cfg.get("loss_coeffs"),
                     drop_standby=cfg.get("drop_standby", False),
                     tightness_tol=cfg.get("tightness_tol", 1e-6), conic=conic)


def _load(args, cfg) -> fdr.FeederModel:
    model = fdr.bundled_feeder() if args.feeder in (None, "bundled") else fdr.load_feeder(args.feeder)
    vtol = getattr(args, "vtol", None)
    if vtol is None:
        vtol = cfg.get("voltage_tolerance")
    if vtol is not None:
        model = model.with_voltage_tolerance(vtol / 100.0)
    return model


def _pu(model, mw: float) -> float:
    return mw * 1e6 / model.bases.s_base


def _caps(args, cfg, default=False) -> bool:
    if getattr(args, "caps", None) is not None:
        return args.caps == "on"
    return cfg.get("caps", default)


def _scenario(model, args, cfg) -> Scenario:
    caps = _caps(args, cfg)
    return Scenario(args.load, args.pf, {b: _pu(model, args.pv) for b in model.inverter_buses},
                    {b: caps for b in model.capacitor_buses}, over_satisfaction=getattr(args, "oversat", False))


# ---------------------------------------------------------------------------
# commands

def cmd_feeder_validate(args, cfg) -> int:
    model = _load(args, cfg)
    order, _ = fdr.validate_radial(model)
    phys = model.to_physical()
    print(f"buses {model.n_bus}  lines {model.n_line}  root {model.root}")
    print(f"bases {model.bases.v_base / 1e3:g} kV, {model.bases.s_base / 1e6:g} MVA, "
          f"{model.bases.z_base:g} ohm")
    print(f"peak load {sum(phys['loads'].values()):.4f} MVA over {len(phys['loads'])} buses")
    print("shunt caps " + ", ".join(f"{b}:{v:g} Mvar" for b, v in phys["shunt_caps"].items()))
    for b in model.inverter_buses:
        inv = model.bus(b).inverter
        mva = model.bases.s_base / 1e6
        print(f"inverter {b}: {inv.s_rated * mva:g} MVA, PV {inv.pv_capacity * mva:g} MW, "
              f"loss coeffs {inv.loss_coeffs}")
    print(f"topological order ok ({len(order)} buses)")
    return EXIT_OK


def cmd_opf_solve(args, cfg) -> int:
    model = _load(args, cfg)
    scen = _scenario(model, args, cfg)
    config = _opf_config(cfg)
    if args.dump_program:
        prog, _ = assemble_socp(model, scen, config)
        dump_program(prog, args.dump_program)
    sol = solve_opf(model, scen, config)
    print(f"status {sol.status}  iterations {sol.solver.iterations}")
    if not sol.optimal:
        return EXIT_INFEASIBLE if sol.status == "infeasible" else EXIT_ERROR
    mva = model.bases.s_base / 1e6
    for b, q in sol.q_g_star.items():
        print(f"q_g* at bus {b}: {q * mva:.6f} Mvar")
    c = sol.costs
    print(f"costs (pu): line {c.line_loss:.6g}  cvr {c.cvr_cost:.6g}  inverter {c.inverter_loss:.6g}  "
          f"total {c.total:.6g}")
    v = sol.state.voltage
    print(f"voltage range {v.min():.5f} .. {v.max():.5f} pu")
    print(f"exactness: max relative gap {sol.tightness.max_relative_gap:.2e} "
          f"({'pass' if sol.tightness.passed else 'FAIL'})")
    if args.check:
        cv = cross_validate(model, scen, sol, config=config)
        print(f"cross-check vs sweep: objective diff {cv.objective_rel_diff:.2e}, "
              f"state diff {max(cv.state_rel_diff.values(), default=np.nan):.2e}")
    if args.out:
        for p in write_solution(model, sol, args.out):
            print(f"wrote {p}")
    return EXIT_OK


def _range(model, args, quantity):
    if quantity == "pv_output":
        return _pu(model, args.lo), _pu(model, args.hi)
    return args.lo, args.hi


def cmd_sweep(args, cfg) -> int:
    model = _load(args, cfg)
    config = _opf_config(cfg)
    caps = _caps(args, cfg)
    quantity = "pv_output" if args.what == "pv" else "load_scale"
    lo, hi = _range(model, args, quantity)
    load = args.load if args.load is not None else (LOW_LOAD if quantity == "pv_output" else 0.2)
    spec = SweepSpec(quantity, lo, hi, args.steps, load_scale=load, power_factor=args.pf,
                     pv_output=_pu(model, args.pv), caps_on=caps)
    workers = args.workers or cfg.get("workers", 1)
    if args.nocontrol:
        table = voltage_profile_nocontrol(model, spec)
        ys, ylabel = ["v_pcc", "v_min", "v_max"], "voltage (pu)"
        print(f"PCC (bus {table.meta['pcc']}) voltage span {table.meta['pcc_span']:.4f} pu")
    elif quantity == "pv_output":
        table = sweep_pv(model, spec, config, workers)
        ys, ylabel = [c for c in table.columns if c.endswith("_mvar")], "optimal q (Mvar)"
    else:
        table = sweep_load(model, spec, config, workers)
        ys, ylabel = [c for c in table.columns if c.endswith("_mvar")], "optimal q (Mvar)"
    text = table.to_csv(args.out)
    if args.out:
        script = write_plot_script(args.out, table.columns[0], ys, ylabel=ylabel)
        print(f"wrote {args.out} and {script}")
    else:
        sys.stdout.write(text)
    if not args.nocontrol:
        bad = [r for r in table.rows if r[-1] != "optimal"]
        if len(bad) == len(table.rows):
            return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_profile_synth(args, cfg) -> int:
    prof = synth_profile(args.cls, args.seed, args.cadence)
    lines = ["t_hour,pv_fraction,load_fraction"]
    lines += [f"{t:.6g},{pv:.6g},{ld:.6g}" for t, pv, ld in prof.samples]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_timeseries_run(args, cfg) -> int:
    model = _load(args, cfg)
    if args.classes:
        profiles = [synth_profile(c, args.seed + d, args.cadence)
                    for d in range(args.days) for c in args.classes.split(",")]
    else:
        profiles = synth_year(args.seed, args.days, args.cadence)
    tols = tuple(float(t) / 100 for t in args.tolerances.split(","))
    report = run_timeseries(model, profiles, tols, _opf_config(cfg), _caps(args, cfg),
                            args.workers or cfg.get("workers", 1))
    text = report.table().to_csv(args.out)
    if args.out:
        print(f"wrote {args.out}")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle_check(args, cfg) -> int:
    model = _load(args, cfg)
    scen = _scenario(model, args, cfg)
    config = _opf_config(cfg)
    try:
        orc = brute_force_opf(model, scen, args.steps, config)
    except OracleError as exc:
        if "feasible" in str(exc):
            print(f"oracle: {exc}")
            return EXIT_INFEASIBLE
        raise
    if args.dump:
        orc.to_csv(args.dump)
    sol = solve_opf(model, scen, config)
    if not sol.optimal:
        print(f"solver status {sol.status} but the grid found a feasible point")
        return EXIT_ERROR
    ok = True
    for b, q in sol.q_g_star.items():
        dq = abs(q - orc.q_grid_best[b])
        good = dq <= orc.grid_spacing[b]
        ok &= good
        print(f"bus {b}: socp {q:.6f}  grid {orc.q_grid_best[b]:.6f}  |diff| {dq:.2e}  "
              f"spacing {orc.grid_spacing[b]:.2e}")
    dobj = abs(sol.socp_objective - orc.objective_best)
    ok &= dobj <= args.obj_tol
    print(f"objective socp {sol.socp_objective:.10f}  grid {orc.objective_best:.10f}  |diff| {dobj:.2e}")
    print("agree" if ok else "DISAGREE")
    return EXIT_OK if ok else EXIT_ERROR


# ---------------------------------------------------------------------------
# parser

def _feeder_arg(p):
    p.add_argument("feeder", nargs="?", default="bundled",
                   help="feeder CSV file (default: the bundled 56-bus feeder)")


def _operating_point(p, load=0.2):
    p.add_argument("--load", type=float, default=load, help="load as a fraction of peak")
    p.add_argument("--pf", type=float, default=0.9, help="load power factor")
    p.add_argument("--pv", type=float, default=0.0, help="PV output per inverter, MW")
    p.add_argument("--vtol", type=float, default=None, help="voltage tolerance, percent")
    p.add_argument("--caps", choices=("on", "off"), default=None, help="capacitor states")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; status 2 is reserved for infeasible scenarios."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="voltvar", description="Volt/var OPF on radial feeders.")
    ap.add_argument("--config", help="key = value settings file")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="group", required=True)

    g = sub.add_parser("feeder").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("validate", help="parse and check a feeder file")
    _feeder_arg(p)
    p.set_defaults(func=cmd_feeder_validate)

    g = sub.add_parser("opf").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("solve", help="optimal var injection for one operating point")
    _feeder_arg(p)
    _operating_point(p)
    p.add_argument("--oversat", action="store_true", help="allow load over-satisfaction")
    p.add_argument("--check", action="store_true", help="cross-check against the nonlinear sweep")
    p.add_argument("--out", help="prefix for bus/line/summary CSV files")
    p.add_argument("--dump-program", help="write the cone program as sparse triplets")
    p.set_defaults(func=cmd_opf_solve)

    p = sub.add_parser("sweep", help="PV or load sweep")
    p.add_argument("what", choices=("pv", "load"))
    _feeder_arg(p)
    p.add_argument("--load", type=float, default=None,
                   help=f"fixed load fraction for PV sweeps (default {LOW_LOAD})")
    p.add_argument("--pf", type=float, default=0.9)
    p.add_argument("--pv", type=float, default=0.0, help="fixed PV output for load sweeps, MW")
    p.add_argument("--lo", type=float, default=0.0, help="range start (MW or load fraction)")
    p.add_argument("--hi", type=float, default=None, help="range end (MW or load fraction)")
    p.add_argument("--steps", type=int, default=21)
    p.add_argument("--vtol", type=float, default=None)
    p.add_argument("--caps", choices=("on", "off"), default=None)
    p.add_argument("--nocontrol", action="store_true",
                   help="voltages at unity power factor instead of optimising")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", help="CSV path; a plotting script is written next to it")
    p.set_defaults(func=cmd_sweep)

    g = sub.add_parser("profile").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("synth", help="synthetic day profile")
    p.add_argument("--class", dest="cls", required=True, choices=CLASSES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cadence", type=float, default=60.0, help="minutes between samples")
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile_synth)

    g = sub.add_parser("timeseries").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("run", help="unity power factor vs optimal control over synthetic days")
    _feeder_arg(p)
    p.add_argument("--days", type=int, default=365)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", help="comma list; default mixes all four classes at random")
    p.add_argument("--cadence", type=float, default=60.0)
    p.add_argument("--tolerances", default="3,4,5", help="comma list, percent")
    p.add_argument("--caps", choices=("on", "off"), default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_timeseries_run)

    g = sub.add_parser("oracle").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("check", help="compare the cone solution with a brute-force grid search")
    _feeder_arg(p)
    _operating_point(p)
    p.add_argument("--steps", type=int, default=2001)
    p.add_argument("--obj-tol", type=float, default=1e-5)
    p.add_argument("--dump", help="CSV of the objective landscape")
    p.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = read_config(args.config)
        if getattr(args, "func", None) is cmd_sweep and args.hi is None:
            args.hi = 5.0 if args.what == "pv" else 1.5
        return args.func(args, cfg)
    except (CliError, fdr.FeederError, OracleError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
