"""Plain-text dumps: power flow states, OPF solutions and conic programs."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .conic import ConeBlock, ConicProgram
from .distflow import PowerFlowState
from .feeder import FeederModel


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _g(v) -> str:
    return f"{float(v):.17g}"


def write_state(model: FeederModel, state: PowerFlowState, prefix: str | Path,
                q_g: dict | None = None) -> tuple[Path, Path]:
    """Write ``<prefix>_buses.csv`` (bus, nu, v[, q_g]) and ``<prefix>_lines.csv``
    (from, to, P, Q, ell)."""
    prefix = Path(prefix)
    bus_path = prefix.with_name(prefix.name + "_buses.csv")
    line_path = prefix.with_name(prefix.name + "_lines.csv")
    with open(bus_path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["bus", "nu", "v"] + (["q_g"] if q_g is not None else []))
        for k, bus in enumerate(model.buses):
            row = [bus.id, _g(state.nu[k]), _g(np.sqrt(state.nu[k]))]
            if q_g is not None:
                row.append(_g(q_g.get(bus.id, 0.0)))
            w.writerow(row)
    with open(line_path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["from", "to", "P", "Q", "ell"])
        for k, ln in enumerate(model.lines):
            w.writerow([ln.from_bus, ln.to_bus, _g(state.P[k]), _g(state.Q[k]), _g(state.ell[k])])
    return bus_path, line_path


def read_state(model: FeederModel, prefix: str | Path) -> PowerFlowState:
    prefix = Path(prefix)
    with open(prefix.with_name(prefix.name + "_buses.csv")) as fh:
        buses = {int(r["bus"]): float(r["nu"]) for r in csv.DictReader(fh)}
    with open(prefix.with_name(prefix.name + "_lines.csv")) as fh:
        lines = {int(r["to"]): (float(r["P"]), float(r["Q"]), float(r["ell"])) for r in csv.DictReader(fh)}
    nu = np.array([buses[b] for b in model.bus_ids])
    flows = np.array([lines[ln.to_bus] for ln in model.lines]).reshape(-1, 3)
    return PowerFlowState(flows[:, 0], flows[:, 1], flows[:, 2], nu)


def solution_summary(solution) -> dict:
    """Flat record of an :class:`~voltvar.opf.OpfSolution`."""
    rec = {"status": solution.status, "iterations": solution.solver.iterations}
    pres, dres, gap = solution.solver.residuals
    rec.update(primal_residual=pres, dual_residual=dres, gap=gap)
    if solution.optimal:
        c = solution.costs
        rec.update(line_loss=c.line_loss, cvr_cost=c.cvr_cost, inverter_loss=c.inverter_loss,
                   total_cost=c.total, max_rel_gap=solution.tightness.max_relative_gap,
                   exact=solution.tightness.passed, retried=solution.retried)
        for b, q in solution.q_g_star.items():
            rec[f"q_{b}"] = q
    return rec


def write_solution(model: FeederModel, solution, prefix: str | Path) -> list[Path]:
    """Bus table, line table and a ``<prefix>_summary.csv`` key/value record."""
    paths = []
    if solution.optimal:
        paths.extend(write_state(model, solution.state, prefix, solution.q_g_star))
    prefix = Path(prefix)
    summary = prefix.with_name(prefix.name + "_summary.csv")
    with open(summary, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["key", "value"])
        for k, v in solution_summary(solution).items():
            w.writerow([k, _g(v) if isinstance(v, (float, np.floating)) else v])
    paths.append(summary)
    return paths


def dump_program(prog: ConicProgram, path: str | Path) -> None:
    """Sparse triplet dump readable by :func:`load_program`.

    Layout: a ``cones`` line of ``kind:dim`` tokens, ``c`` and ``b`` lines of
    numbers, then one ``row col value`` triplet per nonzero of ``A`` after an
    ``A m n nnz`` header.
    """
    A = prog.A.tocoo()
    with open(path, "w") as fh:
        fh.write("cones " + " ".join(f"{blk.kind}:{blk.dim}" for blk in prog.cones) + "\n")
        fh.write("c " + " ".join(_g(v) for v in prog.c) + "\n")
        fh.write("b " + " ".join(_g(v) for v in prog.b) + "\n")
        fh.write(f"A {prog.m} {prog.n} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {_g(v)}\n")


def load_program(path: str | Path) -> ConicProgram:
    with open(path) as fh:
        lines = fh.read().splitlines()
    cones = [ConeBlock(k, int(d)) for k, d in (tok.split(":") for tok in lines[0].split()[1:])]
    c = np.array(lines[1].split()[1:], dtype=float)
    b = np.array(lines[2].split()[1:], dtype=float)
    _, m, n, nnz = lines[3].split()
    trip = np.array([ln.split() for ln in lines[4:4 + int(nnz)]], dtype=float).reshape(-1, 3)
    A = sp.csr_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))), shape=(int(m), int(n)))
    return ConicProgram(c, A, b, tuple(cones))
