"""Brute-force volt/var optimiser for small feeders.

Every point of a uniform grid over the inverter var ranges is evaluated with
the nonlinear sweep; points whose converged voltages leave the bounds are
discarded.  No relaxation is involved, which is the point: this is the
reference the conic pipeline is checked against.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from .distflow import cvr_weights, sweep_arrays
from .feeder import FeederModel
from .opf import OpfConfig, Scenario, scenario_injections

MAX_INVERTERS = 2
_CHUNK = 4096


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleSolution:
    q_grid_best: dict  # bus id -> var injection (pu)
    objective_best: float
    feasible_mask: np.ndarray  # shape (grid_steps,) * n_inverters
    grid_spacing: dict  # bus id -> spacing (pu)
    axes: dict  # bus id -> grid values
    objectives: np.ndarray  # same shape as feasible_mask, nan where unconverged

    def to_csv(self, path: str | Path) -> None:
        """Write one row per grid point: q per inverter, objective, feasible flag."""
        buses = list(self.axes)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"q_{b}" for b in buses] + ["objective", "feasible"])
            for idx in np.ndindex(self.feasible_mask.shape):
                qs = [self.axes[b][i] for b, i in zip(buses, idx)]
                w.writerow([f"{q:.10g}" for q in qs]
                           + [f"{self.objectives[idx]:.12g}", int(self.feasible_mask[idx])])


def brute_force_opf(model: FeederModel, scen: Scenario, grid_steps: int = 2001,
                    config: OpfConfig | None = None, tol: float = 1e-10) -> OracleSolution:
    """Exhaustive search over ``q in [-qbar, qbar]`` per inverter.

    The objective is the full cost (line loss, CVR term, inverter losses with
    standby unless ``config.drop_standby``), evaluated on converged sweeps.
    Raises :class:`OracleError` for more than two inverters or when no grid
    point is feasible.
    """
    if grid_steps < 3:
        raise ValueError("grid_steps must be at least 3")
    config = config or OpfConfig()
    model = config.apply(model)
    buses = model.inverter_buses
    if len(buses) > MAX_INVERTERS:
        raise OracleError(f"{len(buses)} inverters; the grid search handles at most {MAX_INVERTERS}")
    inj = scenario_injections(model, scen)
    alpha = cvr_weights(model, inj.p_c)
    v_min2 = np.array([b.v_min for b in model.buses]) ** 2
    v_max2 = np.array([b.v_max for b in model.buses]) ** 2

    axes, spacing, coeffs, p_g = {}, {}, {}, {}
    for b in buses:
        inv = model.bus(b).inverter
        p_g[b] = scen.pv_output.get(b, 0.0)
        qbar = inv.var_limit(p_g[b])
        axes[b] = np.linspace(-qbar, qbar, grid_steps)
        spacing[b] = 2 * qbar / (grid_steps - 1)
        c_s, c_v, c_r = inv.absolute_coeffs()
        coeffs[b] = (0.0 if config.drop_standby else c_s, c_v, c_r)

    shape = (grid_steps,) * len(buses)
    points = np.array(list(product(*(axes[b] for b in buses)))) if buses else np.zeros((1, 0))
    obj = np.full(len(points), np.nan)
    feas = np.zeros(len(points), dtype=bool)
    pos = [model.index(b) for b in buses]
    for start in range(0, len(points), _CHUNK):
        qs = points[start:start + _CHUNK]
        k = len(qs)
        q_net = np.repeat((inj.q_c - inj.q_g)[:, None], k, axis=1)
        for j, p in enumerate(pos):
            q_net[p] -= qs[:, j]
        P, Q, ell, nu, ok, _ = sweep_arrays(model, inj.p_net, q_net, inj.q_sc, scen.v_root, tol)
        cost = model.r @ ell + alpha @ nu
        for j, b in enumerate(buses):
            c_s, c_v, c_r = coeffs[b]
            s2 = p_g[b] ** 2 + qs[:, j] ** 2
            cost = cost + c_s + c_v * np.sqrt(s2) + c_r * s2
        inside = np.all((nu >= v_min2[:, None]) & (nu <= v_max2[:, None]), axis=0)
        obj[start:start + k] = np.where(ok, cost, np.nan)
        feas[start:start + k] = ok & inside
    if not feas.any():
        raise OracleError("no feasible grid point")
    best = int(np.argmin(np.where(feas, obj, np.inf)))
    q_best = {b: float(points[best, j]) for j, b in enumerate(buses)}
    return OracleSolution(q_best, float(obj[best]), feas.reshape(shape), spacing, axes, obj.reshape(shape))
