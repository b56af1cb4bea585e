"""Volt/var optimal power flow on radial distribution feeders.

The nonlinear DistFlow model is relaxed to a second-order cone program, solved
with a built-in interior-point method and checked for exactness against the
backward/forward sweep.
"""
from .conic import ConeBlock, ConicProgram, ConicSettings, ConicSolution, kkt_residuals, solve_conic
from .distflow import (CostBreakdown, Injections, PowerFlowState, SweepError, cvr_weights,
                       objective_terms, residuals, sweep_solve)
from .feeder import (Bases, Bus, FeederError, FeederModel, InverterSpec, Line, bundled_feeder,
                     load_feeder, parse_feeder, path_feeder, random_feeder, validate_radial)
from .opf import (OpfConfig, OpfSolution, Scenario, assemble_socp, check_exactness, cross_validate,
                  solve_opf)
from .oracle import OracleError, OracleSolution, brute_force_opf
from .profiles import CLASSES, DayProfile, synth_profile, synth_year
from .studies import (HIGH_LOAD, LOW_LOAD, SweepSpec, run_timeseries, sweep_load, sweep_pv,
                      voltage_profile_nocontrol)

__version__ = "0.1.0"

__all__ = [
    "ConeBlock",
    "ConicProgram",
    "ConicSettings",
    "ConicSolution",
    "kkt_residuals",
    "solve_conic",
    "CostBreakdown",
    "Injections",
    "PowerFlowState",
    "SweepError",
    "cvr_weights",
    "objective_terms",
    "residuals",
    "sweep_solve",
    "Bases",
    "Bus",
    "FeederError",
    "FeederModel",
    "InverterSpec",
    "Line",
    "bundled_feeder",
    "load_feeder",
    "parse_feeder",
    "path_feeder",
    "random_feeder",
    "validate_radial",
    "OpfConfig",
    "OpfSolution",
    "Scenario",
    "assemble_socp",
    "check_exactness",
    "cross_validate",
    "solve_opf",
    "OracleError",
    "OracleSolution",
    "brute_force_opf",
    "CLASSES",
    "DayProfile",
    "synth_profile",
    "synth_year",
    "HIGH_LOAD",
    "LOW_LOAD",
    "SweepSpec",
    "run_timeseries",
    "sweep_load",
    "sweep_pv",
    "voltage_profile_nocontrol",
]
