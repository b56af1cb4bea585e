"""
When is the relaxation exact?
=============================

The cone program replaces ell * nu = P^2 + Q^2 by an inequality.  After a
solve we measure how far each relaxed constraint is from equality and then
re-run the nonlinear sweep at the optimal var setting.  A grid search on a
small feeder gives an independent optimum.
"""

import numpy as np

from voltvar import (InverterSpec, Scenario, brute_force_opf, bundled_feeder, cross_validate,
                     path_feeder, random_feeder, solve_opf)

model = bundled_feeder()
scen = Scenario.physical(model, load=0.2, pf=0.9, pv_mw=2.5)
sol = solve_opf(model, scen)
print(f"status {sol.status}, q* = {sol.q_g_star[45]:.4f} pu")
print(f"max relative gap {sol.tightness.max_relative_gap:.1e} at {sol.tightness.worst}")
cv = cross_validate(model, scen, sol)
print(f"sweep at q*: objective diff {cv.objective_rel_diff:.1e}, state diff "
      f"{max(cv.state_rel_diff.values()):.1e}")

# brute force on a 5-bus chain with sagging voltage
chain = path_feeder(5, 0.01, 0.02, loads={5: 1.0}, inverters={3: InverterSpec(1.0)})
s5 = Scenario(0.7, 0.9, {3: 0.0})
grid = brute_force_opf(chain, s5, 2001)
opt = solve_opf(chain, s5)
print(f"grid q {grid.q_grid_best[3]:.5f}  cone q {opt.q_g_star[3]:.5f}  spacing {grid.grid_spacing[3]:.1e}")

# a random feeder where the relaxation is not exact: too much PV on a
# lightly loaded lateral, so no var setting keeps every voltage under 1.03
rng = np.random.default_rng(2024)
for k in range(5):
    n = int(rng.integers(10, 51))
    f = random_feeder(rng, n, total_peak=float(rng.uniform(0.5, 3)), n_inverters=int(rng.integers(1, 4)),
                      inverter_rating=float(rng.uniform(0.5, 2)), n_caps=int(rng.integers(0, 3)))
    sc = Scenario(float(rng.uniform(0.05, 1)), float(rng.uniform(0.85, 1)),
                  {b: float(rng.uniform(0, 1)) * f.bus(b).inverter.s_rated for b in f.inverter_buses})
bad = solve_opf(f, sc)
print(f"random feeder: status {bad.status}, gap {bad.tightness.max_relative_gap:.2f} "
      f"on {bad.tightness.worst}")
# with over-satisfaction the relaxation is tight again, but only by burning PV in fictitious load
over = solve_opf(f, Scenario(sc.load_scale, sc.power_factor, sc.pv_output, over_satisfaction=True))
print(f"over-satisfied: gap {over.tightness.max_relative_gap:.1e}, extra load "
      f"{(over.p_c.sum() - bad.p_c.sum()):.2f} pu")
