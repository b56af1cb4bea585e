"""
Optimal var injection against PV output and load
================================================

Each point is one conic solve.  Positive q means the inverter injects vars,
negative means it absorbs them.  Capacitors stay off so the inverter is the
only var source.
"""

import numpy as np

from voltvar import HIGH_LOAD, LOW_LOAD, SweepSpec, bundled_feeder, sweep_load, sweep_pv

model = bundled_feeder()

# q* vs PV at light and heavy load
for load in (LOW_LOAD, HIGH_LOAD):
    t = sweep_pv(model, SweepSpec("pv_output", 0.0, 5.0, 11, load_scale=load))
    q = t.column("q_45_mvar")
    print(f"load {load:.0%}:  q* = {np.round(q, 3)}")
    print(f"   worst relative cone gap {t.column('max_rel_gap').max():.1e}")

# q* vs load with a little and a lot of PV
for pv in (0.5, 5.0):
    t = sweep_load(model, SweepSpec("load_scale", 0.0, 1.5, 16, pv_output=pv))
    q = t.column("q_45_mvar")
    print(f"PV {pv} MW:  q* = {np.round(q, 3)}  (min at load {t.column('load_scale')[np.argmin(q)]:.1f})")

# the costs behind one point
t = sweep_pv(model, SweepSpec("pv_output", 2.5, 5.0, 2, load_scale=0.2))
row = dict(zip(t.columns, t.rows[0]))
print({k: row[k] for k in ("line_loss", "cvr_cost", "inverter_loss", "total_cost")})

# CSV output is deterministic, so it can be diffed between runs
print(t.to_csv())
