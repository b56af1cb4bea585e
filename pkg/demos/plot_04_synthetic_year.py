"""
A synthetic year: unity power factor against optimal control
=============================================================

365 seeded days mixing clear, cloudy and intermittent skies.  For every
hour we ask whether the voltages stay inside 1 +/- tol with the inverter at
unity power factor, and whether the optimal var setting can keep them there.
"""

from voltvar import bundled_feeder, run_timeseries, synth_profile, synth_year

model = bundled_feeder()

day = synth_profile("intermittent_cloudy", seed=3, cadence=60)
print("one intermittent day, PV fraction by hour:", day.pv_fraction.round(2).tolist())

year = synth_year(seed=0)
for caps in (False, True):
    report = run_timeseries(model, year, caps_on=caps)
    print(f"capacitors {'on' if caps else 'off'}:")
    print(report.table().to_csv())
