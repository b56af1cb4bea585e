"""
Voltages on the 56-bus feeder without var control
=================================================

Load the bundled feeder, run the nonlinear power flow with the inverter at
unity power factor and watch the voltage at the PV bus climb as the plant
ramps from 0 to 5 MW.
"""

from voltvar import SweepSpec, bundled_feeder, voltage_profile_nocontrol

model = bundled_feeder()
print(f"{model.n_bus} buses, {model.n_line} lines, PV at bus {model.inverter_buses}")

# 20% load, capacitors off, q_g = 0 everywhere
spec = SweepSpec("pv_output", 0.0, 5.0, 11, load_scale=0.2)
table = voltage_profile_nocontrol(model, spec)
for row in table.rows:
    print(f"PV {row[0]:4.1f} MW  V_pcc {row[1]:.4f}  min {row[2]:.4f} (bus {row[3]})  "
          f"max {row[4]:.4f} (bus {row[5]})")

# the PCC swing is what a volt/var scheme has to absorb
print(f"PCC span {table.meta['pcc_span']:.4f} pu")

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, ax = plt.subplots()
    ax.plot(table.column("pv_output"), table.column("v_pcc"), "o-", label="bus 45")
    ax.plot(table.column("pv_output"), table.column("v_max"), "--", label="highest bus")
    ax.plot(table.column("pv_output"), table.column("v_min"), ":", label="lowest bus")
    ax.set_xlabel("PV output (MW)")
    ax.set_ylabel("voltage (pu)")
    ax.legend()
    fig.savefig("feeder_voltages.png")
