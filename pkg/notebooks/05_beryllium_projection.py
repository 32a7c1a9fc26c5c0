"""
How far could the method go?
============================

The transduction coefficient grows with a lighter ion, a softer trap, a
stronger gradient and a transition that is linear in the field. This script
projects the sensitivity of a 9Be+ ion on a 2.1 MHz/G transition in a
200 T/m gradient, and shows which knob matters most.
"""

# %%
from iontometer import protocols
from iontometer.config import be9_projection, yb171_clock

base = protocols.project_sensitivity(yb171_clock(), 0.172, 0.304, 0.066839)
be = protocols.project_sensitivity(be9_projection(), 0.17, 0.34, 0.0)
print(f"171Yb+ clock transition : {base:.2e} V m^-1 Hz^-1/2")
print(f"9Be+ projection         : {be:.2e} V m^-1 Hz^-1/2")

# %%
# Sensitivity scales inversely with the gradient and with the square of the
# trap frequency (through the ion's displacement per unit field).
for grad in (50.0, 100.0, 200.0, 400.0):
    print(f"  dB/dz = {grad:5.0f} T/m -> {protocols.project_sensitivity(be9_projection(dBdz=grad), 0.17, 0.34, 0.0):.2e}")
for axial in (50e3, 100e3, 200e3):
    s = protocols.project_sensitivity(be9_projection(axial_hz=axial), 0.17, 0.34, 0.0)
    print(f"  nu_z = {axial / 1e3:4.0f} kHz  -> {s:.2e}")
