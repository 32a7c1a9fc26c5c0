"""
Calibrating the gradient and the electrode coupling
===================================================

Two auxiliary measurements pin down the numbers that enter the transduction
coefficient. The magnetic gradient comes from the Zeeman splitting of two
ions a known distance apart. The electrode's geometric factor comes from the
frequency shift caused by a small static voltage.
"""

# %%
import numpy as np

from iontometer import physics, protocols
from iontometer.config import yb171_clock

cfg = yb171_clock()

# %%
# Two ions in the same well sit at the cube-root length scale apart. Their
# clock transitions differ because they see different magnetic fields.
yb = physics.species("171Yb+")
print(f"two-ion spacing {physics.two_ion_separation(yb, cfg.trap.nu_axial) * 1e6:.3f} um")
grad = protocols.calibrate_gradient(cfg, 10_000, seed=2)
print(f"gradient {grad.dBdz:.4f} +- {grad.dBdz_err:.1e} T/m")

# %%
# A static voltage on the electrode displaces the ion along the gradient and
# shifts the transition. The slope of that shift against voltage, divided by
# the transduction coefficient, is the geometric factor alpha.
cal = protocols.calibrate_geometric_factor(cfg, np.linspace(-0.05, 0.05, 11).round(3), 1000, seed=4)
print(cal.to_csv())
print(f"d omega / dV = {cal.d_omega_dV:.4g} rad/s/V, alpha = {cal.alpha:.2f} +- {cal.alpha_err:.2f} 1/m")
print(f"one volt on the electrode gives {abs(cal.alpha):.1f} V/m at the ion")
