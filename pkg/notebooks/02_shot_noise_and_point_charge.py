"""
Projection noise and the distance to a single charge
====================================================

At the steepest point of the fringe the only noise left is the binomial
scatter of the spin readout. Averaging more shots therefore improves the
field resolution as one over the square root of the measurement time. This
script checks that scaling on a long simulated record and turns the
one-second resolution into the distance at which a single elementary charge
would be detectable.
"""

# %%
from iontometer import analysis, physics, protocols
from iontometer.config import yb171_clock

cfg = yb171_clock()
opt = analysis.optimal_tau(cfg.T2, cfg.t_m, cfg.gamma, cfg.C)

# %%
# 50 000 shots at the operating point are cut into blocks of different sizes.
# The spread of the block estimates is converted into a field uncertainty.
table = protocols.run_shot_noise_scaling(cfg, opt.tau, 50_000,
                                         [10, 20, 50, 100, 200, 500, 1000, 2500, 5000], seed=7)
print(table.to_csv())
print(f"log-log slope {table.slope:.3f} +- {table.slope_err:.3f} (ideal -0.5)")

# %%
# The fitted line evaluated at one second gives the sensitivity directly.
# A point charge produces e / (4 pi eps0 r^2); solving for r gives the reach.
r = physics.point_charge_distance(table.E_1s)
print(f"E_min after 1 s: {table.E_1s:.3e} V/m")
print(f"single charge detectable out to {r * 1e3:.3f} mm")
