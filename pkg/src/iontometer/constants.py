"""Physical constants, ion species table and unit conversions.

CODATA-2018 values. Everything inside the package is SI with angular
frequencies in rad/s; Hz and Gauss only appear at the configuration boundary.
"""
from __future__ import annotations

import math

ELEMENTARY_CHARGE = 1.602176634e-19  # C (exact)
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
COULOMB_CONSTANT = 1.0 / (4.0 * math.pi * VACUUM_PERMITTIVITY)  # m/F

GAUSS = 1e-4  # T
TWO_PI = 2.0 * math.pi

# Zeeman coefficients of the 171Yb+ clock and first-order transitions
SECOND_ORDER_HZ_PER_G2 = 310.8
FIRST_ORDER_HZ_PER_G = 1.4e6
YB171_HYPERFINE_HZ = 12.642812118e9


def hz_to_angular(f_hz: float) -> float:
    return TWO_PI * f_hz


def angular_to_hz(omega: float) -> float:
    return omega / TWO_PI


def gauss_to_tesla(b_gauss: float) -> float:
    return b_gauss * GAUSS


def tesla_to_gauss(b_tesla: float) -> float:
    return b_tesla / GAUSS
