"""Simulation and analysis of trapped-ion electrometry in a magnetic field gradient."""
from . import analysis, constants, physics, protocols, signals, spin
from .config import (SensorConfig, TimingBudget, be9_projection, yb171_clock,
                     yb171_first_order)
from .physics import (DomainError, GradientField, IonSpecies, ResonanceError, TrapConfig,
                      ZeemanTransition, species)

__version__ = "0.1.0"
