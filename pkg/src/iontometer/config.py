"""Sensor configuration: the full transduction chain plus readout and timing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import constants as const
from .physics import (GradientField, IonSpecies, TransductionChain, TrapConfig,
                      ZeemanTransition, species, transduction_gamma)
from .signals import CouplingModel


@dataclass(frozen=True)
class TimingBudget:
    """Dead time per shot; only the total ``t_m`` enters the sensitivity."""

    settling: float = 50e-3
    cooling_detection: float = 14.599e-3
    prep_pulses: float = 2.155e-3
    processing: float = 85e-6

    def __post_init__(self):
        for name in ("settling", "cooling_detection", "prep_pulses", "processing"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def t_m(self) -> float:
        return self.settling + self.cooling_detection + self.prep_pulses + self.processing

    @classmethod
    def lumped(cls, t_m: float) -> "TimingBudget":
        return cls(settling=0.0, cooling_detection=0.0, prep_pulses=0.0, processing=t_m)


@dataclass(frozen=True)
class SensorConfig:
    """Everything needed to turn an electric field into spin-readout statistics.

    Parameters
    ----------
    gamma_override : float, optional
        Measured transduction parameter (rad m/V). When given it replaces the
        forward chain product in all sensing simulations.
    readout_efficiency : float, optional
        ``C``; defaults to ``1/sqrt(1 + 4 eta)``.
    background_decay : float
        Spin-lock decay rate (1/s) present without injected noise.
    """

    ion: IonSpecies
    trap: TrapConfig
    gradient: GradientField
    transition: ZeemanTransition
    alpha: float = -95.64  # 1/m
    eta: float = 0.018
    T2: float = 0.304
    timing: TimingBudget = field(default_factory=TimingBudget)
    coupling: CouplingModel = field(default_factory=CouplingModel)
    gamma_override: float | None = None
    readout_efficiency: float | None = None
    background_decay: float = 0.0

    def __post_init__(self):
        if not 0 <= self.eta < 0.5:
            raise ValueError("eta must lie in [0, 0.5)")
        if not self.T2 > 0:
            raise ValueError("T2 must be positive")
        if self.readout_efficiency is not None and not 0 < self.readout_efficiency <= 1:
            raise ValueError("readout efficiency must lie in (0, 1]")
        if self.background_decay < 0:
            raise ValueError("background decay must be non-negative")

    @property
    def chain(self) -> TransductionChain:
        return transduction_gamma(self)

    @property
    def gamma(self) -> float:
        return self.gamma_override if self.gamma_override is not None else self.chain.gamma

    @property
    def C(self) -> float:
        if self.readout_efficiency is not None:
            return self.readout_efficiency
        return 1.0 / math.sqrt(1.0 + 4.0 * self.eta)

    @property
    def t_m(self) -> float:
        return self.timing.t_m

    def with_(self, **changes) -> "SensorConfig":
        return replace(self, **changes)


def yb171_clock(**changes) -> SensorConfig:
    """171Yb+ on the second-order clock transition, as used for echo sensing."""
    cfg = SensorConfig(
        ion=species("171Yb+"),
        trap=TrapConfig.from_hz(161.191e3),
        gradient=GradientField(B0=const.gauss_to_tesla(8.3767), dBdz=22.41),
        transition=ZeemanTransition.clock(),
        gamma_override=3998.0,
        readout_efficiency=0.97,
    )
    return replace(cfg, **changes)


def yb171_first_order(**changes) -> SensorConfig:
    """171Yb+ on the 1.4 MHz/G transition at 264.79 kHz, as used for spin locking."""
    cfg = SensorConfig(
        ion=species("171Yb+"),
        trap=TrapConfig.from_hz(264.79e3),
        gradient=GradientField(B0=const.gauss_to_tesla(8.3767), dBdz=22.41),
        transition=ZeemanTransition.first_order(),
        gamma_override=398.6e3,
        readout_efficiency=0.97,
    )
    return replace(cfg, **changes)


def be9_projection(dBdz: float = 200.0, axial_hz: float = 100e3,
                   hz_per_gauss: float = 2.1e6, **changes) -> SensorConfig:
    """Hypothetical 9Be+ sensor on a first-order transition in a strong gradient."""
    cfg = SensorConfig(
        ion=species("9Be+"),
        trap=TrapConfig.from_hz(axial_hz),
        gradient=GradientField(B0=0.0, dBdz=dBdz),
        transition=ZeemanTransition.first_order(hz_per_gauss),
        eta=0.0,
        T2=0.34,
        timing=TimingBudget.lumped(0.0),
    )
    return replace(cfg, **changes)
