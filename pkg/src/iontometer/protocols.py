"""End-to-end sensing experiments built from the physics, spin and analysis layers."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import analysis, physics
from .analysis import FitError, FitResult
from .config import SensorConfig
from .physics import DomainError
from .rng import generator
from .signals import (NoiseSpec, Tone, Waveform, apply_highpass, field_at_ion,
                      precompensate, synthesize_band_noise)
from .spin import (echo_contrast, echo_signal, evolve_echo_analytic, fringe_kappa,
                   fringe_scan, integrate_bloch_stochastic, sample_shots, spam_map)

NOISELESS_SHOTS = 10**12


def _workers(workers):
    if workers is not None:
        return max(int(workers), 1)
    return max(int(os.environ.get("IONTOMETER_THREADS", "1")), 1)


def _pmap(fn, items, workers=None):
    items = list(items)
    n = _workers(workers)
    if n == 1 or len(items) < 2:
        return [fn(i, x) for i, x in enumerate(items)]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, range(len(items)), items))


def _write_rows(header, rows, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _fmt(x):
    return repr(float(x)) if x is not None else ""


# --- Hahn-echo sensitivity -------------------------------------------------

@dataclass
class SensitivityReport:
    """Fringe fit and derived sensitivity at one evolution time.

    ``A`` is the spin contrast with the readout error divided out, so the
    slope is in ideal-spin units and the readout efficiency enters once,
    through ``sigma_tot = 1/(2 C sqrt(N))``. ``E_min`` is for a single shot.
    """

    tau: float
    mode: str
    A: float
    A_err: float
    kappa: float
    kappa_err: float
    phase: float
    offset: float
    slope_max: float
    E_min: float
    S: float
    S_err: float
    t_m: float
    converged: bool = True
    message: str = ""
    experiment: object = field(default=None, repr=False)

    @property
    def t_exp(self) -> float:
        return self.tau + self.t_m


def electrode_field_builder(cfg: SensorConfig, tau: float, mode: str):
    """Field at the ion after pre-compensation and the coupling capacitor."""
    def build(delta_E: float) -> Waveform:
        target = echo_signal(tau, delta_E, mode)
        volts = tuple(Tone(t.amplitude / cfg.alpha, t.frequency, t.phase, t.start, t.stop)
                      for t in target.tones)
        electrode = Waveform.from_tones(volts, target.duration, target.sample_rate, "volt_electrode")
        awg, _ = precompensate(electrode, cfg.coupling)
        return field_at_ion(apply_highpass(awg, cfg.coupling), cfg.alpha)
    return build


def _failed_report(tau, mode, cfg, msg, exp=None):
    nan = float("nan")
    return SensitivityReport(tau, mode, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan,
                             cfg.t_m, False, msg, exp)


def sensitivity_point(cfg: SensorConfig, tau: float, mode: str = "AC", shots: int | None = 3000,
                      seed: int = 0, n_points: int = 12, periods: float = 1.5) -> SensitivityReport:
    """One fringe scan over ``periods`` expected fringe periods and its sensitivity."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    kappa0 = fringe_kappa(cfg.gamma, tau, mode)
    amps = np.linspace(0.0, periods * kappa0, n_points)
    exp = fringe_scan(cfg, tau, mode, amps, shots or 1, seed, electrode_field_builder(cfg, tau, mode))
    if shots is None:
        p = spam_map(exp.p_up_ideal, cfg.eta)
        sig = analysis.binomial_sigma(p, NOISELESS_SHOTS)
        exp.shots, exp.up_counts = NOISELESS_SHOTS, np.rint(p * NOISELESS_SHOTS).astype(np.int64)
    else:
        p = exp.p_up
        sig = analysis.binomial_sigma(p, shots)
    try:
        fit = analysis.fit_sinusoid(amps, p, sig)
    except FitError as err:
        return _failed_report(tau, mode, cfg, str(err), exp)
    if not fit.converged:
        return _failed_report(tau, mode, cfg, fit.message or "fit did not converge", exp)
    vis = 1 - 2 * cfg.eta
    A, kappa = fit["A"] / vis, fit["kappa"]
    sA, sk = fit.stderr("A") / vis, fit.stderr("kappa")
    cAk = fit.covariance[0, 1] / vis
    slope = 0.5 * A * 2 * math.pi / kappa
    e_min = analysis.emin_from_slope(slope, cfg.C, 1)
    S = e_min * math.sqrt(tau + cfg.t_m)
    rel2 = (sA / A) ** 2 + (sk / kappa) ** 2 - 2 * cAk / (A * kappa)
    return SensitivityReport(tau, mode, A, sA, kappa, sk, fit["phase"], fit["offset"], slope,
                             e_min, S, S * math.sqrt(max(rel2, 0.0)), cfg.t_m, True, "", exp)


def run_sensitivity_campaign(cfg: SensorConfig, mode: str, taus: Sequence[float], shots: int | None,
                             seed: int, n_points: int = 12, periods: float = 1.5,
                             workers: int | None = None) -> list[SensitivityReport]:
    """Sensitivity against evolution time; point ``j`` uses the stream ``(seed, j)``."""
    if n_points < 12:
        raise ValueError("a fringe needs at least 12 amplitude points")

    mode_code = {"AC": 0, "DC": 1}[mode]

    def one(j, tau):
        key = int(np.random.SeedSequence([seed, mode_code, j]).generate_state(1, np.uint32)[0])
        return sensitivity_point(cfg, tau, mode, shots, key, n_points, periods)

    return _pmap(one, taus, workers)


def campaign_csv(reports: Sequence[SensitivityReport], path=None) -> str:
    rows = [[_fmt(r.tau), r.mode, _fmt(r.A), _fmt(r.A_err), _fmt(r.kappa), _fmt(r.E_min),
             _fmt(r.S), _fmt(r.S_err)] for r in reports]
    return _write_rows(["tau_s", "mode", "A", "A_err", "kappa_V_per_m", "E_min", "S", "S_err"], rows, path)


# --- shot-noise scaling ----------------------------------------------------

@dataclass
class ShotNoiseTable:
    N: np.ndarray
    k: np.ndarray
    t_exp: np.ndarray
    E_min: np.ndarray
    E_min_err: np.ndarray
    slope: float
    slope_err: float
    E_1s: float
    E_1s_err: float
    operating_point: float  # V/m
    p_operating: float

    def to_csv(self, path=None) -> str:
        rows = [[_fmt(t), _fmt(e), _fmt(s)] for t, e, s in zip(self.t_exp, self.E_min, self.E_min_err)]
        return _write_rows(["t_exp_s", "E_min_V_per_m", "E_min_err"], rows, path)


def run_shot_noise_scaling(cfg: SensorConfig, tau_opt: float, M_total: int, subset_sizes: Sequence[int],
                           seed: int, mode: str = "AC") -> ShotNoiseTable:
    """Minimum detectable field against averaging time from one long shot record.

    The signal amplitude is set to one fringe period so the ideal P_up is 1/2
    on a rising edge. The record of ``M_total`` shots is split into
    ``k = M/N`` blocks; the spread of the block means divided by the spin
    response slope gives ``E_min(N)``. Readout error is symmetric, so it does
    not change the spread at P = 1/2 and the slope is the ideal-spin one.
    """
    kappa = fringe_kappa(cfg.gamma, tau_opt, mode)
    out = evolve_echo_analytic(cfg, tau_opt, echo_signal(tau_opt, kappa, mode), mode)
    slope = 0.5 * out.contrast * 2 * math.pi / kappa * math.cos(out.phase)
    rng = generator(seed, M_total)
    shots = rng.random(M_total) < out.p_up_measured
    rows = []
    for N in sorted(set(int(n) for n in subset_sizes)):
        if N < 1 or M_total % N:
            raise ValueError(f"subset size {N} does not divide {M_total}")
        k = M_total // N
        if k < 10:
            continue
        means = shots.reshape(k, N).mean(axis=1)
        e = means.std(ddof=1) / slope
        rows.append((N, k, N * (tau_opt + cfg.t_m), e, e / math.sqrt(2 * (k - 1))))
    if len(rows) < 3:
        raise ValueError("fewer than three usable subset sizes")
    N, k, t_exp, E, dE = (np.array(c) for c in zip(*rows))
    fit = analysis.fit_line(np.log(t_exp), np.log(E), dE / E)
    e1 = math.exp(fit["intercept"])
    return ShotNoiseTable(N.astype(int), k.astype(int), t_exp, E, dE, fit["slope"], fit.stderr("slope"),
                          e1, e1 * fit.stderr("intercept"), kappa, out.p_up_ideal)


# --- spin-locking relaxometry ----------------------------------------------

@dataclass
class SpinLockLevel:
    psd_two_sided: float
    durations: np.ndarray
    p_up: np.ndarray
    p_err: np.ndarray
    fit: FitResult

    @property
    def gamma(self) -> float:
        return self.fit["Gamma"]

    @property
    def gamma_err(self) -> float:
        return self.fit.stderr("Gamma")


@dataclass
class SpinLockResult:
    levels: list[SpinLockLevel]
    gamma0: float | None
    S_E_min: float | None
    S_E: np.ndarray  # inverted from each level's decay rate
    transduction: float

    @property
    def psd(self) -> np.ndarray:
        return np.array([lv.psd_two_sided for lv in self.levels])

    @property
    def gammas(self) -> np.ndarray:
        return np.array([lv.gamma for lv in self.levels])

    def to_csv(self, path=None) -> str:
        order = np.argsort(self.psd, kind="stable")
        rows = [[_fmt(self.levels[i].psd_two_sided), _fmt(self.levels[i].gamma),
                 _fmt(self.levels[i].gamma_err)] for i in order]
        return _write_rows(["psd_two_sided", "gamma_per_s", "gamma_err"], rows, path)


def decay_rate(gamma: float, psd_two_sided: float) -> float:
    """Spin-lock decay rate ``gamma^2 S_E / 2`` for a two-sided field PSD."""
    return 0.5 * gamma * gamma * psd_two_sided


def psd_from_decay(gamma: float, rate: float) -> float:
    return 2.0 * rate / (gamma * gamma)


def spin_lock_population(cfg: SensorConfig, lock_rabi: float, psd: float, tau: float, seed: int,
                         realizations: int = 200, bandwidth: float = 3e3, center: float | None = None,
                         record: float | None = None) -> float:
    """Ensemble-mean locked population after ``tau``.

    Each realization sees an independent noise record of length ``record``
    (default ``4 tau``) so the band's bin spacing stays fine compared to the
    decay rate.
    """
    if tau == 0:
        return 1.0
    if psd == 0:
        return 0.5 * (1 + math.exp(-cfg.background_decay * tau))
    center = lock_rabi / (2 * math.pi) if center is None else center
    record = 4 * tau if record is None else record
    acc = 0.0
    for r in range(realizations):
        w = synthesize_band_noise(NoiseSpec(center, bandwidth, psd, record, seed, realization=r, gaussian=True))
        acc += integrate_bloch_stochastic(cfg, lock_rabi, w, tau, f_max=center + bandwidth / 2)
    return acc / realizations


def run_spin_locking(cfg: SensorConfig, lock_rabi: float, psd_levels: Sequence[float], durations,
                     shots: int, seed: int, realizations: int = 200, bandwidth: float = 3e3,
                     center: float | None = None, workers: int | None = None,
                     n_durations: int = 24) -> SpinLockResult:
    """Decay rate against injected noise level, and the SNR = 1 floor.

    ``durations`` is one grid shared by all levels, a list of grids (one per
    level), or ``None`` to place ``n_durations`` points over three expected
    decay times. The zero-noise level has a closed form and costs nothing, so
    it gets twice as many points; its rate sets the floor. Every (level,
    duration) pair gets its own noise realizations.
    """
    levels = [float(s) for s in psd_levels]
    if 0.0 not in levels:
        raise ValueError("include a zero-noise level to measure the background decay")
    g = cfg.gamma
    if durations is None:
        grids = [np.linspace(0, 3 / (decay_rate(g, s) + cfg.background_decay or 1.0),
                             n_durations if s else 2 * n_durations)
                 for s in levels]
    elif np.ndim(durations[0]) == 0:
        grids = [np.asarray(durations, dtype=float)] * len(levels)
    else:
        grids = [np.asarray(d, dtype=float) for d in durations]
        if len(grids) != len(levels):
            raise ValueError("need one duration grid per level")

    tasks = [(i, j, levels[i], t) for i, grid in enumerate(grids) for j, t in enumerate(grid)]

    def population(_, task):
        i, j, psd, t = task
        key = int(np.random.SeedSequence([seed, i, j]).generate_state(1, np.uint32)[0])
        return spin_lock_population(cfg, lock_rabi, psd, t, key, realizations, bandwidth, center)

    flat = _pmap(population, tasks, workers)
    out, pos = [], 0
    for i, (psd, grid) in enumerate(zip(levels, grids)):
        p_ideal = np.array(flat[pos:pos + grid.size])
        pos += grid.size
        counts = sample_shots(p_ideal, cfg.eta, shots, rng=generator(seed, i, 1))
        p = counts / shots
        sig = analysis.binomial_sigma(p, shots)
        fit = analysis.fit_exponential_decay(grid, p, sig, eta=cfg.eta)
        out.append(SpinLockLevel(psd, grid, p, sig, fit))

    zero = out[levels.index(0.0)]
    gamma0 = zero.gamma
    S_E = np.array([psd_from_decay(g, max(lv.gamma - gamma0, 0.0)) for lv in out])
    return SpinLockResult(out, gamma0, psd_from_decay(g, gamma0), S_E, g)


# --- coherence time ------------------------------------------------------

@dataclass
class T2Result:
    fit: FitResult
    points: np.ndarray  # (tau, A, sigma_A)

    @property
    def T2(self) -> float:
        return self.fit["T2"]

    @property
    def T2_err(self) -> float:
        return self.fit.stderr("T2")

    def to_csv(self, path=None) -> str:
        rows = [[_fmt(t), _fmt(a), _fmt(s)] for t, a, s in self.points]
        return _write_rows(["tau_s", "contrast", "contrast_err"], rows, path)


def run_t2(cfg: SensorConfig, taus: Sequence[float], shots: int, seed: int, n_phases: int = 25) -> T2Result:
    """Echo fringe contrast against evolution time, by scanning the readout phase over 4 pi."""
    theta = np.linspace(-2 * np.pi, 2 * np.pi, n_phases)
    pts = []
    for j, tau in enumerate(taus):
        A = echo_contrast(tau, cfg.T2)
        p_ideal = 0.5 + 0.5 * A * np.sin(theta)
        counts = sample_shots(p_ideal, cfg.eta, shots, rng=generator(seed, j, 2))
        p = counts / shots
        fit = analysis.fit_sinusoid(theta, p, analysis.binomial_sigma(p, shots))
        vis = 1 - 2 * cfg.eta
        pts.append((tau, fit["A"] / vis, fit.stderr("A") / vis))
    pts = np.array(pts)
    return T2Result(analysis.measure_T2(pts), pts)


# --- calibrations ----------------------------------------------------------

@dataclass
class AlphaCalibration:
    alpha: float
    alpha_err: float
    d_omega_dV: float
    d_omega_dV_err: float
    gamma: float
    dV: np.ndarray
    d_omega: np.ndarray
    d_omega_err: np.ndarray

    def to_csv(self, path=None) -> str:
        rows = [[_fmt(v), _fmt(w), _fmt(s)] for v, w, s in zip(self.dV, self.d_omega, self.d_omega_err)]
        return _write_rows(["dV_V", "d_omega_rad_per_s", "d_omega_err"], rows, path)


def calibrate_geometric_factor(cfg: SensorConfig, dV_points: Sequence[float], shots: int, seed: int,
                               alpha_true: float | None = None, probe_time: float = 10e-3) -> AlphaCalibration:
    """Recover the electrode geometric factor from transition-frequency shifts.

    The simulated shift at offset ``dV`` is ``gamma * alpha_true * dV`` with
    the forward-chain ``gamma``; each frequency reading carries projection
    noise ``1/(C t_probe sqrt(shots))``. The fitted ``d omega/dV`` is turned
    back into ``alpha`` through ``dE/dz = m nu^2 / q`` and the Zeeman slope.
    """
    chain = cfg.chain
    denom = chain.dBdz * chain.d_omega_dB
    if denom == 0:
        raise DomainError("zero gradient or field slope: the geometric factor is indeterminate")
    alpha_true = cfg.alpha if alpha_true is None else alpha_true
    dV = np.asarray(dV_points, dtype=float)
    sigma = 1.0 / (cfg.C * probe_time * math.sqrt(shots))
    rng = generator(seed, 3)
    d_omega = chain.gamma * alpha_true * dV + sigma * rng.standard_normal(dV.size)
    err = np.full(dV.size, sigma)
    line = analysis.fit_line(dV, d_omega, err)
    dwdv, s_dwdv = line["slope"], line.stderr("slope")
    dE_dz = 1.0 / chain.dr_dE
    alpha = dwdv * dE_dz / denom
    return AlphaCalibration(alpha, abs(s_dwdv * dE_dz / denom), dwdv, s_dwdv, dwdv / alpha, dV, d_omega, err)


@dataclass
class GradientCalibration:
    separation: float
    B1: float
    B2: float
    dBdz: float
    dBdz_err: float


def calibrate_gradient(cfg: SensorConfig, shots: int, seed: int, probe_time: float = 10e-3) -> GradientCalibration:
    """Two-ion gradient measurement on the clock transition.

    Each ion's transition frequency is read with projection noise and inverted
    to a field through the second-order Zeeman shift.
    """
    from .physics import ZeemanTransition, zeeman_shift
    dZ = physics.two_ion_separation(cfg.ion, cfg.trap.nu_axial, 2)
    G = cfg.gradient.dBdz
    clock = ZeemanTransition.clock()
    true_B = [cfg.gradient.B0 - G * dZ / 2, cfg.gradient.B0 + G * dZ / 2]
    sigma = 1.0 / (cfg.C * probe_time * math.sqrt(shots))
    rng = generator(seed, 4)
    Bs, errs = [], []
    for B in true_B:
        shift, slope = zeeman_shift(clock, max(B, 0.0))
        measured = shift + sigma * rng.standard_normal()
        k = shift / B**2 if B > 0 else 2 * math.pi * clock.coeff / 1e-8
        Bm = math.sqrt(max(measured, 0.0) / k)
        Bs.append(Bm)
        errs.append(sigma / abs(slope) if slope else math.inf)
    grad = physics.gradient_from_two_ion(Bs[0], Bs[1], dZ)
    return GradientCalibration(dZ, Bs[0], Bs[1], grad, math.hypot(*errs) / dZ)


# --- projection -------------------------------------------------------------

def project_sensitivity(hypothetical: SensorConfig, tau: float, T2: float, t_m: float) -> float:
    """AC sensitivity of a hypothetical sensor from its forward transduction chain."""
    return analysis.theoretical_sensitivity(tau, T2, t_m, hypothetical.chain.gamma, hypothetical.C, "AC")
