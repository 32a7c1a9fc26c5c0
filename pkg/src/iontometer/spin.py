"""Two-level spin evolution: echo sequences, spin locking and projective readout.

State vectors are ordered ``(up, down)``; ``sigma_z |up> = +|up>``. A field
``E`` detunes the transition by ``gamma * E`` and the free-evolution
Hamiltonian in the rotating frame is ``(Delta/2) sigma_z``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence, Union

import numba
import numpy as np

from .physics import DomainError
from .rng import generator
from .signals import Tone, Waveform

Mode = Literal["AC", "DC"]


# --- pulse sequences -------------------------------------------------------

@dataclass(frozen=True)
class Pulse:
    axis_phase: float  # rad, 0 = x, pi/2 = y
    angle: float  # rad
    instantaneous: bool = True
    rabi: float | None = None  # rad/s, for finite-duration pulses

    def __post_init__(self):
        if not 0 < self.angle <= 2 * math.pi + 1e-12:
            raise ValueError("pulse angle must lie in (0, 2 pi]")
        if not self.instantaneous and not (self.rabi and self.rabi > 0):
            raise ValueError("a finite-duration pulse needs a positive Rabi frequency")

    @property
    def duration(self) -> float:
        return 0.0 if self.instantaneous else self.angle / self.rabi


@dataclass(frozen=True)
class FreeEvolution:
    duration: float
    field: Waveform | None = None
    t_start: float = 0.0  # position of the window on the field's time axis

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("durations must be non-negative")


Element = Union[Pulse, FreeEvolution]


@dataclass(frozen=True)
class PulseSequence:
    elements: tuple[Element, ...]

    @property
    def duration(self) -> float:
        return sum(e.duration for e in self.elements)


def rotation(angle: float, axis_phase: float) -> np.ndarray:
    """SU(2) rotation by ``angle`` about ``cos(phi) x + sin(phi) y``."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    e = complex(math.cos(axis_phase), math.sin(axis_phase))
    return np.array([[c, -1j * s * e.conjugate()], [-1j * s * e, c]])


def free_precession(phase: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * phase), np.exp(0.5j * phase)])


# Final pi/2 is shifted by 90 degrees from the first so P_up = 1/2 + 1/2 sin(phi).
READOUT_PHASE = math.pi / 2


def hahn_echo_sequence(tau: float, field: Waveform | None = None) -> PulseSequence:
    return PulseSequence((
        Pulse(0.0, math.pi / 2),
        FreeEvolution(tau / 2, field, 0.0),
        Pulse(0.0, math.pi),
        FreeEvolution(tau / 2, field, tau / 2),
        Pulse(READOUT_PHASE, math.pi / 2),
    ))


def window_integral(w: Waveform, a: float, b: float, method: str = "auto") -> float:
    """Integral of ``w`` over ``[a, b]`` (closed form for tone waveforms)."""
    if b <= a:
        return 0.0
    if method == "auto":
        method = "closed" if w.tones is not None else "trapezoid"
    if method == "closed":
        if w.tones is None:
            raise ValueError("closed-form integration needs a tone waveform")
        return float(sum(t.integral(a, b) for t in w.tones))
    t = w.times
    inside = (t > a) & (t < b)
    ts = np.concatenate([[a], t[inside], [b]])
    vs = np.interp(ts, t, w.samples)
    return float(np.trapezoid(vs, ts))


def run_sequence(seq: PulseSequence, gamma: float, method: str = "auto") -> float:
    """Ideal P_up after applying ``seq`` to |down> with instantaneous pulses."""
    psi = np.array([0.0, 1.0], dtype=complex)
    for el in seq.elements:
        if isinstance(el, Pulse):
            psi = rotation(el.angle, el.axis_phase) @ psi
        elif el.field is not None:
            phase = gamma * window_integral(el.field, el.t_start, el.t_start + el.duration, method)
            psi = free_precession(phase) @ psi
    return float(abs(psi[0]) ** 2)


# --- readout ---------------------------------------------------------------

@dataclass(frozen=True)
class SpinOutcome:
    p_up_ideal: float
    p_up_measured: float
    contrast: float
    phase: float = 0.0

    def __post_init__(self):
        for p in (self.p_up_ideal, self.p_up_measured):
            if not -1e-12 <= p <= 1 + 1e-12:
                raise ValueError("probabilities must lie in [0, 1]")


def spam_map(p, eta):
    """Symmetric bit-flip readout: ``eta + (1 - 2 eta) p``."""
    return eta + (1 - 2 * eta) * np.asarray(p) if not np.isscalar(p) else eta + (1 - 2 * eta) * p


def sample_shots(p_true, eta: float, n: int, seed: int | None = None, rng=None):
    """Number of 'up' outcomes in ``n`` shots of a state with ideal P_up ``p_true``."""
    p = np.asarray(p_true, dtype=float)
    if np.any((p < 0) | (p > 1)) or not 0 <= eta < 0.5:
        raise DomainError("need 0 <= p_true <= 1 and 0 <= eta < 0.5")
    if n < 0:
        raise DomainError("shot count must be non-negative")
    if rng is None:
        rng = generator(0 if seed is None else seed, n)
    counts = rng.binomial(n, np.clip(eta + (1 - 2 * eta) * p, 0.0, 1.0))
    return int(counts) if np.ndim(counts) == 0 else counts


# --- Hahn-echo sensing -----------------------------------------------------

def echo_signal(tau: float, delta_E: float, mode: Mode = "AC", sample_rate: float | None = None,
                phase: float = 0.0) -> Waveform:
    """Field at the ion for one echo shot.

    ``delta_E`` is the half-cycle average ``(2/pi) E_PK``. AC mode applies one
    full period of frequency ``1/tau`` across both windows; DC mode applies
    the first half period only.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    e_pk = 0.5 * math.pi * delta_E
    stop = tau if mode == "AC" else tau / 2
    rate = sample_rate if sample_rate is not None else 256.0 / tau
    return Waveform.from_tones([Tone(e_pk, 1.0 / tau, phase, 0.0, stop)], tau, rate)


def echo_phase(gamma: float, tau: float, field: Waveform, mode: Mode = "AC", method: str = "auto") -> float:
    """Coherent phase ``gamma * (int_0^{tau/2} E - int_{tau/2}^{tau} E)``.

    In DC mode the signal is present only during the first window.
    """
    need = tau if mode == "AC" else tau / 2
    if field.t0 > 0 or field.t0 + field.duration < need * (1 - 1e-12):
        raise ValueError(f"field covers [{field.t0:g}, {field.t0 + field.duration:g}] s, "
                         f"sequence needs [0, {need:g}] s")
    first = window_integral(field, 0.0, tau / 2, method)
    if mode == "DC":
        return gamma * first
    if mode != "AC":
        raise ValueError(f"mode must be 'AC' or 'DC', got {mode!r}")
    return gamma * (first - window_integral(field, tau / 2, tau, method))


def echo_contrast(tau, T2: float):
    return np.exp(-(np.asarray(tau) / T2) ** 2) if not np.isscalar(tau) else math.exp(-(tau / T2) ** 2)


def evolve_echo_analytic(cfg, tau: float, field: Waveform, mode: Mode = "AC") -> SpinOutcome:
    phi = echo_phase(cfg.gamma, tau, field, mode)
    A = echo_contrast(tau, cfg.T2)
    p = 0.5 + 0.5 * A * math.sin(phi)
    return SpinOutcome(p, spam_map(p, cfg.eta), A, phi)


def fringe_kappa(gamma: float, tau: float, mode: Mode = "AC") -> float:
    """Field (half-cycle average) producing a full 2 pi of phase."""
    k = 2 * math.pi / (gamma * tau)
    return 2 * k if mode == "DC" else k


@dataclass
class ExperimentResult:
    amplitudes: np.ndarray  # V/m, half-cycle average
    shots: int
    up_counts: np.ndarray
    seed: int
    tau: float
    mode: str
    p_up_ideal: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def p_up(self) -> np.ndarray:
        return self.up_counts / self.shots

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setting_index", "amplitude_V_per_m", "shots", "up_count", "seed"])
        for i, (a, c) in enumerate(zip(self.amplitudes, self.up_counts)):
            w.writerow([i, repr(float(a)), self.shots, int(c), self.seed])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, tau: float, mode: str) -> "ExperimentResult":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([float(r["amplitude_V_per_m"]) for r in rows]), int(rows[0]["shots"]),
                   np.array([int(r["up_count"]) for r in rows]), int(rows[0]["seed"]), tau, mode)


def fringe_scan(cfg, tau: float, mode: Mode, amplitudes: Sequence[float], shots_per_point: int,
                seed: int, field_builder=None) -> ExperimentResult:
    """Echo fringe: analytic evolution then binomial readout at each amplitude.

    ``field_builder(delta_E)`` may supply the field at the ion (e.g. after the
    coupling network); by default the ideal :func:`echo_signal` is used.
    """
    amps = np.asarray(amplitudes, dtype=float)
    p_ideal = np.empty_like(amps)
    counts = np.empty(amps.size, dtype=np.int64)
    for i, dE in enumerate(amps):
        fld = field_builder(dE) if field_builder is not None else echo_signal(tau, dE, mode)
        out = evolve_echo_analytic(cfg, tau, fld, mode)
        p_ideal[i] = out.p_up_ideal
        counts[i] = sample_shots(out.p_up_ideal, cfg.eta, shots_per_point, rng=generator(seed, i))
    return ExperimentResult(amps, shots_per_point, counts, seed, tau, mode, p_ideal)


# --- spin locking ----------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _lock_kernel(detuning, omega, dt, n_full, t_rem, psi):
    a, b = psi[0], psi[1]
    for i in range(n_full + 1):
        h = dt if i < n_full else t_rem
        if h <= 0.0:
            continue
        d = detuning[i]
        norm = math.sqrt(omega * omega + d * d)
        if norm == 0.0:
            continue
        th = 0.5 * norm * h
        c = math.cos(th)
        s = math.sin(th)
        nx = omega / norm
        nz = d / norm
        a2 = complex(c, -s * nz) * a + complex(0.0, -s * nx) * b
        b2 = complex(0.0, -s * nx) * a + complex(c, s * nz) * b
        a, b = a2, b2
    out = np.empty(2, dtype=np.complex128)
    out[0] = a
    out[1] = b
    return out


def propagate_locked(detuning: np.ndarray, omega: float, dt: float, duration: float,
                     psi0: np.ndarray | None = None) -> np.ndarray:
    """Spinor after ``duration`` under ``(omega/2) sx + (detuning[i]/2) sz``.

    ``detuning[i]`` is held constant over ``[i dt, (i+1) dt)``; every step is
    an exact SU(2) rotation.
    """
    n_full = int(math.floor(duration / dt + 1e-9))
    t_rem = duration - n_full * dt
    if t_rem < 1e-9 * dt:
        t_rem = 0.0
    need = n_full + (1 if t_rem > 0 else 0)
    if need > detuning.size:
        raise ValueError(f"detuning record covers {detuning.size * dt:g} s, need {duration:g} s")
    det = np.ascontiguousarray(detuning, dtype=np.float64)
    if det.size == n_full:
        det = np.append(det, 0.0)
    psi = (np.array([1.0, 1.0], dtype=np.complex128) / math.sqrt(2.0) if psi0 is None
           else np.asarray(psi0, dtype=np.complex128))
    return _lock_kernel(det, float(omega), float(dt), n_full, float(t_rem), psi)


def _estimate_f_max(w: Waveform) -> float:
    power = np.abs(np.fft.rfft(w.samples)) ** 2
    total = power.sum()
    if total == 0:
        return 0.0
    f = np.fft.rfftfreq(w.samples.size, w.dt)
    return float(f[np.searchsorted(np.cumsum(power), total * (1 - 1e-9))])


def integrate_bloch_stochastic(cfg, lock_rabi: float, noise_field: Waveform, tau: float,
                               f_max: float | None = None) -> float:
    """P_up after a spin-lock of length ``tau`` in the field record ``noise_field``.

    The spin starts in the locked eigenstate |+x>; the final pi/2 maps it to
    |up>, so the return value is the population left in the locked state,
    further reduced by the configuration's background decay rate.
    """
    if f_max is None:
        f_max = _estimate_f_max(noise_field)
    if f_max > 0 and noise_field.dt > 1.0 / (20.0 * f_max) * (1 + 1e-9):
        raise ValueError(f"step {noise_field.dt:g} s exceeds 1/(20 f_max) for f_max = {f_max:g} Hz")
    if noise_field.samples.size * noise_field.dt < tau * (1 - 1e-12):
        raise ValueError("noise record shorter than the lock duration")
    psi = propagate_locked(cfg.gamma * noise_field.samples, lock_rabi, noise_field.dt, tau)
    sx = 2.0 * (psi[0].conjugate() * psi[1]).real
    return float(0.5 * (1.0 + sx * math.exp(-cfg.background_decay * tau)))
