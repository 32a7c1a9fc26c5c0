"""Signal chain from waveform generator to electric field at the ion.

Waveforms optionally carry the list of tones they were rendered from. Filters
and phase integrals then act on the tones in closed form, and the samples are
only a rendering of that description.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from .physics import DomainError
from .rng import keyed_uniform

Unit = Literal["volt_awg", "volt_electrode", "field_V_per_m"]
UNITS = ("volt_awg", "volt_electrode", "field_V_per_m")


@dataclass(frozen=True)
class Tone:
    """``amplitude * sin(2 pi frequency t + phase)`` for ``start <= t < stop``."""

    amplitude: float
    frequency: float  # Hz
    phase: float = 0.0
    start: float = 0.0
    stop: float = math.inf

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        v = self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase)
        return np.where((t >= self.start) & (t < self.stop), v, 0.0)

    def integral(self, a: float, b: float) -> float:
        """Exact integral of the tone over ``[a, b]``."""
        lo, hi = max(a, self.start), min(b, self.stop)
        if hi <= lo:
            return 0.0
        if self.frequency == 0:
            return self.amplitude * math.sin(self.phase) * (hi - lo)
        w = 2 * math.pi * self.frequency
        # cos(x) - cos(y) = -2 sin((x+y)/2) sin((x-y)/2) keeps short windows accurate
        x, y = w * lo + self.phase, w * hi + self.phase
        return self.amplitude * 2 * math.sin(0.5 * (x + y)) * math.sin(0.5 * (y - x)) / w


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: float  # Hz
    unit: Unit = "field_V_per_m"
    tones: tuple[Tone, ...] | None = None
    t0: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("waveform needs a non-empty 1-D sample array")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}")
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_tones(cls, tones: Sequence[Tone], duration: float, sample_rate: float,
                   unit: Unit = "field_V_per_m", t0: float = 0.0) -> "Waveform":
        n = max(int(round(duration * sample_rate)) + 1, 2)
        t = t0 + np.arange(n) / sample_rate
        samples = np.zeros(n)
        for tone in tones:
            samples += tone(t)
        return cls(samples, sample_rate, unit, tuple(tones), t0)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    @property
    def duration(self) -> float:
        return (self.samples.size - 1) / self.sample_rate

    def __len__(self):
        return self.samples.size

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# unit={self.unit}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "value"])
        for t, v in zip(self.times, self.samples):
            w.writerow([repr(float(t)), repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "Waveform":
        with open(path, newline="") as fh:
            first = fh.readline().strip()
            if not first.startswith("# unit="):
                raise ValueError("missing '# unit=' header line")
            unit = first.split("=", 1)[1]
            rows = list(csv.reader(fh))
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        rate = 1.0 / (data[1, 0] - data[0, 0])
        return cls(data[:, 1], rate, unit, None, float(data[0, 0]))


@dataclass(frozen=True)
class CouplingModel:
    """First-order RC high-pass formed by the coupling capacitor.

    ``effective_resistance`` may be ``math.inf`` for an ideal (all-pass) coupling.
    """

    capacitance: float = 220e-12  # F
    effective_resistance: float = math.inf  # Ohm

    def __post_init__(self):
        if not self.capacitance > 0:
            raise ValueError("capacitance must be positive")
        if not self.effective_resistance > 0:
            raise ValueError("effective resistance must be positive")

    @property
    def rc(self) -> float:
        return self.capacitance * self.effective_resistance

    @property
    def cutoff(self) -> float:
        """Corner angular frequency 1/(RC) in rad/s."""
        return 1.0 / self.rc


@dataclass(frozen=True)
class NoiseSpec:
    """Band-limited flat noise; ``psd_two_sided`` is per Hz in (V/m)^2/Hz."""

    center: float  # Hz
    bandwidth: float  # Hz
    psd_two_sided: float
    duration: float  # s
    seed: int = 0
    sample_rate: float | None = None  # defaults to 20x the band edge
    realization: int = 0
    gaussian: bool = False  # Rayleigh-distributed bin amplitudes instead of fixed ones

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.center - self.bandwidth / 2 > 0:
            raise ValueError("band must lie at positive frequencies")
        if self.psd_two_sided < 0:
            raise ValueError("psd must be non-negative")
        if not self.duration > 0:
            raise ValueError("duration must be positive")

    @property
    def f_max(self) -> float:
        return self.center + self.bandwidth / 2


def field_at_ion(V, alpha: float):
    """Field at the ion for electrode voltage ``V`` (float, array or Waveform)."""
    if isinstance(V, Waveform):
        tones = None if V.tones is None else tuple(replace(t, amplitude=alpha * t.amplitude) for t in V.tones)
        return Waveform(alpha * V.samples, V.sample_rate, "field_V_per_m", tones, V.t0)
    return alpha * np.asarray(V) if not np.isscalar(V) else alpha * V


def highpass_gain(model: CouplingModel, omega: float) -> tuple[float, float]:
    """Magnitude and phase lead of ``H = j w RC / (1 + j w RC)``."""
    if omega < 0:
        raise ValueError("omega must be non-negative")
    if math.isinf(model.rc):
        return 1.0, 0.0
    x = omega * model.rc
    return x / math.hypot(1.0, x), math.atan2(1.0, x)


def _filter_tones(tones, model, inverse=False):
    out = []
    for t in tones:
        mag, ph = highpass_gain(model, 2 * math.pi * t.frequency)
        if inverse:
            if mag == 0.0:
                raise DomainError("a DC tone cannot be passed through the coupling capacitor")
            out.append(replace(t, amplitude=t.amplitude / mag, phase=t.phase - ph))
        else:
            out.append(replace(t, amplitude=t.amplitude * mag, phase=t.phase + ph))
    return tuple(out)


def apply_highpass(w: Waveform, model: CouplingModel) -> Waveform:
    """Steady-state response of the coupling network (AWG volts -> electrode volts).

    Tone-described waveforms are filtered exactly per tone; bare samples are
    filtered in the frequency domain under a periodic-extension assumption.
    """
    if w.tones is not None:
        tones = _filter_tones(w.tones, model)
        return Waveform.from_tones(tones, w.duration, w.sample_rate, "volt_electrode", w.t0)
    spec = np.fft.rfft(w.samples)
    f = np.fft.rfftfreq(w.samples.size, w.dt)
    if math.isinf(model.rc):
        h = np.ones_like(f, dtype=complex)
    else:
        x = 2 * np.pi * f * model.rc
        h = 1j * x / (1 + 1j * x)
    return Waveform(np.fft.irfft(spec * h, w.samples.size), w.sample_rate, "volt_electrode", None, w.t0)


def precompensate(target: Waveform, model: CouplingModel) -> tuple[Waveform, float]:
    """AWG waveform that produces ``target`` on the electrode, and its DC offset.

    Every tone is divided by the filter magnitude and rotated back by the
    filter phase. The returned offset is the pre-compensated waveform's value
    at the start time; it is held on the capacitor during the settling window
    so the phase jump does not produce a current spike.
    """
    if target.tones is None:
        raise ValueError("pre-compensation needs the tone list of the target waveform")
    tones = _filter_tones(target.tones, model, inverse=True)
    awg = Waveform.from_tones(tones, target.duration, target.sample_rate, "volt_awg", target.t0)
    dc_offset = float(sum(t.amplitude * math.sin(2 * math.pi * t.frequency * target.t0 + t.phase)
                          for t in tones))
    return awg, dc_offset


def band_bins(spec: NoiseSpec) -> np.ndarray:
    """Absolute frequency-bin indices k (f = k / duration) inside the band."""
    lo = spec.center - spec.bandwidth / 2
    hi = spec.center + spec.bandwidth / 2
    k_lo = math.ceil(lo * spec.duration - 1e-9)
    k_hi = math.floor(hi * spec.duration + 1e-9)
    return np.arange(k_lo, k_hi + 1)


def noise_sample_count(spec: NoiseSpec) -> int:
    rate = spec.sample_rate if spec.sample_rate is not None else 20.0 * spec.f_max
    if rate < 20.0 * spec.f_max * (1 - 1e-12):
        raise ValueError(f"sample rate {rate:g} Hz is below 20x the band edge {spec.f_max:g} Hz")
    return int(math.ceil(rate * spec.duration - 1e-9))


def synthesize_band_noise(spec: NoiseSpec) -> Waveform:
    """Random-phase harmonic sum with a flat two-sided PSD inside the band.

    Bin ``k`` sits at ``k / duration`` Hz with amplitude ``sqrt(4 S df)`` and a
    phase drawn from the counter-based stream keyed on ``(seed, realization)``.
    The sum is evaluated with an inverse real FFT on a grid of ``n`` samples
    spanning exactly ``duration``, so the effective sample rate is ``n/duration``.

    With ``spec.gaussian`` each amplitude is additionally scaled by
    ``sqrt(-ln u)`` with ``u`` from an independent keyed stream. The mean power
    per bin is unchanged but the process becomes exactly Gaussian, which
    matters once single bins are strong enough to drive a spin coherently.
    """
    n = noise_sample_count(spec)
    rate = n / spec.duration
    if spec.psd_two_sided == 0:
        return Waveform(np.zeros(n), rate, "field_V_per_m")
    k = band_bins(spec)
    df = 1.0 / spec.duration
    amp = math.sqrt(4.0 * spec.psd_two_sided * df)
    phases = 2 * np.pi * keyed_uniform(k, spec.seed, spec.realization)
    coeffs = np.zeros(n // 2 + 1, dtype=complex)
    if spec.gaussian:
        u = keyed_uniform(k, spec.seed, spec.realization, 1)
        amp = amp * np.sqrt(-np.log1p(-u))
    coeffs[k] = amp * np.exp(1j * phases) * (n / 2.0)
    return Waveform(np.fft.irfft(coeffs, n), rate, "field_V_per_m")
