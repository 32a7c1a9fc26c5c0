"""Fitting, spectral estimation and the closed-form sensitivity mathematics."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Sequence

import numpy as np
from scipy import optimize, signal

from .physics import DomainError
from .signals import Waveform


class FitError(ValueError):
    pass


class AmbiguityError(FitError):
    """Data do not pin down the period of a fringe."""


@dataclass
class FitResult:
    names: tuple[str, ...]
    values: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    message: str = ""
    upper_bound: bool = False

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def stderr(self, name: str) -> float:
        i = self.names.index(name)
        return float(math.sqrt(max(self.covariance[i, i], 0.0)))

    def as_dict(self) -> dict:
        return {
            "parameters": {n: {"value": float(v), "stderr": self.stderr(n)}
                           for n, v in zip(self.names, self.values)},
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "upper_bound": self.upper_bound,
            "message": self.message,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.as_dict(), **kwargs)


# --- models and their analytic Jacobians -----------------------------------

def sinusoid_model(p, x):
    A, kappa, phase, offset = p
    return offset + 0.5 * A * np.sin(2 * np.pi * np.asarray(x) / kappa + phase)


def sinusoid_jacobian(p, x):
    A, kappa, phase, offset = p
    x = np.asarray(x, dtype=float)
    theta = 2 * np.pi * x / kappa + phase
    s, c = np.sin(theta), np.cos(theta)
    return np.column_stack([
        0.5 * s,
        -0.5 * A * c * 2 * np.pi * x / kappa**2,
        0.5 * A * c,
        np.ones_like(x),
    ])


def decay_model(p, tau, eta=0.0):
    (gamma,) = p
    return eta + (1 - 2 * eta) * 0.5 * (1 + np.exp(-gamma * np.asarray(tau)))


def decay_jacobian(p, tau, eta=0.0):
    (gamma,) = p
    tau = np.asarray(tau, dtype=float)
    return (-(1 - 2 * eta) * 0.5 * tau * np.exp(-gamma * tau))[:, None]


def gaussian_decay_model(p, tau):
    A0, T2 = p
    return A0 * np.exp(-(np.asarray(tau) / T2) ** 2)


def gaussian_decay_jacobian(p, tau):
    A0, T2 = p
    tau = np.asarray(tau, dtype=float)
    e = np.exp(-(tau / T2) ** 2)
    return np.column_stack([e, A0 * e * 2 * tau**2 / T2**3])


def _lm(model, jac, p0, x, y, sigma, names, max_iter=200, **kw) -> FitResult:
    """Levenberg-Marquardt (damped Gauss-Newton) on weighted residuals."""
    w = 1.0 / np.asarray(sigma, dtype=float)
    res = optimize.least_squares(
        lambda p: (model(p, x, **kw) - y) * w,
        np.asarray(p0, dtype=float),
        jac=lambda p: jac(p, x, **kw) * w[:, None],
        method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_iter * (len(p0) + 1),
    )
    J = res.jac
    jtj = J.T @ J
    converged = bool(res.status > 0)
    try:
        if np.linalg.cond(jtj) > 1e14:
            raise np.linalg.LinAlgError
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.full((len(p0), len(p0)), np.inf)
        converged = False
    iterations = int(res.njev) if res.njev is not None else int(res.nfev)
    return FitResult(tuple(names), res.x, cov, float(np.linalg.norm(res.fun)), converged,
                     iterations, res.message)


def binomial_sigma(p, n) -> np.ndarray:
    """Binomial standard error with ``p`` clipped away from 0 and 1."""
    n = np.asarray(n, dtype=float)
    pc = np.clip(np.asarray(p, dtype=float), 1.0 / (n + 2), 1 - 1.0 / (n + 2))
    return np.sqrt(pc * (1 - pc) / n)


# --- fitters ---------------------------------------------------------------

def fit_sinusoid(x, y, y_err, n_grid: int = 400) -> FitResult:
    """Fit ``offset + (A/2) sin(2 pi x / kappa + phase)``.

    Kappa is initialised by a grid search (linear solve for the other three
    parameters at every grid point), then all four are refined together.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sig = np.broadcast_to(np.asarray(y_err, dtype=float), y.shape)
    if x.size < 5:
        raise FitError("need at least five points")
    span = float(np.ptp(x))
    if span <= 0:
        raise AmbiguityError("amplitude sweep has zero span")
    step = float(np.min(np.diff(np.unique(x))))
    kappas = np.geomspace(max(2.2 * step, span / 50), span, n_grid)
    w = 1.0 / sig
    best = None
    for kappa in kappas:
        th = 2 * np.pi * x / kappa
        M = np.column_stack([np.ones_like(x), np.sin(th), np.cos(th)]) * w[:, None]
        coef, *_ = np.linalg.lstsq(M, y * w, rcond=None)
        chi2 = float(np.sum((M @ coef - y * w) ** 2))
        if best is None or chi2 < best[0]:
            best = (chi2, kappa, coef)
    _, kappa0, (off0, a, b) = best
    p0 = [2 * math.hypot(a, b), kappa0, math.atan2(b, a), off0]
    if p0[0] == 0:
        p0[0] = 1e-12
    fit = _lm(sinusoid_model, sinusoid_jacobian, p0, x, y, sig, ("A", "kappa", "phase", "offset"))
    A, kappa, phase, off = fit.values
    if A < 0:
        A, phase = -A, phase + np.pi
    fit.values = np.array([A, kappa, (phase + np.pi) % (2 * np.pi) - np.pi, off])
    significant = fit.converged and A > 2 * fit.stderr("A")
    if significant and kappa > span * (1 + 1e-6):
        raise AmbiguityError(f"fitted period {kappa:g} exceeds the sweep span {span:g}")
    return fit


def fit_exponential_decay(taus, p_up, p_err, eta: float = 0.0) -> FitResult:
    """Fit the spin-lock decay ``P = 1/2 (1 + exp(-Gamma tau))``.

    With ``eta > 0`` the model is mapped through the symmetric readout error,
    ``eta + (1 - 2 eta) P``. A decay rate that is not resolved above two
    standard errors is reported as an upper bound (``upper_bound=True``).
    """
    t = np.asarray(taus, dtype=float)
    y = np.asarray(p_up, dtype=float)
    sig = np.broadcast_to(np.asarray(p_err, dtype=float), y.shape)
    if t.size < 4:
        raise FitError("need at least four durations")
    t_max = float(t.max())
    if not t_max > 0:
        raise FitError("durations must include a positive value")
    grid = np.concatenate([[0.0], np.geomspace(1e-3 / t_max, 1e3 / t_max, 600)])
    chi2 = [np.sum(((decay_model([g], t, eta) - y) / sig) ** 2) for g in grid]
    g0 = grid[int(np.argmin(chi2))]
    fit = _lm(decay_model, decay_jacobian, [g0], t, y, sig, ("Gamma",), eta=eta)
    gamma, err = fit["Gamma"], fit.stderr("Gamma")
    trend = fit_line(t, y, sig)
    if gamma < -3 * err or trend["slope"] > 3 * trend.stderr("slope"):
        fit.converged = False
        fit.message = "population increases with duration beyond the noise"
    if gamma <= 2 * err:
        fit.values = np.array([max(gamma, 0.0) + 2 * err])
        fit.upper_bound = True
    return fit


def measure_T2(contrast_points: Sequence[tuple[float, float, float]]) -> FitResult:
    """Weighted fit of fringe contrasts to ``A0 exp(-(tau/T2)^2)``."""
    pts = np.asarray(contrast_points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 3:
        raise FitError("need at least three (tau, A, sigma_A) points")
    tau, A, sA = pts.T
    if np.any(tau <= 0):
        raise FitError("evolution times must be positive")
    if np.ptp(A) == 0:
        raise FitError("all contrasts equal; the decay time is undetermined")
    w = 1 / sA
    best = None
    for T2 in np.geomspace(tau.min() / 10, tau.max() * 10, 400):
        e = np.exp(-(tau / T2) ** 2)
        A0 = np.sum(w**2 * e * A) / np.sum(w**2 * e * e)
        chi2 = np.sum(((A0 * e - A) * w) ** 2)
        if best is None or chi2 < best[0]:
            best = (chi2, A0, T2)
    return _lm(gaussian_decay_model, gaussian_decay_jacobian, best[1:], tau, A, sA, ("A0", "T2"))


def fit_line(x, y, y_err=None) -> FitResult:
    """Weighted straight-line fit ``y = slope x + intercept``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise FitError("need at least three points for a line with errors")
    sig = np.ones_like(y) if y_err is None else np.broadcast_to(np.asarray(y_err, float), y.shape)
    M = np.column_stack([x, np.ones_like(x)]) / sig[:, None]
    jtj = M.T @ M
    if abs(np.linalg.det(jtj)) < 1e-300 or np.linalg.cond(jtj) > 1e14:
        raise FitError("singular linear system")
    cov = np.linalg.inv(jtj)
    p = cov @ (M.T @ (y / sig))
    if y_err is None:
        dof = max(x.size - 2, 1)
        cov = cov * float(np.sum((M @ p - y / sig) ** 2)) / dof
    return FitResult(("slope", "intercept"), p, cov, float(np.linalg.norm(M @ p - y / sig)), True, 1)


# --- sensitivity mathematics -----------------------------------------------

Mode = Literal["AC", "DC"]


def readout_efficiency(eta: float) -> float:
    return 1.0 / math.sqrt(1.0 + 4.0 * eta)


def emin_from_slope(slope_max: float, C: float, N: float) -> float:
    """Minimum detectable field ``sigma_tot / slope`` with ``sigma_tot = 1/(2 C sqrt(N))``."""
    if not slope_max > 0:
        raise DomainError("slope must be positive")
    if N < 1:
        raise DomainError("need at least one measurement")
    if not 0 < C <= 1:
        raise DomainError("readout efficiency must lie in (0, 1]")
    return 1.0 / (2.0 * C * math.sqrt(N) * slope_max)


def theoretical_sensitivity(tau, T2, t_m, gamma, C, mode: Mode = "AC"):
    """Projection-noise-limited sensitivity in V m^-1 Hz^-1/2 (DC mode doubles it)."""
    tau = np.asarray(tau, dtype=float)
    s = np.exp((tau / T2) ** 2) * np.sqrt(tau + t_m) / (gamma * C * tau)
    if mode == "DC":
        s = 2.0 * s
    elif mode != "AC":
        raise ValueError(f"mode must be 'AC' or 'DC', got {mode!r}")
    return float(s) if s.ndim == 0 else s


class OptimalTau(NamedTuple):
    tau: float
    S: float
    at_edge: bool


def optimal_tau(T2, t_m, gamma=1.0, C=1.0, mode: Mode = "AC", bounds=None, tol=1e-5) -> OptimalTau:
    """Evolution time minimising :func:`theoretical_sensitivity`.

    A 512-point pre-scan over ``bounds`` (default ``[T2/100, 3 T2]``) checks
    that the objective is unimodal and brackets the minimum, which is then
    refined by golden-section search. A minimum on the bracket edge is
    returned as is, with ``at_edge=True``.
    """
    if not T2 > 0 or t_m < 0:
        raise DomainError("need T2 > 0 and t_m >= 0")
    if bounds is None:
        if math.isinf(T2):
            raise DomainError("an infinite T2 needs explicit bounds")
        bounds = (T2 / 100, 3 * T2)
    lo, hi = bounds
    f = lambda t: theoretical_sensitivity(t, T2, t_m, gamma, C, mode)
    grid = np.linspace(lo, hi, 512)
    vals = f(grid)
    d = np.sign(np.diff(vals))
    d = d[d != 0]
    if np.count_nonzero(np.diff(d)) > 1:
        raise FitError("sensitivity is not unimodal on the search interval")
    i = int(np.argmin(vals))
    if i == 0 or i == grid.size - 1:
        return OptimalTau(float(grid[i]), float(vals[i]), True)
    rel = tol / grid[i]
    t = optimize.golden(f, brack=(grid[i - 1], grid[i], grid[i + 1]), tol=rel)
    return OptimalTau(float(t), float(f(t)), False)


# --- spectral estimation ---------------------------------------------------

@dataclass
class Periodogram:
    """Two-sided PSD on the non-negative frequency grid.

    ``2 * sum(psd_two_sided) * df`` is the variance of the signal.
    """

    frequencies: np.ndarray
    psd_two_sided: np.ndarray
    unit: str = "field_V_per_m"

    @property
    def df(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    def band(self, lo: float, hi: float) -> np.ndarray:
        return (self.frequencies >= lo) & (self.frequencies <= hi)

    def band_mean(self, lo: float, hi: float) -> float:
        return float(np.mean(self.psd_two_sided[self.band(lo, hi)]))

    def band_power(self, lo: float, hi: float) -> float:
        return float(2 * np.sum(self.psd_two_sided[self.band(lo, hi)]) * self.df)

    def total_power(self) -> float:
        return float(2 * np.sum(self.psd_two_sided) * self.df)


def periodogram(w: Waveform, window: Literal["rectangular", "hann"] = "rectangular",
                segments: int = 1) -> Periodogram:
    if w.samples.size < 64:
        raise ValueError("periodogram needs at least 64 samples")
    nperseg = w.samples.size // segments
    win = {"rectangular": "boxcar", "hann": "hann"}[window]
    f, s = signal.welch(w.samples, fs=w.sample_rate, window=win, nperseg=nperseg, noverlap=0,
                        detrend="constant", return_onesided=False, scaling="density")
    keep = f >= 0
    order = np.argsort(f[keep])
    return Periodogram(f[keep][order], s[keep][order], w.unit)
