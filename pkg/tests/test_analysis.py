import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iontometer import analysis
from iontometer.analysis import AmbiguityError, FitError
from iontometer.physics import DomainError
from iontometer.signals import Tone, Waveform
from iontometer.spin import sample_shots

GAMMA, C, T2, TM = 3998.0, 0.97, 0.304, 0.066839


def _central_jacobian(model, p, x, h=1e-6, **kw):
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        step = h * max(abs(p[i]), 1e-3)
        up, dn = p.copy(), p.copy()
        up[i] += step
        dn[i] -= step
        cols.append((model(up, x, **kw) - model(dn, x, **kw)) / (2 * step))
    return np.column_stack(cols)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.01, 0.2), st.floats(-3, 3), st.floats(0.2, 0.8))
def test_sinusoid_jacobian_matches_finite_differences(A, kappa, phase, off):
    x = np.linspace(0, 0.3, 17)
    p = [A, kappa, phase, off]
    J, fd = analysis.sinusoid_jacobian(p, x), _central_jacobian(analysis.sinusoid_model, p, x)
    np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-6 * np.abs(J).max())


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 500.0), st.floats(0.0, 0.1))
def test_decay_jacobian_matches_finite_differences(gamma, eta):
    x = np.linspace(0, 3 / gamma, 12)
    J = analysis.decay_jacobian([gamma], x, eta)
    fd = _central_jacobian(analysis.decay_model, [gamma], x, eta=eta)
    np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-6 * np.abs(J).max())


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 1.2), st.floats(0.05, 1.0))
def test_gaussian_jacobian_matches_finite_differences(A0, t2):
    x = np.linspace(0.01, 2 * t2, 11)
    J = analysis.gaussian_decay_jacobian([A0, t2], x)
    fd = _central_jacobian(analysis.gaussian_decay_model, [A0, t2], x)
    np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-6 * np.abs(J).max())


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 1.0), st.floats(0.8, 1.0), st.floats(-3.0, 3.0), st.floats(0.4, 0.6))
def test_sinusoid_self_recovery(A, periods_frac, phase, off):
    kappa = 0.05
    x = np.linspace(0, 1.5 * kappa / periods_frac, 13)
    y = analysis.sinusoid_model([A, kappa, phase, off], x)
    fit = analysis.fit_sinusoid(x, y, np.full(x.size, 1e-3))
    assert fit.converged
    for name, v in zip(("A", "kappa", "offset"), (A, kappa, off)):
        assert fit[name] == pytest.approx(v, rel=1e-6)
    assert math.remainder(fit["phase"] - phase, 2 * math.pi) == pytest.approx(0.0, abs=1e-6)


def test_sinusoid_noiseless_recovery_is_tight():
    x = np.linspace(0, 0.02, 12)
    p = [0.72, 0.0136, 0.0, 0.5]
    fit = analysis.fit_sinusoid(x, analysis.sinusoid_model(p, x), np.full(12, 1e-3))
    np.testing.assert_allclose(fit.values, p, rtol=1e-8, atol=1e-10)


def test_sinusoid_kappa_statistics_under_binomial_noise():
    kappa, A = 0.0136, 0.72
    x = np.linspace(0, 1.5 * kappa, 12)
    p = analysis.sinusoid_model([A, kappa, 0.0, 0.5], x)
    ks = []
    for seed in range(100):
        y = sample_shots(p, 0.0, 3000, seed=seed) / 3000
        ks.append(analysis.fit_sinusoid(x, y, analysis.binomial_sigma(y, 3000))["kappa"])
    ks = np.array(ks)
    assert np.all(np.abs(ks / kappa - 1) < 0.02)


def test_sinusoid_flat_data_has_no_significant_amplitude():
    x = np.linspace(0, 1, 12)
    rng = np.random.default_rng(1)
    y = 0.5 + rng.normal(0, 0.01, 12)
    fit = analysis.fit_sinusoid(x, y, np.full(12, 0.01))
    assert (not fit.converged) or fit["A"] < 2 * fit.stderr("A") + 1e-12


def test_sinusoid_needs_a_full_period():
    x = np.linspace(0, 0.5, 12)
    y = analysis.sinusoid_model([0.8, 1.0, 0.1, 0.5], x)
    with pytest.raises(AmbiguityError):
        analysis.fit_sinusoid(x, y, np.full(12, 1e-3))
    with pytest.raises(FitError):
        analysis.fit_sinusoid(x[:4], y[:4], np.full(4, 1e-3))


def test_decay_noiseless_recovery():
    t = np.linspace(0, 0.1, 10)
    for eta in (0.0, 0.018):
        fit = analysis.fit_exponential_decay(t, analysis.decay_model([22.0], t, eta), np.full(10, 1e-3), eta=eta)
        assert fit["Gamma"] == pytest.approx(22.0, rel=1e-10)
        assert not fit.upper_bound


def test_decay_binomial_ensemble():
    t = np.linspace(0, 0.1, 24)
    p = analysis.decay_model([22.0], t)
    gammas = []
    for seed in range(100):
        y = sample_shots(p, 0.0, 500, seed=seed) / 500
        gammas.append(analysis.fit_exponential_decay(t, y, analysis.binomial_sigma(y, 500))["Gamma"])
    gammas = np.array(gammas)
    assert abs(gammas.mean() / 22 - 1) < 0.02
    assert np.mean(np.abs(gammas / 22 - 1) < 0.10) > 0.95


def test_decay_zero_rate_is_an_upper_bound():
    t = np.linspace(0, 0.1, 10)
    y = sample_shots(np.ones(10), 0.0, 500, seed=3) / 500
    fit = analysis.fit_exponential_decay(t, y, analysis.binomial_sigma(y, 500))
    assert fit.upper_bound
    assert fit["Gamma"] > 0


def test_decay_rising_population_is_flagged():
    t = np.linspace(0, 0.1, 10)
    y = 0.5 + 0.45 * t / 0.1
    fit = analysis.fit_exponential_decay(t, y, np.full(10, 0.005))
    assert not fit.converged


def test_T2_recovery_and_noise():
    taus = np.array([0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.5, 0.6])
    A = np.exp(-(taus / 0.304) ** 2)
    fit = analysis.measure_T2(np.column_stack([taus, A, np.full(taus.size, 0.01)]))
    assert fit["T2"] == pytest.approx(0.304, rel=1e-8)
    assert fit["A0"] == pytest.approx(1.0, rel=1e-8)
    rng = np.random.default_rng(5)
    for _ in range(100):
        noisy = A + rng.normal(0, 0.01, taus.size)
        t2 = analysis.measure_T2(np.column_stack([taus, noisy, np.full(taus.size, 0.01)]))["T2"]
        assert abs(t2 / 0.304 - 1) < 0.03


def test_T2_degenerate_inputs():
    with pytest.raises(FitError):
        analysis.measure_T2([(0.1, 0.5, 0.01), (0.2, 0.5, 0.01), (0.3, 0.5, 0.01)])


def test_fit_result_serialization():
    t = np.linspace(0, 0.1, 10)
    fit = analysis.fit_exponential_decay(t, analysis.decay_model([22.0], t), np.full(10, 1e-3))
    d = json.loads(fit.to_json())
    assert d["parameters"]["Gamma"]["value"] == pytest.approx(22.0)
    assert d["converged"] is True
    assert np.all(np.linalg.eigvalsh(fit.covariance) >= 0)


def test_emin_from_slope():
    A = math.exp(-0.32)
    slope = 0.5 * A * GAMMA * 0.172
    e = analysis.emin_from_slope(slope, C, 1)
    assert e == pytest.approx(2.07e-3, rel=5e-3)
    assert analysis.emin_from_slope(slope, C, 4) == pytest.approx(e / 2, rel=1e-15)
    with pytest.raises(DomainError):
        analysis.emin_from_slope(0.0, C, 1)


def test_readout_efficiency_from_spam():
    assert analysis.readout_efficiency(0.018) == pytest.approx(1 / math.sqrt(1.072), rel=1e-15)
    assert analysis.readout_efficiency(0.018) == pytest.approx(0.966, abs=5e-4)


def test_theoretical_sensitivity_at_operating_point():
    s = analysis.theoretical_sensitivity(0.172, T2, TM, GAMMA, C, "AC")
    assert s == pytest.approx(1.01e-3, rel=0.01)
    assert abs(s / 960e-6 - 1) < 0.06
    assert analysis.theoretical_sensitivity(0.172, T2, TM, GAMMA, C, "DC") == 2 * s


@given(st.floats(1e-6, 1e-3))
def test_sensitivity_short_time_limit(tau):
    s = analysis.theoretical_sensitivity(tau, 1e9, 0.0, GAMMA, 1.0)
    assert s == pytest.approx(1 / (GAMMA * math.sqrt(tau)), rel=1e-9)


def test_optimal_tau():
    opt = analysis.optimal_tau(T2, TM, GAMMA, C)
    assert opt.tau == pytest.approx(0.172, abs=2e-3)
    assert not opt.at_edge
    f = lambda t: analysis.theoretical_sensitivity(t, T2, TM, GAMMA, C)
    assert opt.S <= f(opt.tau * 1.01) and opt.S <= f(opt.tau * 0.99)


@given(st.floats(100.0, 1e6), st.floats(0.1, 1.0))
def test_optimal_tau_ignores_gamma_and_C(gamma, c):
    ref = analysis.optimal_tau(T2, TM, GAMMA, C).tau
    assert analysis.optimal_tau(T2, TM, gamma, c).tau == pytest.approx(ref, abs=2e-5)


def test_optimal_tau_edge_without_decoherence():
    opt = analysis.optimal_tau(math.inf, 1e-12, GAMMA, C, bounds=(0.01, 1.0))
    assert opt.at_edge
    assert opt.tau == pytest.approx(1.0)


def test_periodogram_tone_power():
    fs, n = 1000.0, 4000
    f0 = 125.0  # on a bin centre
    w = Waveform.from_tones([Tone(0.7, f0)], (n - 1) / fs, fs)
    pg = analysis.periodogram(w, "rectangular")
    assert pg.band_power(f0 - 1, f0 + 1) == pytest.approx(0.7**2 / 2, rel=0.01)


@given(st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_periodogram_parseval(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=2048)
    x -= x.mean()
    pg = analysis.periodogram(Waveform(x, 500.0), "rectangular")
    assert pg.total_power() == pytest.approx(np.var(x), rel=0.01)


def test_periodogram_zero_and_short():
    pg = analysis.periodogram(Waveform(np.zeros(256), 10.0))
    assert not np.any(pg.psd_two_sided)
    with pytest.raises(ValueError):
        analysis.periodogram(Waveform(np.zeros(32), 10.0))


def test_fit_line_recovers_exact_line():
    x = np.linspace(-1, 1, 9)
    fit = analysis.fit_line(x, 3.5 * x - 0.25, np.full(9, 0.1))
    assert fit["slope"] == pytest.approx(3.5, rel=1e-12)
    assert fit["intercept"] == pytest.approx(-0.25, rel=1e-12)
