import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iontometer import spin
from iontometer.config import yb171_clock, yb171_first_order
from iontometer.physics import DomainError
from iontometer.signals import NoiseSpec, Tone, Waveform, synthesize_band_noise

CFG = yb171_clock()
GAMMA = CFG.gamma


def test_zero_field_sits_at_half():
    for tau in (0.01, 0.172, 0.5):
        for mode in ("AC", "DC"):
            w = spin.echo_signal(tau, 0.0, mode)
            assert spin.evolve_echo_analytic(CFG, tau, w, mode).p_up_ideal == 0.5


def test_ac_phase_closed_form_and_quadrature():
    tau, e_pk = 0.172, 3e-3
    w = spin.echo_signal(tau, 2 * e_pk / math.pi, "AC", sample_rate=1e5 / tau)
    expected = GAMMA * (2 * e_pk / math.pi) * tau
    closed = spin.echo_phase(GAMMA, tau, w, "AC", "closed")
    trap = spin.echo_phase(GAMMA, tau, w, "AC", "trapezoid")
    assert closed == pytest.approx(expected, rel=1e-12)
    assert trap == pytest.approx(closed, rel=1e-8)


def test_dc_phase_is_half_of_ac():
    tau, dE = 0.1, 2e-3
    ac = spin.echo_phase(GAMMA, tau, spin.echo_signal(tau, dE, "AC"), "AC")
    dc = spin.echo_phase(GAMMA, tau, spin.echo_signal(tau, dE, "DC"), "DC")
    assert dc == pytest.approx(ac / 2, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e-2, 1e-2), st.floats(0.5, 60.0), st.floats(-math.pi, math.pi)),
                min_size=1, max_size=6),
       st.floats(0.02, 0.3))
def test_closed_form_phase_matches_quadrature(tones, tau):
    w = Waveform.from_tones([Tone(a, f, p) for a, f, p in tones], tau, 2e5 / tau)
    closed = spin.echo_phase(GAMMA, tau, w, "AC", "closed")
    trap = spin.echo_phase(GAMMA, tau, w, "AC", "trapezoid")
    scale = GAMMA * tau * sum(abs(a) for a, _, _ in tones)
    assert trap == pytest.approx(closed, rel=1e-8, abs=1e-8 * scale)


@given(st.floats(-1.0, 1.0), st.floats(1e-3, 1.0))
def test_echo_cancels_constant_detuning(level, tau):
    w = Waveform.from_tones([Tone(level, 0.0, math.pi / 2)], tau, 1000 / tau)
    assert spin.echo_phase(GAMMA, tau, w, "AC") == 0.0
    seq = spin.hahn_echo_sequence(tau, w)
    assert spin.run_sequence(seq, GAMMA) == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2e-2, 2e-2), st.floats(0.01, 0.4))
def test_full_pulse_sequence_agrees_with_fringe_formula(dE, tau):
    w = spin.echo_signal(tau, dE, "AC")
    phi = spin.echo_phase(GAMMA, tau, w, "AC")
    p = spin.run_sequence(spin.hahn_echo_sequence(tau, w), GAMMA)
    assert p == pytest.approx(0.5 + 0.5 * math.sin(phi), abs=1e-12)


def test_field_too_short_is_rejected():
    w = spin.echo_signal(0.1, 1e-3, "AC")
    with pytest.raises(ValueError):
        spin.echo_phase(GAMMA, 0.2, w, "AC")


def test_contrast_is_gaussian_and_monotone():
    assert spin.echo_contrast(0.304, 0.304) == pytest.approx(math.exp(-1), rel=1e-15)
    a = spin.echo_contrast(np.linspace(0, 1, 200), 0.304)
    assert np.all(np.diff(a) <= 0)


def test_kappa_ac_and_dc():
    k = spin.fringe_kappa(GAMMA, 0.172, "AC")
    assert k == pytest.approx(2 * math.pi / (GAMMA * 0.172), rel=1e-15)
    assert spin.fringe_kappa(GAMMA, 0.172, "DC") == 2 * k


def test_noiseless_fringe_reproduces_model():
    tau = 0.172
    kappa = spin.fringe_kappa(GAMMA, tau, "AC")
    amps = np.linspace(0, 1.5 * kappa, 13)
    exp = spin.fringe_scan(CFG, tau, "AC", amps, 1, 0)
    A = spin.echo_contrast(tau, CFG.T2)
    np.testing.assert_allclose(exp.p_up_ideal, 0.5 + 0.5 * A * np.sin(2 * np.pi * amps / kappa), atol=1e-12)


def test_zero_amplitude_scan_is_consistent_with_half():
    exp = spin.fringe_scan(CFG, 0.1, "AC", np.zeros(20), 3000, 4)
    z = (exp.p_up - 0.5) / math.sqrt(0.25 / 3000)
    assert np.all(np.abs(z) < 4)


def test_experiment_csv_round_trip(tmp_path):
    exp = spin.fringe_scan(CFG, 0.1, "DC", np.linspace(0, 0.05, 12), 100, 8)
    path = tmp_path / "fringe.csv"
    text = exp.to_csv(path)
    assert text.splitlines()[0] == "setting_index,amplitude_V_per_m,shots,up_count,seed"
    back = spin.ExperimentResult.from_csv(path, 0.1, "DC")
    np.testing.assert_array_equal(back.up_counts, exp.up_counts)
    np.testing.assert_array_equal(back.amplitudes, exp.amplitudes)


def test_spam_limits():
    n = 10**8
    assert spin.sample_shots(1.0, 0.018, n, seed=1) / n == pytest.approx(0.982, abs=5e-4)
    assert spin.sample_shots(0.0, 0.018, n, seed=1) / n == pytest.approx(0.018, abs=5e-4)
    for eta in (0.0, 0.1, 0.3):
        assert spin.sample_shots(0.5, eta, n, seed=2) / n == pytest.approx(0.5, abs=5e-4)


def test_shot_fraction_spread_at_half():
    n = 10**6
    fr = np.array([spin.sample_shots(0.5, 0.0, n, seed=s) / n for s in range(200)])
    sigma = 1 / (2 * math.sqrt(n))
    se = sigma / math.sqrt(2 * (fr.size - 1))
    assert abs(fr.std(ddof=1) - sigma) < 3 * se


def test_shot_mean_over_seeds():
    p, eta, n = 0.3, 0.018, 1000
    q = eta + (1 - 2 * eta) * p
    means = np.array([spin.sample_shots(p, eta, n, seed=s) / n for s in range(100)])
    assert abs(means.mean() - q) < 4 * math.sqrt(q * (1 - q) / n) / 10


def test_sample_shots_deterministic_and_validated():
    assert spin.sample_shots(0.3, 0.01, 500, seed=7) == spin.sample_shots(0.3, 0.01, 500, seed=7)
    with pytest.raises(DomainError):
        spin.sample_shots(1.2, 0.0, 10)
    with pytest.raises(DomainError):
        spin.sample_shots(0.5, 0.5, 10)


# --- spin locking ----------------------------------------------------------

LOCK = 2 * math.pi * 20e3
FO = yb171_first_order()


def test_locked_state_is_stationary_without_noise():
    w = Waveform(np.zeros(200_001), 1e6)
    for tau in (0.0, 0.013, 0.2):
        assert spin.integrate_bloch_stochastic(FO, LOCK, w, tau, f_max=20e3) == pytest.approx(1.0, abs=1e-12)


def test_norm_conserved_over_a_million_steps():
    rng = np.random.default_rng(0)
    det = rng.normal(0, 5e4, 10**6)
    psi0 = np.array([0.6, 0.8j])
    psi = spin.propagate_locked(det, LOCK, 1e-7, 0.1, psi0)
    assert abs(np.vdot(psi, psi).real - 1) < 1e-12


def test_constant_detuning_matches_exact_rotation():
    d, dt, T = 3e4, 1e-6, 1.234e-3
    psi = spin.propagate_locked(np.full(2000, d), LOCK, dt, T, np.array([1.0, 0.0]))
    H = 0.5 * np.array([[d, LOCK], [LOCK, -d]])
    from scipy.linalg import expm
    ref = expm(-1j * H * T) @ np.array([1.0, 0.0])
    np.testing.assert_allclose(psi, ref, atol=1e-12)


def test_step_size_precondition():
    w = synthesize_band_noise(NoiseSpec(20e3, 3e3, 1e-10, 0.01, sample_rate=4.4e5))
    with pytest.raises(ValueError):
        spin.integrate_bloch_stochastic(FO, LOCK, Waveform(w.samples[::2], w.sample_rate / 2), 0.005,
                                        f_max=21.5e3)
    with pytest.raises(ValueError):
        spin.integrate_bloch_stochastic(FO, LOCK, w, 0.02, f_max=21.5e3)


def _ensemble_decay(center, tau, n=120, psd=2.77e-10):
    acc = 0.0
    for r in range(n):
        w = synthesize_band_noise(NoiseSpec(center, 3e3, psd, 4 * tau, seed=21, realization=r))
        acc += spin.integrate_bloch_stochastic(FO, LOCK, w, tau, f_max=center + 1.5e3)
    return acc / n


def test_locked_spin_is_spectrally_selective():
    tau = 0.03
    on = -math.log(2 * _ensemble_decay(20e3, tau) - 1) / tau
    off = -math.log(2 * _ensemble_decay(20e3 + 5 * 3e3, tau) - 1) / tau
    assert on == pytest.approx(0.5 * FO.gamma**2 * 2.77e-10, rel=0.15)
    assert off < 0.05 * on


def test_gaussian_noise_ensemble_decays_exponentially():
    # fixed-amplitude bins drive the spin coherently at long times; Gaussian bins do not
    psd = 2.689e-9
    rate = 0.5 * FO.gamma**2 * psd
    for f in (1.0, 3.0):
        tau, acc, n = f / rate, 0.0, 600
        for r in range(n):
            w = synthesize_band_noise(NoiseSpec(20e3, 3e3, psd, 4 * tau, seed=8, realization=r, gaussian=True))
            acc += spin.integrate_bloch_stochastic(FO, LOCK, w, tau, f_max=21.5e3)
        m = 2 * acc / n - 1
        assert m == pytest.approx(math.exp(-f), abs=0.03)
