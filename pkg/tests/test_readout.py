import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from nanomech.cavity import ReadoutGeometry, s_min
from nanomech.model import K_B, LOSSLESS, CavityParams, CouplingModel, DomainError
from nanomech.readout import (
    DetectedSpectrum, NoiseModel, add_tone, amplifier_phase_floor, conversion_factor, filter_term,
    forward_spectrum, tls_crossover, tls_phase_noise, volts_to_cavity_freq_psd,
)

TWO_PI = 2 * math.pi
G_REF = TWO_PI * 1.16e3 / 1e-9


def grid_around(mode, half_widths=20, n=801):
    f = mode.omega_m / TWO_PI
    w = mode.gamma_m / TWO_PI
    return np.linspace(f - half_widths * w, f + half_widths * w, n)


def test_amplifier_floor():
    s = amplifier_phase_floor(7.5, 68e-12)
    assert s == pytest.approx(K_B * 7.5 / 68e-12, rel=1e-14)
    assert s == pytest.approx(1.52e-12, rel=3e-3)
    assert math.sqrt(s) == pytest.approx(1.23e-6, rel=5e-3)
    assert amplifier_phase_floor(0.0, 68e-12) == 0.0
    assert amplifier_phase_floor(7.5, 34e-12) == pytest.approx(2 * s)
    with pytest.raises(DomainError):
        amplifier_phase_floor(7.5, 0.0)


def test_tls_noise():
    m = NoiseModel(a_tls=1e-11)
    assert tls_phase_noise(m, 240e3) == pytest.approx(1e-11 / math.sqrt(240e3), rel=1e-14)
    assert tls_phase_noise(m, 240e3) == pytest.approx(2.04e-14, rel=3e-3)
    assert tls_phase_noise(m, 4e3) == pytest.approx(tls_phase_noise(m, 1e3) / 2, rel=1e-14)
    np.testing.assert_array_equal(tls_phase_noise(NoiseModel(), [1.0, 10.0]), 0.0)
    with pytest.raises(DomainError):
        tls_phase_noise(m, 0.0)


def test_tls_crossover_numeric():
    m = NoiseModel(t_n=7.5, a_tls=1e-8)
    p = 68e-12
    oracle = (1e-8 * p / (K_B * 7.5)) ** 2
    assert tls_crossover(m, p) == pytest.approx(oracle, rel=1e-12)
    root = optimize.brentq(lambda nu: tls_phase_noise(m, nu) - amplifier_phase_floor(7.5, p), 1.0, 1e9, rtol=1e-14)
    assert root == pytest.approx(oracle, rel=1e-9)


def test_noise_model_invariants():
    with pytest.raises(DomainError):
        NoiseModel(t_n=-1)
    with pytest.raises(DomainError):
        NoiseModel(a_tls=-1)


def _setup(beam, cavity, g=G_REF, v0=None):
    v0 = math.sqrt(2 * 50 * cavity.power_incident) if v0 is None else v0
    return CouplingModel(0.0, 0.0, g), ReadoutGeometry(v0, s_min(cavity))


def test_zero_coupling_is_pure_noise(beam, cavity):
    coupling, geom = _setup(beam, cavity, g=0.0)
    nu = grid_around(beam)
    spec = forward_spectrum(beam, cavity, coupling, geom, NoiseModel(t_n=7.5), nu)
    np.testing.assert_allclose(spec.s_v_q, geom.v0**2 * K_B * 7.5 / 68e-12, rtol=1e-14)


def test_peak_to_floor_compositional_oracle(beam, cavity):
    coupling, geom = _setup(beam, cavity)
    nu = np.array([239e3, 240e3, 241e3])
    spec = forward_spectrum(beam, cavity, coupling, geom, NoiseModel(t_n=7.5), nu)
    q = 1 / (1 / 38000 + 1 / 14000)
    resp = 2 * q / cavity.omega_c * geom.v0 * (q / 14000)
    s_x0 = 4 * K_B * 0.1 / (2e-15 * beam.omega_m**2 * beam.gamma_m)
    gamma_c = cavity.omega_c / q
    filt = 1 + 4 * (beam.omega_m / gamma_c) ** 2
    floor = geom.v0**2 * K_B * 7.5 / 68e-12
    oracle = (resp * G_REF) ** 2 * s_x0 / filt / floor
    assert (spec.s_v_q[1] - floor) / floor == pytest.approx(oracle, rel=1e-9)
    assert filt == pytest.approx(1.96, rel=5e-3)


def test_filter_term_good_cavity_detuning(beam, cavity):
    geom = ReadoutGeometry(1.0, s_min(cavity), detuning=beam.omega_m)
    assert filter_term(beam.omega_m / TWO_PI, cavity, geom) == pytest.approx(1.0, abs=1e-12)
    on = ReadoutGeometry(1.0, s_min(cavity))
    assert filter_term(beam.omega_m / TWO_PI, cavity, on) == pytest.approx(1 + 4 * (beam.omega_m / cavity.linewidth) ** 2)


def test_round_trip_identity(beam, cavity):
    coupling, geom = _setup(beam, cavity)
    nu = grid_around(beam)
    spec = forward_spectrum(beam, cavity, coupling, geom, NoiseModel(), nu)
    back = volts_to_cavity_freq_psd(spec, cavity)
    s_x = 4 * K_B * 0.1 / (2e-15 * beam.omega_m**2 * beam.gamma_m) / (
        1 + 4 * (TWO_PI * nu - beam.omega_m) ** 2 / beam.gamma_m**2)
    np.testing.assert_allclose(back.psd, G_REF**2 * s_x, rtol=1e-9)
    assert back.units == "(rad/s)^2/Hz"


@settings(max_examples=25, deadline=None)
@given(
    st.floats(1e3, 1e7), st.floats(1e2, 1e6), st.floats(1e3, 1e6), st.floats(1e-3, 1.0),
    st.floats(-1.0, 1.0),
)
def test_round_trip_property(f_m_hz, q_int, q_ext, temp, detune_frac):
    from nanomech.model import MechanicalMode

    mode = MechanicalMode(TWO_PI * f_m_hz, 2e-15, 1000, temp)
    cav = CavityParams(TWO_PI * 5e9, q_int, q_ext, power_incident=1e-11)
    geom = ReadoutGeometry(0.1, s_min(cav), detuning=detune_frac * mode.omega_m)
    nu = grid_around(mode, n=101)
    spec = forward_spectrum(mode, cav, CouplingModel(0, 0, G_REF), geom, NoiseModel(), nu)
    back = volts_to_cavity_freq_psd(spec, cav)
    from nanomech.mechanics import thermal_displacement_psd

    np.testing.assert_allclose(back.psd, G_REF**2 * thermal_displacement_psd(mode, TWO_PI * nu - mode.omega_m), rtol=1e-9)


def test_conversion_factor_example(cavity):
    geom = ReadoutGeometry(1.0, s_min(cavity))
    c = conversion_factor(1.0, cavity, geom)
    q = 1 / (1 / 38000 + 1 / 14000)
    oracle = cavity.omega_c**2 / ((2 * q) ** 2 * (q / 14000) ** 2)
    assert c == pytest.approx(oracle, rel=1e-9)
    assert c == pytest.approx(4.41e12, rel=3e-3)
    nu_double = cavity.linewidth / (4 * math.pi)
    assert conversion_factor(nu_double, cavity, geom) == pytest.approx(2 * conversion_factor(1e-6, cavity, geom), rel=1e-12)


def test_uncoupled_cavity_rejected(beam):
    cav = CavityParams(TWO_PI * 5e9, 38000, LOSSLESS, power_incident=1e-11)
    geom = ReadoutGeometry(1.0, s_min(cav))
    spec = DetectedSpectrum(np.array([1.0, 2.0]), np.array([1.0, 1.0]), geom)
    with pytest.raises(DomainError):
        volts_to_cavity_freq_psd(spec, cav)


@pytest.mark.parametrize("n_spectra", [25, 100])
def test_statistical_mode_converges_as_inverse_sqrt_n(beam, cavity, n_spectra):
    coupling, geom = _setup(beam, cavity)
    nu = grid_around(beam)
    noise = NoiseModel(t_n=7.5)
    exact = forward_spectrum(beam, cavity, coupling, geom, noise, nu).s_v_q
    mean = np.mean([forward_spectrum(beam, cavity, coupling, geom, noise, nu, seed=s).s_v_q
                    for s in range(n_spectra)], axis=0)
    rms = np.sqrt(np.mean((mean / exact - 1) ** 2))
    # one exponential deviate per bin: relative std 1/sqrt(N) for the N-spectrum mean
    assert rms * math.sqrt(n_spectra) == pytest.approx(1.0, rel=0.15)


def test_averaged_statistics(beam, cavity):
    coupling, geom = _setup(beam, cavity)
    nu = grid_around(beam, n=4001)
    noise = NoiseModel(t_n=7.5)
    exact = forward_spectrum(beam, cavity, coupling, geom, noise, nu).s_v_q
    ratio = forward_spectrum(beam, cavity, coupling, geom, noise, nu, seed=9, averages=100).s_v_q / exact
    assert ratio.mean() == pytest.approx(1.0, abs=0.01)
    assert ratio.std() == pytest.approx(0.1, rel=0.1)


def test_background_flat_then_tls(beam):
    cav = CavityParams(TWO_PI * 5e9, 38000, 14000, power_incident=68e-12)
    noise = NoiseModel(t_n=7.5, a_tls=1e-9)
    cross = tls_crossover(noise, 68e-12)
    nu = np.geomspace(cross / 1e4, cross * 1e4, 81)
    spec = forward_spectrum(beam, cav, CouplingModel(0, 0, 0.0), ReadoutGeometry(1.0, s_min(cav)), noise, nu)
    slope = np.diff(np.log(spec.s_v_q)) / np.diff(np.log(nu))
    assert np.all(np.abs(slope[nu[1:] > cross * 1e3]) < 0.02)
    assert np.all(np.abs(slope[nu[1:] < cross / 1e3] + 0.5) < 0.02)
    floor = K_B * 7.5 / 68e-12
    i = int(np.argmin(np.abs(nu - cross)))
    assert spec.s_v_q[i] == pytest.approx(2 * floor, rel=1e-9)


def test_gain_factor_scales_signal_only(beam, cavity):
    coupling, geom = _setup(beam, cavity)
    nu = grid_around(beam)
    base = forward_spectrum(beam, cavity, coupling, geom, NoiseModel(t_n=7.5, a_tls=1e-11), nu)
    low = forward_spectrum(beam, cavity, coupling, geom, NoiseModel(t_n=7.5, a_tls=1e-11, gain_factor=0.7), nu)
    zero_g = CouplingModel(0, 0, 0.0)
    floor = forward_spectrum(beam, cavity, zero_g, geom, NoiseModel(t_n=7.5, a_tls=1e-11, gain_factor=0.7), nu)
    np.testing.assert_allclose(low.s_v_q - floor.s_v_q, 0.49 * (base.s_v_q - floor.s_v_q), rtol=1e-9)


def test_grid_validation(beam, cavity):
    coupling, geom = _setup(beam, cavity)
    for bad in ([1.0], [2.0, 1.0], [0.0, 1.0], [[1.0, 2.0]]):
        with pytest.raises(DomainError):
            forward_spectrum(beam, cavity, coupling, geom, NoiseModel(), bad)


def test_add_tone_preserves_power(beam, cavity):
    coupling, geom = _setup(beam, cavity)
    nu = grid_around(beam)
    spec = forward_spectrum(beam, cavity, coupling, geom, NoiseModel(t_n=7.5), nu)
    toned = add_tone(spec, 240.001e3, 1e-12)
    df = nu[1] - nu[0]
    assert np.sum(toned.s_v_q - spec.s_v_q) * df == pytest.approx(1e-12, rel=1e-9)
