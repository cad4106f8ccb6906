import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from csqfc.errors import ChannelRangeError, ConfigError, DomainError
from csqfc.spectral import (ChannelPlan, ConversionDevice, EfficiencyCurve, calibrate_beta,
                            channel_frequency, conversion_efficiency, converted_frequency,
                            envelope_efficiency, frequency_to_channel, optimal_pump_power,
                            phase_mismatch, selectable_channel_count, theta_from_power,
                            usable_band)

CALIBRATED = [(0.38, 0.010, 246.7), (0.39, 0.013, 189.8), (0.37, 0.012, 205.6)]


def device(**kw):
    base = dict(length_mm=40.0, pm_pump_ghz=189200.0, beta_rad_per_mm_ghz=2e-5,
                channel_calibration={1: (0.39, 0.013)})
    base.update(kw)
    return ConversionDevice(**base)


plans = st.builds(ChannelPlan, st.integers(100_000, 300_000), st.integers(1, 200),
                  st.integers(1, 200), st.sampled_from([1, -1]))


@given(plans, st.data())
def test_channel_index_round_trip(plan, data):
    i = data.draw(st.integers(1, plan.count))
    assert frequency_to_channel(plan, channel_frequency(plan, i)) == i


@given(plans)
def test_neighbouring_channels_one_spacing_apart(plan):
    f = plan.frequencies()
    assert all(abs(b - a) == plan.spacing_ghz for a, b in zip(f, f[1:]))


def test_channel_out_of_range():
    plan = ChannelPlan(194850, 25, 7, -1)
    with pytest.raises(ChannelRangeError):
        channel_frequency(plan, 8)
    with pytest.raises(ChannelRangeError):
        channel_frequency(plan, 0)
    with pytest.raises(ChannelRangeError):
        frequency_to_channel(plan, 194851)
    with pytest.raises(ChannelRangeError):
        frequency_to_channel(plan, 194875)


def test_plan_rejects_nonpositive_frequencies():
    with pytest.raises(DomainError):
        ChannelPlan(100, 25, 10, -1)
    with pytest.raises(DomainError):
        ChannelPlan(0, 25, 1)


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_energy_conservation_exact(pump, extra):
    signal = pump + extra
    out = converted_frequency(signal, pump)
    assert out + pump == signal
    assert isinstance(out, int)


def test_converted_frequency_of_rubidium_signal():
    # 384233 GHz signal with a 189733 GHz pump lands on 194500 GHz
    assert converted_frequency(384233, 189733) == 194500


def test_converted_frequency_needs_signal_above_pump():
    with pytest.raises(DomainError):
        converted_frequency(189000, 189000)
    with pytest.raises(DomainError):
        converted_frequency(384233, -1)


@pytest.mark.parametrize("a, b, p_star", CALIBRATED)
def test_optimal_power_matches_closed_form(a, b, p_star):
    assert optimal_pump_power(b) == pytest.approx(p_star, abs=0.1)
    assert conversion_efficiency(a, b, optimal_pump_power(b)) == pytest.approx(a, abs=1e-15)


@pytest.mark.parametrize("a, b, _", CALIBRATED)
def test_derivative_vanishes_at_optimum(a, b, _):
    p = optimal_pump_power(b)
    h = 1e-3
    slope = (conversion_efficiency(a, b, p + h) - conversion_efficiency(a, b, p - h)) / (2 * h)
    assert abs(slope) < 1e-9
    curvature = conversion_efficiency(a, b, p + h) + conversion_efficiency(a, b, p - h) \
        - 2 * conversion_efficiency(a, b, p)
    assert curvature < 0


@given(st.floats(0.01, 1.0), st.floats(1e-4, 0.1), st.floats(0, 5000))
def test_efficiency_bounded_by_peak(a, b, p):
    eta = conversion_efficiency(a, b, p)
    assert 0.0 <= eta <= a * (1 + 1e-15)


@given(st.floats(0.01, 1.0), st.floats(1e-4, 0.1), st.floats(0.0, 0.999))
def test_efficiency_increases_below_optimum(a, b, frac):
    p_star = optimal_pump_power(b)
    lo, hi = frac * p_star, min(p_star, frac * p_star + 1e-3 * p_star)
    assert conversion_efficiency(a, b, lo) <= conversion_efficiency(a, b, hi) + 1e-15


def test_efficiency_rejects_negative_power():
    with pytest.raises(DomainError):
        conversion_efficiency(0.39, 0.013, -1.0)
    with pytest.raises(DomainError):
        conversion_efficiency(0.39, 0.013, np.array([1.0, -0.1]))


def test_efficiency_vectorized_matches_scalar():
    p = np.linspace(0, 500, 11)
    vec = conversion_efficiency(0.38, 0.01, p)
    assert vec.shape == p.shape
    assert all(vec[i] == conversion_efficiency(0.38, 0.01, float(p[i])) for i in range(11))


def test_theta_from_power_gives_full_conversion_at_optimum():
    theta = theta_from_power(0.013, optimal_pump_power(0.013))
    assert theta == pytest.approx(math.pi, abs=1e-14)


def test_phase_mismatch_is_linear_and_zero_at_matching():
    d = device()
    assert phase_mismatch(d, 189200.0) == 0.0
    assert phase_mismatch(d, 189300.0) == pytest.approx(-phase_mismatch(d, 189100.0))


def test_envelope_peaks_at_phase_matching():
    d = device(envelope_peak=0.45)
    f = np.linspace(186000, 192000, 2401)
    env = envelope_efficiency(d, f)
    assert f[np.argmax(env)] == pytest.approx(189200.0, abs=2.5)
    assert env.max() == pytest.approx(0.45)
    assert np.all(env <= 0.45 + 1e-15)


def test_envelope_peak_defaults_to_best_calibration():
    d = device(channel_calibration={1: (0.38, 0.01), 2: (0.39, 0.013)})
    assert d.peak_efficiency == 0.39
    assert envelope_efficiency(d, d.pm_pump_ghz) == pytest.approx(0.39)


@given(st.floats(0.05, 0.95), st.floats(100.0, 5000.0), st.floats(1.0, 100.0))
def test_calibrated_beta_hits_threshold(ratio, detuning, length):
    beta = calibrate_beta(length, 0.45, 0.45 * ratio, detuning)
    d = device(length_mm=length, beta_rad_per_mm_ghz=beta, envelope_peak=0.45)
    assert envelope_efficiency(d, 189200.0 + detuning) == pytest.approx(0.45 * ratio, rel=1e-9)
    assert envelope_efficiency(d, 189200.0 - detuning) == pytest.approx(0.45 * ratio, rel=1e-9)


def test_calibrate_beta_rejects_unreachable_threshold():
    with pytest.raises(DomainError):
        calibrate_beta(40.0, 0.39, 0.40, 1500.0)


def test_usable_band_brackets_threshold():
    beta = calibrate_beta(40.0, 0.45, 0.40, 1500.0)
    d = device(beta_rad_per_mm_ghz=beta, envelope_peak=0.45)
    low, high = usable_band(d, 0.40)
    assert (low, high) == (187700, 190700)
    assert envelope_efficiency(d, low) >= 0.40 - 1e-12
    assert envelope_efficiency(d, low - 1) < 0.40


def test_usable_band_empty_when_peak_below_threshold():
    assert usable_band(device(), 0.40) is None


@given(st.integers(100_000, 200_000), st.integers(0, 10_000), st.integers(1, 200))
def test_channel_count_matches_enumeration(low, width, spacing):
    high = low + width
    # every channel owns a full spacing-wide slot inside the band
    brute = sum(1 for k in range(width + 1) if low + (k + 1) * spacing <= high)
    assert selectable_channel_count(low, high, spacing) == brute


def test_channel_count_of_2500_ghz_band():
    assert selectable_channel_count(188200, 190700, 25) == 100
    assert selectable_channel_count(190700, 188200, 25) == 0
    with pytest.raises(DomainError):
        selectable_channel_count(0, 100, 0)


def test_device_validation():
    with pytest.raises(DomainError):
        device(length_mm=0.0)
    with pytest.raises(DomainError):
        device(channel_calibration={1: (1.2, 0.01)})
    with pytest.raises(DomainError):
        device(channel_calibration={1: (0.3, 0.0)})
    with pytest.raises(ConfigError):
        device().calibration(9)


def test_curve_generation_noiseless_and_seeded():
    p = np.linspace(10, 400, 20)
    clean = EfficiencyCurve.generate(0.39, 0.013, p)
    assert np.allclose(clean.efficiency, conversion_efficiency(0.39, 0.013, p), atol=0)
    a = EfficiencyCurve.generate(0.39, 0.013, p, 0.005, rng=3)
    b = EfficiencyCurve.generate(0.39, 0.013, p, 0.005, rng=3)
    assert a == b
    assert all(0 <= e <= 1 for e in a.efficiency)


def test_curve_validation():
    with pytest.raises(DomainError):
        EfficiencyCurve((1.0, 1.0), (0.1, 0.2))
    with pytest.raises(DomainError):
        EfficiencyCurve((1.0, 2.0), (0.1, 1.2))


@given(st.integers(100_000, 200_000), st.integers(0, 5000), st.integers(0, 5000),
       st.integers(1, 100), st.integers(0, 100))
def test_channel_count_monotone(low, width, extra, spacing, wider):
    base = selectable_channel_count(low, low + width, spacing)
    assert selectable_channel_count(low, low + width + extra, spacing) >= base
    assert selectable_channel_count(low, low + width, spacing + wider) <= base


@given(st.floats(0.0, 5000.0))
def test_envelope_even_about_phase_matching(detuning):
    d = device(envelope_peak=0.45)
    assert envelope_efficiency(d, 189200.0 + detuning) == \
        pytest.approx(envelope_efficiency(d, 189200.0 - detuning), rel=1e-9, abs=1e-15)
    assert envelope_efficiency(d, 189200.0 + detuning) <= 0.45


def test_seven_pump_channels_in_175_ghz():
    assert selectable_channel_count(189383, 189558, 25) == 7
    assert selectable_channel_count(189383, 189383, 25) == 0


@pytest.mark.parametrize("pump, out", [(189383, 194850), (189533, 194700)])
def test_grid_endpoints_conserve_energy(pump, out):
    assert converted_frequency(384233, pump) == out
