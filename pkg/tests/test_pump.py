import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csqfc.errors import ConfigError, DomainError, MeasurementError
from csqfc.pump import (EDFA_CEILING_MW, RAMP_PER_RISE, PumpChannelConfig, SwitchSchedule,
                        edfa_transient_factor, instantaneous_efficiency, measure_rise_fall,
                        min_switch_interval, plateau_durations, render_waveform,
                        transition_mask)
from csqfc.spectral import ConversionDevice, optimal_pump_power

P_STAR = optimal_pump_power(0.013)
PAIR = [PumpChannelConfig(1, 189731.0, P_STAR, 0.5), PumpChannelConfig(2, 189756.0, P_STAR, 0.5)]
DEVICE = ConversionDevice(40.0, 189200.0, 2e-5, {1: (0.39, 0.013), 2: (0.39, 0.013)})


def test_ramp_scale_reproduces_rise_time():
    # 10 % and 90 % crossings of 3u^2 - 2u^3 sit symmetric about u = 1/2
    u10 = 1 / RAMP_PER_RISE
    assert (1 - u10) / 2 == pytest.approx(0.19580, abs=1e-5)


@pytest.mark.parametrize("interval", [100.0, 3.0, 1.0])
def test_measured_edges_match_configuration(interval):
    sched = SwitchSchedule.alternating([1, 2], interval, 4 * interval)
    wave = render_waveform(PAIR, sched, dt_us=0.01, overshoot=0.0)
    for ch in (1, 2):
        rise, fall = measure_rise_fall(wave, ch)
        assert rise == pytest.approx(0.5, abs=wave.dt_us)
        assert fall == pytest.approx(0.5, abs=wave.dt_us)


@given(st.floats(0.05, 5.0))
@settings(max_examples=25, deadline=None)
def test_edges_for_any_rise_time(rf):
    cfg = [PumpChannelConfig(1, 189731.0, 100.0, rf), PumpChannelConfig(2, 189756.0, 100.0, rf)]
    sched = SwitchSchedule.alternating([1, 2], 4 * rf, 16 * rf)
    wave = render_waveform(cfg, sched, overshoot=0.0)
    rise, fall = measure_rise_fall(wave, 1)
    assert rise == pytest.approx(rf, abs=wave.dt_us)
    assert fall == pytest.approx(rf, abs=wave.dt_us)


def test_only_one_channel_at_full_power():
    sched = SwitchSchedule.alternating([1, 2], 3.0, 12.0)
    wave = render_waveform(PAIR, sched, dt_us=0.01, overshoot=0.0)
    full = wave.power_mw >= 0.99 * P_STAR
    assert not np.any(full.all(axis=0))
    steady = ~transition_mask(PAIR, sched, wave.times_us)
    assert np.all(full[:, steady].sum(axis=0) == 1)


def test_plateau_shrinks_with_interval():
    longest = []
    for interval in (100.0, 3.0, 1.0):
        sched = SwitchSchedule.alternating([1, 2], interval, 4 * interval)
        wave = render_waveform(PAIR, sched, dt_us=0.01, overshoot=0.0)
        longest.append(max(plateau_durations(wave, 1)) / interval)
    assert longest[0] > 0.95
    assert 0.5 < longest[1] < 0.95
    assert 0 < longest[2] < 0.5


def test_overshoot_decays_to_steady():
    sched = SwitchSchedule(((0.0, 1),), 20.0)
    wave = render_waveform(PAIR[:1], sched, dt_us=0.01, overshoot=0.2, decay_us=1.0)
    trace = wave.trace(1)
    assert trace.max() <= 1.2 * P_STAR
    assert trace.max() > P_STAR
    assert trace[-1] == pytest.approx(P_STAR, rel=1e-7)


def test_transient_factor():
    assert edfa_transient_factor(0.0, 0.2, 1.0) == pytest.approx(1.2)
    assert edfa_transient_factor(1.0, 0.2, 1.0) == pytest.approx(1 + 0.2 / math.e)
    assert edfa_transient_factor(0.0, 0.2, 0.0) == pytest.approx(1.2)
    assert edfa_transient_factor(0.5, 0.2, 0.0) == 1.0
    with pytest.raises(DomainError):
        edfa_transient_factor(-1.0)
    with pytest.raises(DomainError):
        edfa_transient_factor(1.0, decay_us=-1.0)


def test_efficiency_flat_under_overshoot():
    sched = SwitchSchedule(((0.0, 1),), 20.0)
    wave = render_waveform(PAIR[:1], sched, dt_us=0.01, overshoot=0.2)
    steady = ~transition_mask(PAIR[:1], sched, wave.times_us)
    eta = instantaneous_efficiency(wave, 1, DEVICE, wave.times_us[steady])
    # full 20 % overshoot at the optimum is the worst case; it has partly decayed by ramp end
    bound = math.sin(math.pi / 2 * math.sqrt(1.2)) ** 2
    assert eta.min() / eta.max() >= bound
    assert bound >= 0.93


def test_incomplete_edge_raises():
    sched = SwitchSchedule(((0.0, 1),), 10.0)
    wave = render_waveform(PAIR[:1], sched, overshoot=0.0)
    with pytest.raises(MeasurementError):
        measure_rise_fall(wave, 1)


def test_truncated_edge_is_rejected():
    # the shutter reopens before the fall reaches 10 %
    sched = SwitchSchedule(((0.0, 1), (2.0, 2), (2.3, 1), (5.0, 2)), 8.0)
    wave = render_waveform(PAIR, sched, dt_us=0.005, overshoot=0.0)
    rise, fall = measure_rise_fall(wave, 1)
    assert rise == pytest.approx(0.5, abs=0.005)
    assert fall == pytest.approx(0.5, abs=0.005)


def test_configuration_errors():
    with pytest.raises(ConfigError):
        PumpChannelConfig(1, 189731.0, EDFA_CEILING_MW + 1)
    with pytest.raises(ConfigError):
        PumpChannelConfig(1, 189731.0, 100.0, 0.0)
    with pytest.raises(ConfigError):
        SwitchSchedule(((1.0, 1), (1.0, 2)), 5.0)
    with pytest.raises(ConfigError):
        SwitchSchedule(((6.0, 1),), 5.0)
    with pytest.raises(ConfigError):
        render_waveform(PAIR, SwitchSchedule(((0.0, 3),), 5.0))
    with pytest.raises(ConfigError):
        render_waveform(PAIR, SwitchSchedule(((0.0, 1),), 5.0), dt_us=0.1)
    with pytest.raises(ConfigError):
        render_waveform([PAIR[0], PAIR[0]], SwitchSchedule(((0.0, 1),), 5.0))
    with pytest.raises(ConfigError):
        min_switch_interval([])


def test_min_switch_interval_is_slowest_edge():
    slow = PumpChannelConfig(3, 189781.0, 100.0, 4.0)
    assert min_switch_interval(PAIR) == 0.5
    assert min_switch_interval(PAIR + [slow]) == 4.0


def test_efficiency_outside_horizon():
    wave = render_waveform(PAIR, SwitchSchedule(((0.0, 1),), 5.0))
    with pytest.raises(DomainError):
        instantaneous_efficiency(wave, 1, DEVICE, 50.0)


def test_alternating_schedule():
    sched = SwitchSchedule.alternating([1, 2], 3.0, 12.0)
    assert sched.events == ((0.0, 1), (3.0, 2), (6.0, 1), (9.0, 2))
    assert sched.min_gap_us == 3.0


@given(st.lists(st.sampled_from([1, 2, 3]), min_size=1, max_size=8), st.floats(1.0, 20.0))
@settings(max_examples=30, deadline=None)
def test_single_active_pump_outside_transitions(order, gap):
    from csqfc.qfc import simultaneous_pump_guard
    cfg = PAIR + [PumpChannelConfig(3, 189781.0, 150.0, 0.5)]
    events = tuple((k * gap, ch) for k, ch in enumerate(order))
    sched = SwitchSchedule(events, len(order) * gap)
    wave = render_waveform(cfg, sched, overshoot=0.5)
    steady = ~transition_mask(cfg, sched, wave.times_us)
    steady &= wave.times_us >= events[0][0]
    above = wave.power_mw > 0.1 * np.array(wave.steady_mw)[:, None]
    for k in np.nonzero(steady)[0][::25]:
        active = [ch for ch, on in zip(wave.channels, above[:, k]) if on]
        assert simultaneous_pump_guard(active)


def test_render_is_deterministic():
    sched = SwitchSchedule.alternating([1, 2], 3.0, 12.0)
    a = render_waveform(PAIR, sched, dt_us=0.01)
    b = render_waveform(PAIR, sched, dt_us=0.01)
    assert a.power_mw.tobytes() == b.power_mw.tobytes()


def test_near_step_edge_measures_within_a_sample():
    cfg = [PumpChannelConfig(1, 189731.0, 100.0, 1e-3), PumpChannelConfig(2, 189756.0, 100.0, 1e-3)]
    sched = SwitchSchedule.alternating([1, 2], 1.0, 4.0)
    wave = render_waveform(cfg, sched, dt_us=1e-4, overshoot=0.0)
    rise, fall = measure_rise_fall(wave, 1)
    assert rise <= 2 * wave.dt_us + 1e-3
    assert fall <= 2 * wave.dt_us + 1e-3


@pytest.mark.parametrize("scale, floor", [(1.0, 1.0), (1.2, 0.93), (0.0, 0.0)])
def test_instantaneous_efficiency_examples(scale, floor):
    dev = ConversionDevice(40.0, 189200.0, 2e-5, {1: (0.37, 0.012)})
    p_star = optimal_pump_power(0.012)
    cfg = [PumpChannelConfig(1, 189731.0, max(scale, 0.01) * p_star, 0.5)]
    wave = render_waveform(cfg, SwitchSchedule(((0.0, 1),), 10.0), overshoot=0.0)
    eta = instantaneous_efficiency(wave, 1, dev, 9.0) if scale else \
        instantaneous_efficiency(wave, 1, dev, 0.0)
    if floor == 1.0:
        assert eta == pytest.approx(0.37, abs=1e-12)
    elif floor:
        assert eta >= floor * 0.37
    else:
        assert eta == 0.0


def test_uncalibrated_channel():
    dev = ConversionDevice(40.0, 189200.0, 2e-5, {2: (0.37, 0.012)})
    wave = render_waveform(PAIR[:1], SwitchSchedule(((0.0, 1),), 5.0))
    with pytest.raises(ConfigError):
        instantaneous_efficiency(wave, 1, dev, 1.0)


def test_fast_single_channel_interval():
    assert min_switch_interval([PumpChannelConfig(1, 189731.0, 100.0, 0.01)]) == 0.01
