"""Time-domain model of the switched pump chain.

Shutter edges are smoothstep ramps stretched so that their 10-90 % time
equals the configured rise/fall time. The EDFA turn-on transient is a
single-exponential overshoot multiplying the shutter envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, DomainError, MeasurementError
from .spectral import conversion_efficiency

EDFA_CEILING_MW = 500.0
DEFAULT_OVERSHOOT = 0.5
DEFAULT_DECAY_US = 1.0


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


#: fraction of the smoothstep ramp at which it crosses 10 %
_U10 = brentq(lambda u: float(_smoothstep(u)) - 0.1, 0.0, 0.5)
#: full ramp duration per unit of 10-90 % time
RAMP_PER_RISE = 1.0 / (1.0 - 2.0 * _U10)


@dataclass(frozen=True)
class PumpChannelConfig:
    channel: int
    frequency_ghz: float
    steady_power_mw: float
    rise_fall_us: float = 0.5

    def __post_init__(self):
        if not 0 < self.steady_power_mw <= EDFA_CEILING_MW:
            raise ConfigError(
                f"channel {self.channel}: steady power {self.steady_power_mw} mW "
                f"outside (0, {EDFA_CEILING_MW}]")
        if not self.rise_fall_us > 0:
            raise ConfigError(f"channel {self.channel}: rise/fall time must be positive")

    @property
    def ramp_us(self):
        return self.rise_fall_us * RAMP_PER_RISE


#: rise/fall presets: shutter datasheet and measured system value
SHUTTER_DATASHEET_US = 4.0
MEASURED_SYSTEM_US = 0.5


@dataclass(frozen=True)
class SwitchSchedule:
    """Pump selections: from ``events[k][0]`` on, channel ``events[k][1]`` is the only one on."""

    events: tuple
    horizon_us: float

    def __post_init__(self):
        times = [t for t, _ in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("schedule event times must be strictly increasing")
        if times and (times[0] < 0 or times[-1] > self.horizon_us):
            raise ConfigError("schedule events must lie within [0, horizon]")

    @classmethod
    def alternating(cls, channels, interval_us, horizon_us, start_us=0.0):
        """Cycle through ``channels`` every ``interval_us``."""
        n = int(math.floor((horizon_us - start_us) / interval_us + 1e-9))
        events = tuple((start_us + k * interval_us, channels[k % len(channels)])
                       for k in range(n))
        return cls(events, horizon_us)

    @property
    def min_gap_us(self):
        times = [t for t, _ in self.events]
        gaps = [b - a for a, b in zip(times, times[1:])]
        return min(gaps) if gaps else math.inf


@dataclass(frozen=True)
class PumpWaveform:
    """Sampled pump power per channel; ``power[k]`` belongs to ``channels[k]``."""

    times_us: np.ndarray
    channels: tuple
    power_mw: np.ndarray
    steady_mw: tuple
    dt_us: float

    def trace(self, channel):
        try:
            return self.power_mw[self.channels.index(channel)]
        except ValueError:
            raise ConfigError(f"channel {channel} not in waveform") from None

    def steady(self, channel):
        return self.steady_mw[self.channels.index(channel)]


def edfa_transient_factor(t_since_on_us, overshoot=DEFAULT_OVERSHOOT, decay_us=DEFAULT_DECAY_US):
    """Gain factor ``1 + overshoot * exp(-t / decay)`` after a turn-on."""
    if decay_us < 0:
        raise DomainError("decay time must be nonnegative")
    t = np.asarray(t_since_on_us, dtype=float)
    if np.any(t < 0):
        raise DomainError("time since turn-on must be nonnegative")
    if decay_us == 0:
        out = np.where(t == 0, 1.0 + overshoot, 1.0)
    else:
        out = 1.0 + overshoot * np.exp(-t / decay_us)
    return float(out) if out.ndim == 0 else out


def _edges(schedule, channel):
    """(time, target_level) pairs where ``channel`` changes state."""
    on = False
    edges = []
    for t, target in schedule.events:
        want = target == channel
        if want != on:
            edges.append((t, 1.0 if want else 0.0))
            on = want
    return edges


def shutter_envelope(times, edges, ramp_us):
    """Normalized shutter transmission; a new edge starts from the current level."""
    level = np.zeros_like(times)
    current = 0.0
    for k, (t0, target) in enumerate(edges):
        t_end = edges[k + 1][0] if k + 1 < len(edges) else np.inf
        sel = (times >= t0) & (times < t_end)
        u = (times[sel] - t0) / ramp_us
        level[sel] = current + (target - current) * _smoothstep(u)
        if np.isfinite(t_end):
            current = current + (target - current) * float(_smoothstep((t_end - t0) / ramp_us))
    return level


def render_waveform(configs, schedule: SwitchSchedule, dt_us=None,
                    overshoot=DEFAULT_OVERSHOOT, decay_us=DEFAULT_DECAY_US) -> PumpWaveform:
    """Sample every channel's pump power over ``[0, horizon)``.

    ``dt_us`` defaults to a fiftieth of the fastest rise/fall time and may
    not exceed a tenth of it.
    """
    configs = list(configs)
    if not configs:
        raise ConfigError("no pump channels configured")
    by_channel = {c.channel: c for c in configs}
    if len(by_channel) != len(configs):
        raise ConfigError("duplicate pump channel in configuration")
    for _, target in schedule.events:
        if target not in by_channel:
            raise ConfigError(f"schedule references unknown channel {target}")
    fastest = min(c.rise_fall_us for c in configs)
    if dt_us is None:
        dt_us = fastest / 50.0
    if dt_us > fastest / 10.0 * (1 + 1e-12):
        raise ConfigError(f"dt {dt_us} us too coarse for rise/fall {fastest} us")

    n = int(math.ceil(schedule.horizon_us / dt_us - 1e-9))
    times = np.arange(n) * dt_us
    power = np.zeros((len(configs), n))
    for row, cfg in enumerate(configs):
        edges = _edges(schedule, cfg.channel)
        env = shutter_envelope(times, edges, cfg.ramp_us)
        gain = np.ones(n)
        if overshoot:
            for t_on in (t for t, lvl in edges if lvl == 1.0):
                sel = times >= t_on
                gain[sel] = edfa_transient_factor(times[sel] - t_on, overshoot, decay_us)
        power[row] = cfg.steady_power_mw * env * gain
    power.setflags(write=False)
    times.setflags(write=False)
    return PumpWaveform(times, tuple(c.channel for c in configs), power,
                        tuple(c.steady_power_mw for c in configs), dt_us)


def transition_mask(configs, schedule: SwitchSchedule, times):
    """True for samples inside any shutter ramp."""
    ramp = max(c.ramp_us for c in configs)
    mask = np.zeros(len(times), bool)
    for t, _ in schedule.events:
        mask |= (times >= t) & (times < t + ramp)
    return mask


def _crossings(x, y, level, rising):
    """Linearly interpolated times where ``y`` crosses ``level``."""
    if rising:
        idx = np.nonzero((y[:-1] < level) & (y[1:] >= level))[0]
    else:
        idx = np.nonzero((y[:-1] > level) & (y[1:] <= level))[0]
    y0, y1 = y[idx], y[idx + 1]
    return x[idx] + (level - y0) / (y1 - y0) * (x[idx + 1] - x[idx])


def measure_rise_fall(waveform: PumpWaveform, channel, reference_mw=None):
    """First 10-90 % rise time and 90-10 % fall time of a channel, in us.

    Levels are relative to ``reference_mw`` (default: the channel's steady power).
    """
    y = np.asarray(waveform.trace(channel), dtype=float)
    x = np.asarray(waveform.times_us, dtype=float)
    ref = waveform.steady(channel) if reference_mw is None else reference_mw
    lo, hi = 0.1 * ref, 0.9 * ref

    def first_edge(start_level, end_level, rising):
        starts = _crossings(x, y, start_level, rising)
        ends = _crossings(x, y, end_level, rising)
        for t0 in starts:
            later = ends[ends >= t0]
            if later.size:
                # reject if the trace turned back before reaching the far level
                back = _crossings(x, y, start_level, not rising)
                if np.any((back > t0) & (back < later[0])):
                    continue
                return later[0] - t0
        return None

    rise = first_edge(lo, hi, True)
    fall = first_edge(hi, lo, False)
    if rise is None or fall is None:
        raise MeasurementError(f"no complete rising and falling edge on channel {channel}")
    return float(rise), float(fall)


def instantaneous_efficiency(waveform: PumpWaveform, channel, device, t_us):
    """Conversion efficiency given the channel's pump power at time ``t_us``."""
    a, b = device.calibration(channel)
    t = np.asarray(t_us, dtype=float)
    x = waveform.times_us
    if np.any(t < x[0]) or np.any(t > x[-1] + waveform.dt_us):
        raise DomainError("time outside the waveform horizon")
    p = np.interp(t, x, waveform.trace(channel))
    return conversion_efficiency(a, b, p)


def min_switch_interval(configs) -> float:
    """Smallest schedule gap at which every channel's plateau still reaches 90 %."""
    configs = list(configs)
    if not configs:
        raise ConfigError("no pump channels configured")
    return max(c.rise_fall_us for c in configs)


def plateau_durations(waveform: PumpWaveform, channel, fraction=0.99):
    """Lengths (us) of contiguous runs where power is at least ``fraction`` of steady."""
    above = waveform.trace(channel) >= fraction * waveform.steady(channel)
    padded = np.concatenate([[False], above, [False]])
    d = np.diff(padded.astype(int))
    starts, stops = np.nonzero(d == 1)[0], np.nonzero(d == -1)[0]
    return (stops - starts) * waveform.dt_us
