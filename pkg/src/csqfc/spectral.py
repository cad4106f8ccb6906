"""Frequency bookkeeping, conversion-efficiency law and phase-matching envelope.

All frequencies are ordinary (not angular) frequencies in GHz. Grid
frequencies are integers so that energy-conservation checks are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import brentq

from .errors import ChannelRangeError, ConfigError, DomainError

#: (pi/2)**2, the value of B*P at the first efficiency maximum.
HALF_PI_SQUARED = (math.pi / 2.0) ** 2


def _check_frequency(value, name="frequency"):
    if not value > 0:
        raise DomainError(f"{name} must be positive, got {value!r}")
    return value


@dataclass(frozen=True)
class ChannelPlan:
    """Fixed-spacing DWDM grid.

    Channel ``i`` (1-based) sits at ``base_ghz + direction * (i - 1) * spacing_ghz``.
    """

    base_ghz: int
    spacing_ghz: int
    count: int
    direction: int = 1

    def __post_init__(self):
        _check_frequency(self.base_ghz, "base_ghz")
        if self.spacing_ghz <= 0:
            raise DomainError("spacing_ghz must be positive")
        if self.count < 1:
            raise DomainError("count must be at least 1")
        if self.direction not in (1, -1):
            raise DomainError("direction must be +1 or -1")
        lowest = self.base_ghz + min(0, self.direction * (self.count - 1) * self.spacing_ghz)
        if lowest <= 0:
            raise DomainError("channel plan extends to nonpositive frequencies")

    def frequencies(self):
        return [channel_frequency(self, i) for i in range(1, self.count + 1)]

    def index_of(self, frequency_ghz):
        return frequency_to_channel(self, frequency_ghz)


def channel_frequency(plan: ChannelPlan, index: int) -> int:
    """Center frequency (GHz) of channel ``index`` in ``plan``."""
    if not 1 <= index <= plan.count:
        raise ChannelRangeError(f"channel {index} outside 1..{plan.count}")
    return plan.base_ghz + plan.direction * (index - 1) * plan.spacing_ghz


def frequency_to_channel(plan: ChannelPlan, frequency_ghz) -> int:
    """Inverse of :func:`channel_frequency`; raises if not on the grid."""
    offset = plan.direction * (frequency_ghz - plan.base_ghz)
    steps, rem = divmod(offset, plan.spacing_ghz)
    if rem != 0:
        raise ChannelRangeError(f"{frequency_ghz} GHz is not on the grid")
    index = int(steps) + 1
    if not 1 <= index <= plan.count:
        raise ChannelRangeError(f"{frequency_ghz} GHz is outside the plan")
    return index


def converted_frequency(signal_ghz, pump_ghz):
    """Difference frequency ``signal - pump`` produced by the converter."""
    _check_frequency(pump_ghz, "pump")
    if signal_ghz <= pump_ghz:
        raise DomainError(
            f"signal {signal_ghz} GHz must exceed pump {pump_ghz} GHz")
    return signal_ghz - pump_ghz


@dataclass(frozen=True)
class ConversionDevice:
    """PPLN-like converter.

    ``channel_calibration`` maps a pump channel index to ``(A, B)`` with A
    the peak efficiency and B in 1/mW. ``envelope_peak`` overrides the
    amplitude of the phase-matching envelope; by default the largest
    calibrated A is used.
    """

    length_mm: float
    pm_pump_ghz: float
    beta_rad_per_mm_ghz: float
    channel_calibration: Mapping[int, tuple] = field(default_factory=dict)
    envelope_peak: float | None = None

    def __post_init__(self):
        if not self.length_mm > 0:
            raise DomainError("length_mm must be positive")
        _check_frequency(self.pm_pump_ghz, "pm_pump_ghz")
        for ch, (a, b) in self.channel_calibration.items():
            if not 0 < a <= 1:
                raise DomainError(f"channel {ch}: A={a} outside (0, 1]")
            if not b > 0:
                raise DomainError(f"channel {ch}: B={b} must be positive")
        if self.envelope_peak is not None and not 0 < self.envelope_peak <= 1:
            raise DomainError("envelope_peak outside (0, 1]")

    def calibration(self, channel):
        try:
            return self.channel_calibration[channel]
        except KeyError:
            raise ConfigError(f"no calibration for pump channel {channel}") from None

    @property
    def peak_efficiency(self):
        if self.envelope_peak is not None:
            return self.envelope_peak
        if not self.channel_calibration:
            raise DomainError("device has no calibrated channel")
        return max(a for a, _ in self.channel_calibration.values())


def phase_mismatch(device: ConversionDevice, pump_ghz) -> float:
    """Linearized phase mismatch in rad/mm, zero at the phase-matched pump."""
    return device.beta_rad_per_mm_ghz * (pump_ghz - device.pm_pump_ghz)


def sinc(x):
    # numpy's sinc is normalized (sin(pi x)/(pi x))
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def envelope_efficiency(device: ConversionDevice, pump_ghz):
    """Maximum conversion efficiency at a given pump frequency.

    ``A_peak * sinc(dk * L / 2)**2``; accepts scalars or arrays.
    """
    x = phase_mismatch(device, np.asarray(pump_ghz, dtype=float)) * device.length_mm / 2.0
    out = device.peak_efficiency * sinc(x) ** 2
    return float(out) if np.ndim(out) == 0 else out


def calibrate_beta(length_mm, peak, threshold, detuning_ghz):
    """Slope beta for which the envelope falls to ``threshold`` at ``detuning_ghz``.

    Solves ``peak * sinc(beta * detuning * L / 2)**2 = threshold`` on the
    main lobe.
    """
    if not 0 < threshold < peak:
        raise DomainError("threshold must lie strictly between 0 and peak")
    if detuning_ghz <= 0 or length_mm <= 0:
        raise DomainError("detuning and length must be positive")
    ratio = threshold / peak
    x = brentq(lambda u: float(sinc(u)) ** 2 - ratio, 1e-12, math.pi)
    return 2.0 * x / (detuning_ghz * length_mm)


def usable_band(device: ConversionDevice, threshold=0.40):
    """Integer-GHz pump band where the envelope is at least ``threshold``.

    Returns ``(low, high)``, or ``None`` when even the peak is below the
    threshold.
    """
    peak = device.peak_efficiency
    if threshold > peak:
        return None
    beta = abs(device.beta_rad_per_mm_ghz)
    if threshold <= 0 or beta == 0:
        raise DomainError("band is unbounded for zero threshold or zero dispersion")
    if threshold == peak:
        half = 0.0
    else:
        x = brentq(lambda u: float(sinc(u)) ** 2 - threshold / peak, 1e-12, math.pi)
        half = 2.0 * x / (beta * device.length_mm)
    return math.ceil(device.pm_pump_ghz - half), math.floor(device.pm_pump_ghz + half)


def conversion_efficiency(a, b, power_mw):
    """Efficiency ``A sin^2(sqrt(B P))`` at pump power ``P`` (mW)."""
    p = np.asarray(power_mw, dtype=float)
    if np.any(p < 0):
        raise DomainError("pump power must be nonnegative")
    out = a * np.sin(np.sqrt(b * p)) ** 2
    return float(out) if out.ndim == 0 else out


def optimal_pump_power(b) -> float:
    """Pump power of the first efficiency maximum, ``(pi/2)**2 / B``."""
    if not b > 0:
        raise DomainError("B must be positive")
    return HALF_PI_SQUARED / b


def theta_from_power(b, power_mw):
    """Mixing angle with ``sin^2(theta/2) = sin^2(sqrt(B P))``."""
    if power_mw < 0:
        raise DomainError("pump power must be nonnegative")
    return 2.0 * math.sqrt(b * power_mw)


def selectable_channel_count(band_low_ghz, band_high_ghz, spacing_ghz) -> int:
    if spacing_ghz <= 0:
        raise DomainError("spacing must be positive")
    if band_high_ghz <= band_low_ghz:
        return 0
    return int((band_high_ghz - band_low_ghz) // spacing_ghz)


@dataclass(frozen=True)
class EfficiencyCurve:
    """Measured efficiency vs pump power for one pump channel."""

    power_mw: tuple
    efficiency: tuple
    std_err: tuple | None = None

    def __post_init__(self):
        p = np.asarray(self.power_mw, dtype=float)
        e = np.asarray(self.efficiency, dtype=float)
        if p.shape != e.shape or p.ndim != 1:
            raise DomainError("power and efficiency must be 1-D and equal length")
        if np.any(np.diff(p) <= 0):
            raise DomainError("powers must be strictly increasing")
        if np.any((e < 0) | (e > 1)):
            raise DomainError("efficiencies must lie in [0, 1]")
        if self.std_err is not None and len(self.std_err) != len(p):
            raise DomainError("std_err length mismatch")

    @classmethod
    def generate(cls, a, b, power_mw, noise_sigma=0.0, rng=None):
        """Sample the efficiency law, optionally with clipped Gaussian noise."""
        p = np.asarray(power_mw, dtype=float)
        eta = conversion_efficiency(a, b, p)
        if noise_sigma:
            rng = np.random.default_rng(rng)
            eta = np.clip(eta + rng.normal(0.0, noise_sigma, p.shape), 0.0, 1.0)
        err = np.full(p.shape, float(noise_sigma))
        return cls(tuple(p), tuple(np.atleast_1d(eta)), tuple(err))
