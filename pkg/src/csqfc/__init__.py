"""Simulation and analysis toolkit for channel-selective quantum frequency conversion."""

__version__ = "0.1.0"

from .errors import (ChannelRangeError, ConfigError, CsqfcError, DomainError, EstimateError,
                     FitError, InfeasibleError, MeasurementError, ShapeError)
from .fitting import EfficiencyLawRegressor, fit_efficiency_curve
from .pump import (PumpChannelConfig, PumpWaveform, SwitchSchedule, edfa_transient_factor,
                   instantaneous_efficiency, measure_rise_fall, min_switch_interval,
                   render_waveform)
from .qfc import (QfcSetting, TwoModeFockState, apply_qfc, conversion_probability,
                  mode_transform_coeffs, simultaneous_pump_guard)
from .scheduler import (PartyLinkRequest, RateConstraint, RoundAssignment, effective_rate,
                        feasibility_report, schedule, validate_schedule)
from .spectral import (ChannelPlan, ConversionDevice, EfficiencyCurve, channel_frequency,
                       conversion_efficiency, converted_frequency, envelope_efficiency,
                       optimal_pump_power, phase_mismatch, selectable_channel_count)
from .stats import (CoincidenceHistogram, CrossCorrMatrix, CrosstalkMatrix, DetectorParams,
                    SourceParams, accumulate_histogram, analytic_g, cross_corr_matrix,
                    estimate_cross_correlation, simulate_run)
