"""Exception types shared across the package."""


class CsqfcError(Exception):
    """Base class for all package errors."""


class DomainError(CsqfcError, ValueError):
    """An argument lies outside the domain of a formula."""


class ChannelRangeError(CsqfcError, IndexError):
    """A channel index is outside the channel plan."""


class ConfigError(CsqfcError, ValueError):
    """A configuration is inconsistent or references unknown items.

    ``line`` is set when the error can be anchored to a line of a config file.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(CsqfcError, ValueError):
    """Array shapes or Fock cutoffs do not match."""


class FitError(CsqfcError, RuntimeError):
    """Curve fit failed; ``best`` holds the best iterate ``(A, B, rms)`` if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class MeasurementError(CsqfcError, ValueError):
    """No complete edge could be found in a waveform."""


class EstimateError(CsqfcError, ValueError):
    """Cross-correlation is undefined (no accidental coincidences).

    ``lower_bound`` is the value g would take if a single plateau count had
    been observed; the true value is at least this large.
    """

    def __init__(self, message, lower_bound=None):
        super().__init__(message)
        self.lower_bound = lower_bound


class InfeasibleError(CsqfcError, RuntimeError):
    """A schedule cannot be built; ``round_index`` names the bottleneck round."""

    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index
