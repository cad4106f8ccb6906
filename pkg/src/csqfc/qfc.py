"""Two-mode Fock-space model of one conversion round.

The converted-mode operator after a round is

    b_c = exp(-i phi) sin(theta/2) a_s + cos(theta/2) a_c

and the signal-mode output is completed with the usual beamsplitter sign,
``b_s = cos(theta/2) a_s - exp(i phi) sin(theta/2) a_c``. States are stored
as amplitude grids ``amp[n_s, n_c]`` truncated at total photon number
``cutoff``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .spectral import theta_from_power

DEFAULT_CUTOFF = 4


@dataclass(frozen=True)
class QfcSetting:
    theta: float
    phi: float = 0.0
    round_index: int = 1
    pump_channel: int = 1

    @classmethod
    def from_pump_power(cls, b, power_mw, phi=0.0, round_index=1, pump_channel=1):
        return cls(theta_from_power(b, power_mw), phi, round_index, pump_channel)

    def inverse(self):
        """Setting whose transform undoes this one (phi shifted by pi)."""
        return QfcSetting(self.theta, (self.phi + math.pi) % (2 * math.pi),
                          self.round_index, self.pump_channel)


class TwoModeFockState:
    """Joint photon-number amplitudes of the signal and converted modes."""

    def __init__(self, amplitudes, cutoff=None, normalize=False):
        amp = np.array(amplitudes, dtype=complex)
        if amp.ndim != 2 or amp.shape[0] != amp.shape[1]:
            raise ShapeError("amplitudes must be a square 2-D array")
        if cutoff is None:
            cutoff = amp.shape[0] - 1
        if cutoff < 1 or amp.shape[0] != cutoff + 1:
            raise ShapeError(f"amplitude grid {amp.shape} does not match cutoff {cutoff}")
        ns, nc = np.indices(amp.shape)
        if np.any(amp[ns + nc > cutoff] != 0):
            raise ShapeError("amplitudes beyond the total-photon cutoff must be zero")
        norm = np.sqrt(np.sum(np.abs(amp) ** 2))
        if normalize:
            if norm == 0:
                raise DomainError("cannot normalize the zero vector")
            amp = amp / norm
        elif abs(norm - 1.0) > 1e-12:
            raise DomainError(f"state is not normalized (norm {norm!r})")
        amp.setflags(write=False)
        self._amp = amp
        self.cutoff = cutoff

    @property
    def amplitudes(self):
        return self._amp

    @classmethod
    def fock(cls, n_signal, n_converted, cutoff=DEFAULT_CUTOFF):
        if n_signal + n_converted > cutoff:
            raise ShapeError("Fock state exceeds the cutoff")
        amp = np.zeros((cutoff + 1, cutoff + 1), complex)
        amp[n_signal, n_converted] = 1.0
        return cls(amp, cutoff)

    @classmethod
    def random(cls, rng=None, cutoff=DEFAULT_CUTOFF):
        rng = np.random.default_rng(rng)
        shape = (cutoff + 1, cutoff + 1)
        amp = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        ns, nc = np.indices(shape)
        amp[ns + nc > cutoff] = 0
        return cls(amp, cutoff, normalize=True)

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self._amp) ** 2)))

    def probabilities(self):
        return np.abs(self._amp) ** 2

    def sector_distribution(self):
        """Probability of each total photon number 0..cutoff."""
        prob = self.probabilities()
        ns, nc = np.indices(prob.shape)
        return np.bincount((ns + nc).ravel(), prob.ravel(), minlength=self.cutoff + 1)[: self.cutoff + 1]

    def converted_distribution(self):
        """Marginal photon-number distribution of the converted mode."""
        return self.probabilities().sum(axis=0)

    def __repr__(self):
        return f"TwoModeFockState(cutoff={self.cutoff})"


def mode_transform_coeffs(setting: QfcSetting):
    """``(c_s, c_c)`` with ``b_c = c_s a_s + c_c a_c``."""
    half = setting.theta / 2.0
    return np.exp(-1j * setting.phi) * math.sin(half), complex(math.cos(half))


def conversion_probability(theta):
    return math.sin(theta / 2.0) ** 2


def mode_matrix(setting: QfcSetting):
    """2x2 unitary ``U`` with ``(b_s, b_c) = U (a_s, a_c)``."""
    c_s, c_c = mode_transform_coeffs(setting)
    # b_s = cos a_s - e^{i phi} sin a_c
    return np.array([[c_c, -np.conj(c_s)], [c_s, c_c]])


def _sector_matrix(u, n):
    """Action of the mode unitary on the ``n``-photon sector.

    Column ``k`` is the image of ``|k, n-k>``, expanded by substituting
    ``a_j^dag -> sum_i U[i, j] b_i^dag`` and collecting monomials.
    """
    out = np.zeros((n + 1, n + 1), complex)
    fact = [math.factorial(m) for m in range(n + 1)]
    # polynomials in (x = b_s^dag, y = b_c^dag) indexed by power of x
    for k in range(n + 1):
        poly = np.array([1.0 + 0j])
        col_s = np.array([u[1, 0], u[0, 0]])  # coefficients of (y, x) for a_s^dag
        col_c = np.array([u[1, 1], u[0, 1]])
        for _ in range(k):
            poly = np.convolve(poly, col_s)
        for _ in range(n - k):
            poly = np.convolve(poly, col_c)
        # poly[m] multiplies x^m y^(n-m)
        norm_in = math.sqrt(fact[k] * fact[n - k])
        for m in range(n + 1):
            out[m, k] = poly[m] * math.sqrt(fact[m] * fact[n - m]) / norm_in
    return out


def apply_qfc(state: TwoModeFockState, setting: QfcSetting, cutoff=None) -> TwoModeFockState:
    """Apply one conversion round to ``state``; returns a new state."""
    if cutoff is not None and cutoff != state.cutoff:
        raise ShapeError(f"state cutoff {state.cutoff} does not match {cutoff}")
    u = mode_matrix(setting)
    amp = state.amplitudes
    new = np.zeros_like(amp)
    for n in range(state.cutoff + 1):
        ks = np.arange(n + 1)
        vec = amp[ks, n - ks]
        if not np.any(vec):
            continue
        new[ks, n - ks] = _sector_matrix(u, n) @ vec
    return TwoModeFockState(new, state.cutoff, normalize=False)


@dataclass(frozen=True)
class PumpGuard:
    """Outcome of :func:`simultaneous_pump_guard`; truthy when ok."""

    ok: bool
    channels: tuple = ()

    def __bool__(self):
        return self.ok


def simultaneous_pump_guard(active_pumps) -> PumpGuard:
    """Exactly one active pump per round is allowed."""
    active = tuple(active_pumps)
    return PumpGuard(len(active) == 1, active)
