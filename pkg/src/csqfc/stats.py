"""Seeded Monte Carlo of a heralded photon passing through the converter.

Time is divided into emission slots of ``slot_ps`` (the herald-filter
coherence time). Each slot holds a single-mode thermal number of pairs,
emitted at one uniformly drawn instant inside the slot. The mean pair
number ``mu`` is quoted per *reference window* ``window_ps`` (the
coincidence window used for g), so ``mu_slot = mu * slot_ps / window_ps``.

Detectors are threshold detectors without dead time. Noise (Raman plus
dark counts) is a flat Poisson process per detector.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ChannelRangeError, ConfigError, DomainError, EstimateError
from .spectral import (ChannelPlan, ConversionDevice, channel_frequency,
                       conversion_efficiency, converted_frequency,
                       frequency_to_channel, optimal_pump_power)

PS_PER_S = 1e12
HERALD_ID = 0
#: g = 18.22 measured for the source, solved as 1/(g - 1)
DEFAULT_MU = round(1.0 / (18.22 - 1.0), 4)
BLOCK_SLOTS = 1 << 20


@dataclass(frozen=True)
class SourceParams:
    mean_pairs_per_window: float = DEFAULT_MU
    herald_efficiency: float = 1.0
    signal_path_efficiency: float = 1.0
    window_ps: float = 476.0
    slot_ps: float = 100.0

    def __post_init__(self):
        if not self.mean_pairs_per_window > 0:
            raise DomainError("mean pair number must be positive")
        for name in ("herald_efficiency", "signal_path_efficiency"):
            if not 0 <= getattr(self, name) <= 1:
                raise DomainError(f"{name} must lie in [0, 1]")
        if self.slot_ps <= 0 or self.window_ps <= 0:
            raise DomainError("slot and window durations must be positive")

    @property
    def window_rate(self):
        """Reference windows per second."""
        return PS_PER_S / self.window_ps

    @property
    def mu_slot(self):
        return self.mean_pairs_per_window * self.slot_ps / self.window_ps

    def duration_for_windows(self, n_windows):
        return n_windows / self.window_rate


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 0.7
    dark_rate_hz: float = 100.0
    jitter_ps: float = 30.0

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise DomainError("detector efficiency must lie in [0, 1]")
        if self.dark_rate_hz < 0 or self.jitter_ps < 0:
            raise DomainError("dark rate and jitter must be nonnegative")


IDEAL_DETECTOR = DetectorParams(1.0, 0.0, 30.0)


class CrosstalkMatrix:
    """``leak[j, k]``: probability that light in channel k exits DeMux port j."""

    def __init__(self, leak):
        leak = np.array(leak, dtype=float)
        if leak.ndim != 2 or leak.shape[0] != leak.shape[1]:
            raise ConfigError("crosstalk matrix must be square")
        if np.any(leak < 0):
            raise ConfigError("crosstalk entries must be nonnegative")
        if np.any(leak.sum(axis=0) > 1 + 1e-12):
            raise ConfigError("crosstalk columns must sum to at most 1")
        diag = np.diag(leak)
        if np.any(leak > diag[None, :] + 1e-15):
            raise ConfigError("off-diagonal leakage exceeds the diagonal")
        leak.setflags(write=False)
        self.leak = leak

    @property
    def size(self):
        return self.leak.shape[0]

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @classmethod
    def neighbor(cls, n, fraction):
        """Each channel leaks ``fraction`` into each adjacent port."""
        leak = np.eye(n)
        for k in range(n):
            for j in (k - 1, k + 1):
                if 0 <= j < n:
                    leak[j, k] = fraction
            leak[k, k] = 1.0 - fraction * ((k > 0) + (k < n - 1))
        return cls(leak)


@dataclass(frozen=True)
class ConverterSetup:
    """Signal frequency, pump and output grids, and the converter."""

    signal_ghz: int
    pump_plan: ChannelPlan
    output_plan: ChannelPlan
    device: ConversionDevice
    pump_power_mw: dict = field(default_factory=dict)

    def output_channel(self, pump_channel):
        """Output port hit by the converted photon, or ``None`` if off-grid."""
        f = converted_frequency(self.signal_ghz, channel_frequency(self.pump_plan, pump_channel))
        try:
            return frequency_to_channel(self.output_plan, f)
        except ChannelRangeError:
            return None

    def efficiency(self, pump_channel):
        a, b = self.device.calibration(pump_channel)
        power = self.pump_power_mw.get(pump_channel, optimal_pump_power(b))
        return conversion_efficiency(a, b, power)


@dataclass(frozen=True)
class EventStream:
    """Time-ordered detector events. Detector 0 is the herald, ``j`` is output port ``j``."""

    detector_id: np.ndarray
    time_ps: np.ndarray
    duration_ps: float
    n_detectors: int

    def times(self, detector):
        return self.time_ps[self.detector_id == detector]

    def singles(self):
        return np.bincount(self.detector_id, minlength=self.n_detectors)


def _block_rng(seed, pump_channel, block):
    ss = np.random.SeedSequence(entropy=[int(seed), int(pump_channel)], spawn_key=(block,))
    return np.random.Generator(np.random.PCG64(ss))


def _simulate_block(block, n_slots, params):
    (source, herald_det, chan_dets, port_probs, noise_rates,
     seed, pump_channel, loss_first) = params
    rng = _block_rng(seed, pump_channel, block)
    slot = source.slot_ps
    t0 = block * BLOCK_SLOTS * slot
    n_ports = len(chan_dets)

    pairs = rng.geometric(1.0 / (1.0 + source.mu_slot), n_slots) - 1
    busy = np.nonzero(pairs)[0]
    n = pairs[busy]
    emit = t0 + (busy + rng.random(busy.size)) * slot

    ids, times = [], []
    herald = rng.binomial(n, source.herald_efficiency * herald_det.efficiency) > 0
    ids.append(np.full(herald.sum(), HERALD_ID))
    times.append(emit[herald] + rng.normal(0.0, herald_det.jitter_ps, herald.sum()))

    if loss_first:
        survivors = rng.binomial(n, source.signal_path_efficiency)
        counts = rng.multinomial(survivors, np.append(port_probs, max(0.0, 1 - port_probs.sum())))
    else:
        counts = rng.multinomial(n, np.append(port_probs, max(0.0, 1 - port_probs.sum())))
        counts[:, :n_ports] = rng.binomial(counts[:, :n_ports], source.signal_path_efficiency)
    for j, det in enumerate(chan_dets):
        clicks = rng.binomial(counts[:, j], det.efficiency) > 0
        k = clicks.sum()
        ids.append(np.full(k, j + 1))
        times.append(emit[clicks] + rng.normal(0.0, det.jitter_ps, k))

    span = n_slots * slot
    for det_id, rate in enumerate(noise_rates):
        k = rng.poisson(rate * span / PS_PER_S)
        ids.append(np.full(k, det_id))
        times.append(t0 + rng.random(k) * span)
    return np.concatenate(ids), np.concatenate(times)


def simulate_run(source: SourceParams, detector: DetectorParams, setup: ConverterSetup,
                 pump_channel, crosstalk: CrosstalkMatrix | None = None,
                 noise_rate_hz=0.0, duration_s=None, seed=None, *, n_windows=None,
                 herald_detector=None, n_jobs=1, loss_before_conversion=True) -> EventStream:
    """Time-tagged events for one pump setting.

    ``detector`` is used for every output port (or pass a sequence of
    per-port detectors); ``herald_detector`` defaults to ``detector``.
    Exactly one of ``duration_s`` and ``n_windows`` gives the run length.
    Blocks of slots draw from independent streams keyed on
    ``(seed, pump_channel, block)``, so ``n_jobs`` never changes the result.
    """
    if seed is None:
        raise ConfigError("a seed is required")
    if (duration_s is None) == (n_windows is None):
        raise ConfigError("give exactly one of duration_s and n_windows")
    if n_windows is not None:
        duration_s = source.duration_for_windows(n_windows)
    if not 1 <= pump_channel <= setup.pump_plan.count:
        raise ConfigError(f"pump channel {pump_channel} outside the pump plan")
    n_ports = setup.output_plan.count
    if isinstance(detector, DetectorParams):
        chan_dets = (detector,) * n_ports
    else:
        chan_dets = tuple(detector)
        if len(chan_dets) != n_ports:
            raise ConfigError("one detector per output port required")
    herald_det = herald_detector or chan_dets[0]
    crosstalk = crosstalk or CrosstalkMatrix.identity(n_ports)
    if crosstalk.size != n_ports:
        raise ConfigError("crosstalk matrix size does not match the output plan")
    noise = np.broadcast_to(np.asarray(noise_rate_hz, float), (n_ports,))
    if np.any(noise < 0):
        raise ConfigError("noise rates must be nonnegative")

    eta = setup.efficiency(pump_channel)
    port = setup.output_channel(pump_channel)
    port_probs = np.zeros(n_ports)
    if port is not None:
        port_probs = eta * crosstalk.leak[:, port - 1]
    noise_rates = [herald_det.dark_rate_hz] + [
        float(r) + d.dark_rate_hz for r, d in zip(noise, chan_dets)]

    total = int(round(duration_s * PS_PER_S / source.slot_ps))
    blocks = [(b, min(BLOCK_SLOTS, total - b * BLOCK_SLOTS))
              for b in range(math.ceil(total / BLOCK_SLOTS))]
    params = (source, herald_det, chan_dets, port_probs, noise_rates,
              seed, pump_channel, loss_before_conversion)
    if n_jobs == 1:
        parts = [_simulate_block(b, n, params) for b, n in blocks]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda bn: _simulate_block(bn[0], bn[1], params), blocks))
    if parts:
        ids = np.concatenate([p[0] for p in parts]).astype(np.int16)
        times = np.concatenate([p[1] for p in parts])
    else:
        ids, times = np.zeros(0, np.int16), np.zeros(0)
    order = np.lexsort((ids, times))
    return EventStream(ids[order], times[order], total * source.slot_ps, n_ports + 1)


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Counts of (channel time - herald time) over ``[-n*w, n*w)`` in bins of ``w``."""

    bin_width_ps: float
    counts: np.ndarray
    accumulation_s: float
    herald_singles: int
    channel_singles: int

    @property
    def edges_ps(self):
        half = len(self.counts) // 2
        return (np.arange(len(self.counts) + 1) - half) * self.bin_width_ps

    @property
    def centers_ps(self):
        e = self.edges_ps
        return 0.5 * (e[1:] + e[:-1])


def accumulate_histogram(events: EventStream, herald_id, channel_id, bin_width_ps=34.0,
                         span_ps=5000.0, chunk=200_000) -> CoincidenceHistogram:
    """Histogram every herald/channel pair with ``|delay| < span``.

    Every pair is counted (not only the nearest herald), which keeps the
    accidental background flat in delay.
    """
    if bin_width_ps <= 0 or span_ps <= 0:
        raise DomainError("bin width and span must be positive")
    ids, t = events.detector_id, events.time_ps
    if np.any(np.diff(t) < 0):
        order = np.argsort(t, kind="stable")
        ids, t = ids[order], t[order]
    th = t[ids == herald_id]
    tc = t[ids == channel_id]
    half = int(math.ceil(span_ps / bin_width_ps))
    edge = half * bin_width_ps
    counts = np.zeros(2 * half, dtype=np.int64)
    for start in range(0, tc.size, chunk):
        c = tc[start:start + chunk]
        lo = np.searchsorted(th, c - edge, side="right")
        hi = np.searchsorted(th, c + edge, side="right")
        reps = hi - lo
        if not reps.sum():
            continue
        # herald indices lo..hi-1 for every channel event
        idx = np.repeat(hi - reps.cumsum(), reps) + np.arange(reps.sum())
        delay = np.repeat(c, reps) - th[idx]
        b = np.floor(delay / bin_width_ps).astype(np.int64) + half
        ok = (b >= 0) & (b < 2 * half)
        counts += np.bincount(b[ok], minlength=2 * half)
    return CoincidenceHistogram(float(bin_width_ps), counts, events.duration_ps / PS_PER_S,
                                int(th.size), int(tc.size))


@dataclass(frozen=True)
class CrossCorrelation:
    g: float
    std_err: float
    coincidences: int
    accidentals_per_window: float
    window_ps: float
    plateau_counts: int = 0


def _window_bins(hist, window_ps):
    e = hist.edges_ps
    half = window_ps / 2.0
    tol = 1e-9 * hist.bin_width_ps
    return (e[:-1] >= -half - tol) & (e[1:] <= half + tol)


def estimate_cross_correlation(hist: CoincidenceHistogram, window_ps=476.0,
                               plateau_min_ps=None, min_plateau_bins=10) -> CrossCorrelation:
    """Accidental-normalized cross-correlation in a centered window.

    Bins lying entirely within ``|delay| <= window/2`` form the peak. The
    accidental level comes from bins whose centers satisfy
    ``|delay| > plateau_min_ps`` (default 5 window half-widths), scaled to
    the window width. Errors are Poisson on both counts.
    """
    win = _window_bins(hist, window_ps)
    if not win.any():
        raise DomainError("window narrower than one histogram bin")
    if plateau_min_ps is None:
        plateau_min_ps = 5.0 * window_ps / 2.0
    plateau = np.abs(hist.centers_ps) > plateau_min_ps
    if plateau.sum() < min_plateau_bins:
        raise DomainError(f"only {plateau.sum()} plateau bins; need {min_plateau_bins}")
    coinc = int(hist.counts[win].sum())
    plateau_total = int(hist.counts[plateau].sum())
    n_win, n_plat = int(win.sum()), int(plateau.sum())
    if plateau_total == 0:
        bound = coinc * n_plat / n_win
        raise EstimateError("no accidental coincidences; g is undefined", lower_bound=bound)
    acc = plateau_total * n_win / n_plat
    g = coinc / acc
    rel = math.sqrt(1.0 / max(coinc, 1) + 1.0 / plateau_total)
    # zero coincidences: quote one count as the error
    err = g * rel if coinc else 1.0 / acc
    return CrossCorrelation(g, err, coinc, acc, n_win * hist.bin_width_ps, plateau_total)


def normalized_histogram(hist: CoincidenceHistogram, window_ps=476.0, plateau_min_ps=None):
    """Counts divided by the plateau level per bin (undefined plateau gives NaN)."""
    if plateau_min_ps is None:
        plateau_min_ps = 5.0 * window_ps / 2.0
    plateau = np.abs(hist.centers_ps) > plateau_min_ps
    level = hist.counts[plateau].mean() if plateau.any() else 0.0
    if level == 0:
        return np.full(hist.counts.shape, np.nan)
    return hist.counts / level


def analytic_g(source: SourceParams, noise_rates=(0.0, 0.0), efficiencies=None, window_ps=None):
    """Expected g for a thermal pair source with Poisson noise on both arms.

    Per slot of length S, with mu_s pairs on average and total detection
    efficiencies eh, es (threshold detectors):

        Ph  = mu_s eh / (1 + mu_s eh)                  herald click
        Ps  = mu_s es / (1 + mu_s es)                  signal click
        P00 = 1 / (1 + mu_s (1 - (1 - eh)(1 - es)))    neither clicks
        Phs - Ph Ps = P00 - (1 - Ph)(1 - Ps)
                    = mu_s (1 + mu_s) eh es (1 - Ph)(1 - Ps) P00

    Noise adds r S expected events per slot on each arm. Accidentals are
    flat in delay at density Eh Es / S with E = P + r S, while the
    correlated excess Phs - Ph Ps sits inside the window W, so

        g = 1 + (Phs - Ph Ps) / (Eh Es) * S / W.

    For lossless, noiseless detection this is 1 + 1/mu with mu quoted
    per window W.
    """
    if not source.mean_pairs_per_window > 0:
        raise DomainError("mean pair number must be positive")
    if efficiencies is None:
        efficiencies = (source.herald_efficiency, source.signal_path_efficiency)
    eh, es = efficiencies
    w = source.window_ps if window_ps is None else window_ps
    s = source.slot_ps
    mu = source.mu_slot
    ph = mu * eh / (1 + mu * eh)
    ps = mu * es / (1 + mu * es)
    p00 = 1.0 / (1 + mu * (1 - (1 - eh) * (1 - es)))
    # closed form of the excess avoids cancellation at small mu
    excess = mu * (1 + mu) * eh * es * p00 / ((1 + mu * eh) * (1 + mu * es))
    rh, rs = noise_rates
    e_h = ph + rh * s / PS_PER_S
    e_s = ps + rs * s / PS_PER_S
    if e_h * e_s == 0:
        return math.nan
    return 1.0 + excess / (e_h * e_s) * s / w


@dataclass(frozen=True)
class MatrixScenario:
    source: SourceParams
    detector: DetectorParams
    setup: ConverterSetup
    crosstalk: CrosstalkMatrix | None = None
    noise_rate_hz: float = 0.0
    duration_s: float = 4.76e-4
    bin_width_ps: float = 34.0
    span_ps: float = 5000.0
    window_ps: float = 476.0


@dataclass(frozen=True)
class CrossCorrMatrix:
    """g[i, j] for pump channel ``pump_channels[i]`` and output port ``output_channels[j]``.

    Undefined entries (no accidentals) are NaN with ``defined`` False; their
    ``lower_bound`` is the value g would take for one plateau count.
    ``accidentals`` is the plateau-estimated accidental count in the window
    and ``plateau_counts`` the plateau total it came from.
    """

    pump_channels: tuple
    output_channels: tuple
    g: np.ndarray
    std_err: np.ndarray
    defined: np.ndarray
    coincidences: np.ndarray
    lower_bound: np.ndarray
    accidentals: np.ndarray
    plateau_counts: np.ndarray

    def excess_significance(self):
        """One-sided z of coincidences above the accidental level.

        Counts both the window and the plateau as Poisson; undefined
        entries are NaN.
        """
        with np.errstate(divide="ignore", invalid="ignore"):
            var = self.accidentals + self.accidentals ** 2 / self.plateau_counts
            z = (self.coincidences - self.accidentals) / np.sqrt(var)
        return np.where(self.defined, z, np.nan)


def cross_corr_matrix(scenario: MatrixScenario, seed, n_jobs=1) -> CrossCorrMatrix:
    """Run every pump channel and estimate g in every output port."""
    setup = scenario.setup
    pumps = tuple(range(1, setup.pump_plan.count + 1))
    outs = tuple(range(1, setup.output_plan.count + 1))
    shape = (len(pumps), len(outs))
    g = np.full(shape, np.nan)
    err = np.full(shape, np.nan)
    defined = np.zeros(shape, bool)
    coinc = np.zeros(shape, np.int64)
    bound = np.full(shape, np.nan)
    acc = np.full(shape, np.nan)
    plat = np.zeros(shape, np.int64)
    for i, pump in enumerate(pumps):
        events = simulate_run(scenario.source, scenario.detector, setup, pump,
                              scenario.crosstalk, scenario.noise_rate_hz,
                              scenario.duration_s, seed, n_jobs=n_jobs)
        for j, port in enumerate(outs):
            hist = accumulate_histogram(events, HERALD_ID, port,
                                        scenario.bin_width_ps, scenario.span_ps)
            try:
                cc = estimate_cross_correlation(hist, scenario.window_ps)
            except EstimateError as exc:
                coinc[i, j] = int(hist.counts[_window_bins(hist, scenario.window_ps)].sum())
                bound[i, j] = exc.lower_bound
                continue
            g[i, j], err[i, j], defined[i, j] = cc.g, cc.std_err, True
            coinc[i, j] = cc.coincidences
            acc[i, j] = cc.accidentals_per_window
            plat[i, j] = cc.plateau_counts
    return CrossCorrMatrix(pumps, outs, g, err, defined, coinc, bound, acc, plat)
