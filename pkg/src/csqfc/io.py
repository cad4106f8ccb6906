"""Readers and writers for the text formats used by the command line tool."""

from __future__ import annotations

import csv
import io
from collections import defaultdict

import numpy as np
import yaml

from .errors import ConfigError
from .pump import PumpChannelConfig, SwitchSchedule
from .scheduler import PartyLinkRequest
from .spectral import ChannelPlan, ConversionDevice, EfficiencyCurve, calibrate_beta


class Config:
    """Parsed YAML mapping that remembers the source line of every key."""

    def __init__(self, data, nodes=None, path=""):
        self.data = data
        self._nodes = nodes
        self.path = path

    @classmethod
    def from_text(cls, text, path=""):
        try:
            root = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"{path}: malformed YAML: {getattr(exc, 'problem', exc)}",
                              line=mark.line + 1 if mark else None) from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping", line=1)
        return cls(data, root, path)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), str(path))

    def line_of(self, *keys):
        """1-based line of the value at ``keys`` (or of the deepest found parent)."""
        node = self._nodes
        line = 1
        for key in keys:
            if isinstance(node, yaml.MappingNode):
                nxt = None
                for k, v in node.value:
                    if k.value == str(key):
                        line, nxt = k.start_mark.line + 1, v
                        break
                if nxt is None:
                    return line
                node = nxt
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) \
                    and key < len(node.value):
                node = node.value[key]
                line = node.start_mark.line + 1
            else:
                return line
        return line

    def error(self, message, *keys):
        return ConfigError(f"{self.path}: {'.'.join(map(str, keys))}: {message}",
                           line=self.line_of(*keys))

    def get(self, *keys, default=None, required=False, kind=None):
        value = self.data
        for key in keys:
            if isinstance(value, dict) and key in value:
                value = value[key]
            elif isinstance(value, list) and isinstance(key, int) and key < len(value):
                value = value[key]
            else:
                if required:
                    raise self.error("missing required key", *keys)
                return default
        if kind is not None and value is not None:
            try:
                if kind is bool:
                    if not isinstance(value, bool):
                        raise TypeError
                elif kind in (int, float) and isinstance(value, bool):
                    raise TypeError
                elif kind is int and isinstance(value, float) and not value.is_integer():
                    raise TypeError
                value = kind(value)
            except (TypeError, ValueError):
                raise self.error(f"expected {kind.__name__}, got {value!r}", *keys) from None
        return value


def read_table(path, columns):
    """Comma-separated rows with ``#`` comments; returns ``(line_no, row)`` pairs.

    A header row naming the columns is optional.
    """
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            fields = [f.strip() for f in next(csv.reader([text]))]
            if [f.lower() for f in fields] == list(columns):
                continue
            if len(fields) != len(columns):
                raise ConfigError(f"{path}: expected {len(columns)} fields "
                                  f"({', '.join(columns)}), got {len(fields)}", line=line_no)
            rows.append((line_no, fields))
    return rows


def _num(path, line_no, text, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{path}: not a number: {text!r}", line=line_no) from None


def read_calibration(path):
    """Calibration samples grouped per pump channel: ``{channel: EfficiencyCurve}``."""
    cols = ("pump_channel", "pump_power_mw", "efficiency", "std_err")
    samples = defaultdict(list)
    for line_no, (ch, p, eta, err) in read_table(path, cols):
        samples[_num(path, line_no, ch, int)].append(
            (_num(path, line_no, p), _num(path, line_no, eta), _num(path, line_no, err), line_no))
    curves = {}
    for ch, rows in sorted(samples.items()):
        rows.sort()
        try:
            curves[ch] = EfficiencyCurve(tuple(r[0] for r in rows), tuple(r[1] for r in rows),
                                         tuple(r[2] for r in rows))
        except ValueError as exc:
            raise ConfigError(f"{path}: channel {ch}: {exc}", line=rows[0][3]) from None
    return curves


def read_schedule(path, horizon_us=None):
    rows = read_table(path, ("time_us", "target_channel"))
    events = tuple((_num(path, n, t), _num(path, n, ch, int)) for n, (t, ch) in rows)
    if horizon_us is None:
        horizon_us = events[-1][0] if events else 0.0
    try:
        return SwitchSchedule(events, horizon_us)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def read_requests(path):
    rows = read_table(path, ("party_a", "party_b", "demand"))
    out = []
    for n, (a, b, d) in rows:
        try:
            out.append(PartyLinkRequest(a, b, _num(path, n, d, int)))
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}", line=n) from None
    return out


def device_from_config(cfg: Config, *keys):
    """``ConversionDevice`` from a mapping with ``length_mm``, ``pm_pump_ghz``,
    ``beta_rad_per_mm_ghz`` and ``channels[{index, a, b_per_mw}]``."""
    length = cfg.get(*keys, "length_mm", required=True, kind=float)
    pm = cfg.get(*keys, "pm_pump_ghz", required=True, kind=float)
    peak = cfg.get(*keys, "envelope_peak", kind=float)
    chans = cfg.get(*keys, "channels", default=[]) or []
    if not isinstance(chans, list):
        raise cfg.error("expected a list", *keys, "channels")
    cal = {}
    for i in range(len(chans)):
        idx = cfg.get(*keys, "channels", i, "index", required=True, kind=int)
        a = cfg.get(*keys, "channels", i, "a", required=True, kind=float)
        b = cfg.get(*keys, "channels", i, "b_per_mw", required=True, kind=float)
        if idx in cal:
            raise cfg.error(f"duplicate channel {idx}", *keys, "channels", i)
        cal[idx] = (a, b)
    if cfg.get(*keys, "beta_rad_per_mm_ghz", required=True) == "auto":
        # solve beta so the envelope meets `threshold` at `detuning_ghz` from phase matching
        threshold = cfg.get(*keys, "beta_target", "threshold", default=0.40, kind=float)
        detuning = cfg.get(*keys, "beta_target", "detuning_ghz", required=True, kind=float)
        ref = peak if peak is not None else max((a for a, _ in cal.values()), default=None)
        if ref is None:
            raise cfg.error("auto beta needs envelope_peak or a calibrated channel", *keys)
        try:
            beta = calibrate_beta(length, ref, threshold, detuning)
        except ValueError as exc:
            raise cfg.error(str(exc), *keys, "beta_target") from None
    else:
        beta = cfg.get(*keys, "beta_rad_per_mm_ghz", kind=float)
    try:
        return ConversionDevice(length, pm, beta, cal, peak)
    except ValueError as exc:
        raise cfg.error(str(exc), *keys) from None


def plan_from_config(cfg: Config, *keys):
    try:
        return ChannelPlan(cfg.get(*keys, "base_ghz", required=True, kind=int),
                           cfg.get(*keys, "spacing_ghz", required=True, kind=int),
                           cfg.get(*keys, "count", required=True, kind=int),
                           cfg.get(*keys, "direction", default=1, kind=int))
    except ConfigError:
        raise
    except ValueError as exc:
        raise cfg.error(str(exc), *keys) from None


def pump_configs_from_config(cfg: Config, *keys):
    items = cfg.get(*keys, required=True)
    if not isinstance(items, list) or not items:
        raise cfg.error("expected a nonempty list", *keys)
    out = []
    for i in range(len(items)):
        try:
            out.append(PumpChannelConfig(
                cfg.get(*keys, i, "channel", required=True, kind=int),
                cfg.get(*keys, i, "frequency_ghz", required=True, kind=float),
                cfg.get(*keys, i, "steady_power_mw", required=True, kind=float),
                cfg.get(*keys, i, "rise_fall_us", default=0.5, kind=float)))
        except ConfigError as exc:
            if exc.line is not None:
                raise
            raise cfg.error(str(exc), *keys, i) from None
    return out


def format_float(x):
    """Shortest round-trip representation; stable across runs."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else format_float(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_events(path, events):
    write_csv(path, ("detector_id", "time_ps"), zip(events.detector_id, events.time_ps))


def write_waveform(path, waveform):
    header = ["t_us"] + [f"p_ch{ch}_mw" for ch in waveform.channels]
    rows = (
        (t, *waveform.power_mw[:, k]) for k, t in enumerate(waveform.times_us))
    write_csv(path, header, rows)


def write_schedule(path, rounds):
    rows = []
    for rnd in rounds:
        for pr in rnd.pairings:
            rows.append((rnd.round_index, pr.party_a, pr.pump_a, pr.midpoint, pr.converted_channel))
            rows.append((rnd.round_index, pr.party_b, pr.pump_b, pr.midpoint, pr.converted_channel))
    write_csv(path, ("round", "party", "pump_channel", "midpoint", "converted_channel"), rows)
