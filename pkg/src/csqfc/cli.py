"""Scenario runner: ``csqfc <kind> --config <path> --out <dir> [--seed N]``.

Each kind reads one YAML config and writes plot-ready CSV tables plus a
``manifest.txt``. Exit codes: 0 success, 2 configuration error, 3 runtime
infeasibility, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ConfigError, DomainError, EstimateError, FitError, InfeasibleError,
                     MeasurementError)
from .fitting import fit_efficiency_curve
from .io import (Config, device_from_config, plan_from_config, pump_configs_from_config,
                 read_calibration, read_requests, read_schedule, write_csv, write_events,
                 write_schedule, write_waveform)
from .pump import (DEFAULT_DECAY_US, DEFAULT_OVERSHOOT, SwitchSchedule, instantaneous_efficiency,
                   measure_rise_fall, min_switch_interval, plateau_durations, render_waveform)
from .scheduler import (NetworkPlan, PartyLinkRequest, RateConstraint, duty_factor,
                        feasibility_report, schedule, validate_schedule)
from .spectral import (conversion_efficiency, envelope_efficiency, optimal_pump_power,
                       selectable_channel_count, usable_band)
from .stats import (DEFAULT_MU, HERALD_ID, ConverterSetup, CrosstalkMatrix, DetectorParams,
                    MatrixScenario,
                    SourceParams, accumulate_histogram, analytic_g, cross_corr_matrix,
                    estimate_cross_correlation, normalized_histogram, simulate_run)

KINDS = ("efficiency-sweep", "bandwidth-scan", "switching", "coincidence", "matrix",
         "schedule", "fit")
STOCHASTIC = {"coincidence", "matrix"}


def _arange(cfg, *keys, default):
    start = cfg.get(*keys, "start", default=default[0], kind=float)
    stop = cfg.get(*keys, "stop", default=default[1], kind=float)
    step = cfg.get(*keys, "step", default=default[2], kind=float)
    if step <= 0 or stop < start:
        raise cfg.error("need start <= stop and step > 0", *keys)
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


def run_efficiency_sweep(cfg, out, seed):
    powers = _arange(cfg, "power_mw", default=(0.0, 500.0, 0.1))
    chans = cfg.get("channels", required=True)
    labels, curves, rows = [], [], []
    for i in range(len(chans)):
        label = str(cfg.get("channels", i, "label", default=f"ch{i + 1}"))
        a = cfg.get("channels", i, "a", required=True, kind=float)
        b = cfg.get("channels", i, "b_per_mw", required=True, kind=float)
        if not (0 < a <= 1 and b > 0):
            raise cfg.error("need 0 < a <= 1 and b_per_mw > 0", "channels", i)
        eta = conversion_efficiency(a, b, powers)
        k = int(np.argmax(eta))
        labels.append(label)
        curves.append(eta)
        pump = cfg.get("channels", i, "pump_ghz", kind=float)
        p_star = optimal_pump_power(b)
        rows.append((label, "" if pump is None else pump,
                     a, b, p_star, conversion_efficiency(a, b, p_star), powers[k], eta[k]))
    write_csv(out / "efficiency_sweep.csv", ["pump_power_mw"] + [f"eta_{l}" for l in labels],
              ((p, *(c[j] for c in curves)) for j, p in enumerate(powers)))
    write_csv(out / "efficiency_maxima.csv",
              ("label", "pump_ghz", "a", "b_per_mw", "optimal_power_mw", "eta_max",
               "grid_argmax_mw", "grid_max"), rows)
    return ["efficiency_sweep.csv", "efficiency_maxima.csv"]


def run_bandwidth_scan(cfg, out, seed):
    device = device_from_config(cfg, "device")
    low = cfg.get("band", "low_ghz", required=True, kind=int)
    high = cfg.get("band", "high_ghz", required=True, kind=int)
    spacing = cfg.get("band", "spacing_ghz", default=25, kind=int)
    threshold = cfg.get("threshold", default=0.40, kind=float)
    n = selectable_channel_count(low, high, spacing)
    chan_rows = []
    for i in range(1, n + 1):
        f = low + (i - 1) * spacing
        env = envelope_efficiency(device, f)
        chan_rows.append((i, f, env, int(env >= threshold)))
    write_csv(out / "channels.csv", ("channel", "pump_ghz", "envelope_efficiency", "usable"),
              chan_rows)
    scan = _arange(cfg, "scan_ghz", default=(low - 1000.0, high + 1000.0, 25.0))
    write_csv(out / "envelope.csv", ("pump_ghz", "envelope_efficiency"),
              zip(scan, envelope_efficiency(device, scan)))
    band = usable_band(device, threshold)
    write_csv(out / "summary.csv", ("quantity", "value"), [
        ("beta_rad_per_mm_ghz", device.beta_rad_per_mm_ghz),
        ("envelope_peak", device.peak_efficiency),
        ("threshold", threshold),
        ("band_low_ghz", low), ("band_high_ghz", high), ("spacing_ghz", spacing),
        ("channel_count", n),
        ("min_envelope_in_band", min((r[2] for r in chan_rows), default=float("nan"))),
        ("all_channels_usable", int(all(r[3] for r in chan_rows))),
        ("threshold_band_low_ghz", band[0] if band else float("nan")),
        ("threshold_band_high_ghz", band[1] if band else float("nan")),
        ("threshold_band_channels",
         selectable_channel_count(band[0], band[1], spacing) if band else 0),
    ])
    return ["channels.csv", "envelope.csv", "summary.csv"]


def run_switching(cfg, out, seed):
    configs = pump_configs_from_config(cfg, "channels")
    horizon = cfg.get("horizon_us", kind=float)
    if cfg.get("schedule_file") is not None:
        path = Path(cfg.path).parent / cfg.get("schedule_file")
        sched = read_schedule(path, horizon)
    else:
        interval = cfg.get("interval_us", required=True, kind=float)
        if interval <= 0:
            raise cfg.error("interval must be positive", "interval_us")
        order = [c.channel for c in configs]
        sched = SwitchSchedule.alternating(order, interval, horizon or 4 * interval)
    overshoot = cfg.get("edfa", "overshoot", default=DEFAULT_OVERSHOOT, kind=float)
    decay = cfg.get("edfa", "decay_us", default=DEFAULT_DECAY_US, kind=float)
    wave = render_waveform(configs, sched, cfg.get("dt_us", kind=float), overshoot, decay)
    write_waveform(out / "waveform.csv", wave)
    files = ["waveform.csv"]

    # edges are measured on the shutter envelope, without the EDFA overshoot
    bare = render_waveform(configs, sched, wave.dt_us, 0.0, decay)
    rows = []
    for c in configs:
        try:
            rise, fall = measure_rise_fall(bare, c.channel)
        except MeasurementError:
            rise = fall = float("nan")
        plateaus = plateau_durations(bare, c.channel)
        rows.append((c.channel, c.rise_fall_us, rise, fall,
                     max(plateaus, default=0.0), sched.min_gap_us))
    write_csv(out / "edges.csv", ("channel", "configured_rise_fall_us", "rise_us", "fall_us",
                                  "longest_plateau_us", "schedule_min_gap_us"), rows)
    files.append("edges.csv")

    if cfg.get("device") is not None:
        device = device_from_config(cfg, "device")
        header = ["t_us"] + [f"eta_ch{c.channel}" for c in configs]
        effs = [instantaneous_efficiency(wave, c.channel, device, wave.times_us) for c in configs]
        write_csv(out / "efficiency.csv", header,
                  ((t, *(e[k] for e in effs)) for k, t in enumerate(wave.times_us)))
        files.append("efficiency.csv")
    write_csv(out / "switching_summary.csv", ("quantity", "value"),
              [("min_switch_interval_us", min_switch_interval(configs)),
               ("schedule_min_gap_us", sched.min_gap_us), ("dt_us", wave.dt_us)])
    files.append("switching_summary.csv")
    return files


def _photon_setup(cfg):
    source = SourceParams(
        cfg.get("source", "mu", default=DEFAULT_MU, kind=float),
        cfg.get("source", "herald_efficiency", default=1.0, kind=float),
        cfg.get("source", "signal_path_efficiency", default=1.0, kind=float),
        cfg.get("source", "window_ps", default=476.0, kind=float),
        cfg.get("source", "slot_ps", default=100.0, kind=float))
    detector = DetectorParams(
        cfg.get("detector", "efficiency", default=0.7, kind=float),
        cfg.get("detector", "dark_rate_hz", default=100.0, kind=float),
        cfg.get("detector", "jitter_ps", default=30.0, kind=float))
    device = device_from_config(cfg, "device")
    setup = ConverterSetup(cfg.get("signal_ghz", required=True, kind=int),
                           plan_from_config(cfg, "pump_plan"),
                           plan_from_config(cfg, "output_plan"), device)
    for k in range(1, setup.pump_plan.count + 1):
        if setup.output_channel(k) is None:
            raise cfg.error(f"pump channel {k} converts off the output grid", "signal_ghz")
    leak = cfg.get("crosstalk", "matrix")
    if leak is not None:
        crosstalk = CrosstalkMatrix(leak)
    elif cfg.get("crosstalk", "neighbor") is not None:
        crosstalk = CrosstalkMatrix.neighbor(setup.output_plan.count,
                                             cfg.get("crosstalk", "neighbor", kind=float))
    else:
        crosstalk = CrosstalkMatrix.identity(setup.output_plan.count)
    if cfg.get("n_windows") is not None:
        duration = source.duration_for_windows(cfg.get("n_windows", kind=float))
    else:
        duration = cfg.get("duration_s", required=True, kind=float)
    return source, detector, setup, crosstalk, duration


def run_coincidence(cfg, out, seed):
    source, detector, setup, crosstalk, duration = _photon_setup(cfg)
    pump = cfg.get("pump_channel", required=True, kind=int)
    noise = cfg.get("noise_rate_hz", default=0.0, kind=float)
    bin_ps = cfg.get("bin_width_ps", default=34.0, kind=float)
    span = cfg.get("span_ps", default=5000.0, kind=float)
    window = cfg.get("window_ps", default=476.0, kind=float)
    n_jobs = cfg.get("n_jobs", default=1, kind=int)
    events = simulate_run(source, detector, setup, pump, crosstalk, noise, duration, seed,
                          n_jobs=n_jobs)
    files = []
    if cfg.get("write_events", default=True, kind=bool):
        write_events(out / "events.csv", events)
        files.append("events.csv")
    ports = cfg.get("output_channels") or [setup.output_channel(pump)]
    rows = []
    for port in ports:
        hist = accumulate_histogram(events, HERALD_ID, int(port), bin_ps, span)
        norm = normalized_histogram(hist, window)
        name = f"histogram_ch{port}.csv"
        write_csv(out / name, ("delay_ps", "counts", "g_normalized"),
                  zip(hist.centers_ps, hist.counts, norm))
        files.append(name)
        try:
            cc = estimate_cross_correlation(hist, window)
            g, err, defined = cc.g, cc.std_err, 1
        except EstimateError:
            g, err, defined = float("nan"), float("nan"), 0
        eta = setup.efficiency(pump) * crosstalk.leak[int(port) - 1, setup.output_channel(pump) - 1]
        expect = analytic_g(source, (detector.dark_rate_hz, noise + detector.dark_rate_hz),
                            (source.herald_efficiency * detector.efficiency,
                             source.signal_path_efficiency * eta * detector.efficiency), window)
        rows.append((pump, port, g, err, defined, expect, hist.herald_singles,
                     hist.channel_singles))
    write_csv(out / "cross_correlation.csv",
              ("pump_channel", "output_channel", "g", "std_err", "defined", "analytic_g",
               "herald_singles", "channel_singles"), rows)
    files.append("cross_correlation.csv")
    return files


def run_matrix(cfg, out, seed):
    source, detector, setup, crosstalk, duration = _photon_setup(cfg)
    scenario = MatrixScenario(source, detector, setup, crosstalk,
                              cfg.get("noise_rate_hz", default=0.0, kind=float), duration,
                              cfg.get("bin_width_ps", default=34.0, kind=float),
                              cfg.get("span_ps", default=5000.0, kind=float),
                              cfg.get("window_ps", default=476.0, kind=float))
    m = cross_corr_matrix(scenario, seed, n_jobs=cfg.get("n_jobs", default=1, kind=int))
    header = ["pump_channel"] + [f"out_{j}" for j in m.output_channels]
    write_csv(out / "matrix_g.csv", header,
              ((p, *m.g[i]) for i, p in enumerate(m.pump_channels)))
    write_csv(out / "matrix_std_err.csv", header,
              ((p, *m.std_err[i]) for i, p in enumerate(m.pump_channels)))
    write_csv(out / "matrix_coincidences.csv", header,
              ((p, *m.coincidences[i]) for i, p in enumerate(m.pump_channels)))
    write_csv(out / "matrix_excess_z.csv", header,
              ((p, *z) for p, z in zip(m.pump_channels, m.excess_significance())))
    return ["matrix_g.csv", "matrix_std_err.csv", "matrix_coincidences.csv",
            "matrix_excess_z.csv"]


def run_schedule(cfg, out, seed):
    if cfg.get("requests_file") is not None:
        requests = read_requests(Path(cfg.path).parent / cfg.get("requests_file"))
    else:
        items = cfg.get("requests", default=[]) or []
        requests = []
        for i in range(len(items)):
            try:
                requests.append(PartyLinkRequest(
                    str(cfg.get("requests", i, "party_a", required=True)),
                    str(cfg.get("requests", i, "party_b", required=True)),
                    cfg.get("requests", i, "demand", default=1, kind=int)))
            except ConfigError as exc:
                if exc.line is None:
                    raise cfg.error(str(exc), "requests", i) from None
                raise
    outputs = plan_from_config(cfg, "channels")
    midpoints = cfg.get("midpoints", default=1, kind=int)
    if cfg.get("signal_ghz") is not None:
        try:
            plan = NetworkPlan.from_outputs(cfg.get("signal_ghz", kind=int), outputs, midpoints)
        except ValueError as exc:
            raise cfg.error(str(exc), "signal_ghz") from None
    else:
        plan = outputs
    constraint = None
    if cfg.get("constraint") is not None:
        try:
            constraint = RateConstraint(cfg.get("constraint", "tau_s_us", required=True, kind=float),
                                        cfg.get("constraint", "tau_c_us", required=True, kind=float),
                                        cfg.get("constraint", "round_period_us", required=True,
                                                kind=float))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise cfg.error(str(exc), "constraint") from None
    rounds = schedule(requests, plan, constraint, midpoints,
                      max_rounds=cfg.get("max_rounds", kind=int))
    problems = validate_schedule(rounds, requests, plan, midpoints)
    if problems:
        raise InfeasibleError("; ".join(problems))
    write_schedule(out / "schedule.csv", rounds)
    files = ["schedule.csv"]
    summary = [("rounds", len(rounds)), ("requests", len(requests))]
    if constraint is not None:
        summary += [("duty_factor", duty_factor(constraint.tau_c_us, constraint.tau_s_us)),
                    ("round_period_us", constraint.round_period_us)]
    if cfg.get("pump_bank") is not None and rounds:
        period = constraint.round_period_us if constraint else \
            cfg.get("round_period_us", required=True, kind=float)
        report = feasibility_report(rounds, pump_configs_from_config(cfg, "pump_bank"), period)
        write_csv(out / "feasibility.csv", ("party", "from_round", "to_round", "gap_us"),
                  report.violations)
        files.append("feasibility.csv")
        summary += [("min_switch_interval_us", report.min_interval_us),
                    ("switch_violations", len(report.violations))]
        summary += [(f"uses_channel_{c}", n) for c, n in report.channel_use.items()]
    write_csv(out / "schedule_summary.csv", ("quantity", "value"), summary)
    files.append("schedule_summary.csv")
    return files


def run_fit(cfg, out, seed):
    path = Path(cfg.path).parent / cfg.get("calibration_file", required=True)
    curves = read_calibration(path)
    rows = []
    for ch, curve in curves.items():
        try:
            a, b, rms = fit_efficiency_curve(curve)
        except FitError as exc:
            raise InfeasibleError(f"channel {ch}: {exc}") from None
        rows.append((ch, a, b, rms, optimal_pump_power(b), len(curve.power_mw)))
    write_csv(out / "fit.csv", ("pump_channel", "a", "b_per_mw", "rms_residual",
                                "optimal_power_mw", "samples"), rows)
    return ["fit.csv"]


RUNNERS = {
    "efficiency-sweep": run_efficiency_sweep,
    "bandwidth-scan": run_bandwidth_scan,
    "switching": run_switching,
    "coincidence": run_coincidence,
    "matrix": run_matrix,
    "schedule": run_schedule,
    "fit": run_fit,
}


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, kind, config_path, seed, files):
    lines = [
        f"tool: csqfc {__version__}",
        f"numpy: {np.__version__}",
        f"kind: {kind}",
        f"config: {Path(config_path).name}",
        f"config_sha256: {_digest(config_path)}",
        f"seed: {seed if seed is not None else 'none'}",
        "outputs:",
    ]
    lines += [f"  {name} sha256={_digest(out / name)}" for name in files]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def run(kind, config_path, out_dir, seed=None):
    """Run one scenario; returns the list of files written (manifest last)."""
    if kind not in RUNNERS:
        raise ConfigError(f"unknown scenario kind {kind!r}; expected one of {', '.join(KINDS)}")
    if not Path(config_path).is_file():
        raise ConfigError(f"config file {config_path} not found")
    cfg = Config.load(config_path)
    declared = cfg.get("kind")
    if declared is not None and declared != kind:
        raise cfg.error(f"config is for {declared!r}, not {kind!r}", "kind")
    if seed is None:
        seed = cfg.get("seed", kind=int)
    if kind in STOCHASTIC and seed is None:
        raise ConfigError(f"scenario {kind!r} requires a seed (--seed or 'seed:' in config)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = RUNNERS[kind](cfg, out, seed)
    write_manifest(out, kind, config_path, seed, files)
    return files + ["manifest.txt"]


def build_parser():
    p = argparse.ArgumentParser(prog="csqfc", description=__doc__.splitlines()[0])
    p.add_argument("kind", help=f"scenario kind: {', '.join(KINDS)}")
    p.add_argument("--config", required=True, help="scenario YAML file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="master seed for stochastic kinds")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        files = run(args.kind, args.config, args.out, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleError, FitError, MeasurementError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    for name in files:
        print(Path(args.out) / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
