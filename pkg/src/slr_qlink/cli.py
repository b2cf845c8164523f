"""Command-line front end.

Exit codes: 0 success (for ``analyze``: a persistent centered peak was found),
2 ``analyze`` found no such peak, 1 input or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .analysis import (
    AnalysisError,
    analyze_stream,
    estimate_signal_rate_and_mu,
    histogram_csv,
    build_histogram,
    peak_report_text,
    scan_csv,
    scan_summary_text,
)
from .ephemeris import EphemerisError, read_ephemeris, write_ephemeris
from .link_budget import (
    LinkBudgetError,
    budget_csv,
    budget_rows,
    budget_table,
    find_profile,
    load_catalog,
    total_attenuation_db,
)
from .timetag_sim import simulate_pass
from .timetags import TimeTagError, read_timetags, write_timetags

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_PEAK = 2

BUDGET_FILE = "budget.csv"
EPHEMERIS_FILE = "ephemeris.csv"
TIMETAG_FILE = "timetags.csv"
SIDECAR_FILE = "simulation.json"
ANALYSIS_FILE = "analysis.json"
PEAKS_FILE = "peaks.csv"
REPORT_FILE = "report.txt"


class CliError(Exception):
    pass


def _widths(text: str) -> list[float]:
    try:
        widths = [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad bin-width list: {text!r}") from None
    if not widths or any(w <= 0 for w in widths):
        raise argparse.ArgumentTypeError("bin widths must be positive")
    return widths


def _fmt_width(w: float) -> str:
    return f"{w:g}".replace(".", "p")


def _effective_config(args) -> dict:
    cfg = cfgmod.load_config(getattr(args, "config", None))
    cfgmod.override(cfg, "seed", getattr(args, "seed", None))
    cfgmod.override(cfg, "satellite", getattr(args, "satellite", None))
    cfgmod.override(cfg, "catalog", getattr(args, "catalog", None))
    cfgmod.override(cfg, "analysis.bin_widths", getattr(args, "bin_widths", None))
    cfgmod.override(cfg, "analysis.arc_length", getattr(args, "arc_length", None))
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- budget ------------------------------------------------------------------------


def cmd_budget(args) -> int:
    cfg = _effective_config(args)
    profiles = load_catalog(cfg["catalog"])
    if args.satellite:
        profiles = [find_profile(profiles, args.satellite)]
    rows = budget_rows(profiles)
    (_out_dir(args) / BUDGET_FILE).write_text(budget_csv(rows))
    sys.stdout.write(budget_table(rows))
    return EXIT_OK


# --- passgen -----------------------------------------------------------------------


def cmd_passgen(args) -> int:
    cfg = _effective_config(args)
    cfgmod.override(cfg, "orbit.altitude", args.altitude)
    cfgmod.override(cfg, "orbit.max_elevation", args.max_elevation)
    cfgmod.override(cfg, "orbit.pass_duration", args.pass_duration)
    cfgmod.override(cfg, "orbit.step", args.step)
    cfgmod.override(cfg, "perturbation.amplitude", args.perturbation)
    cfgmod.override(cfg, "perturbation.correlation_time", args.correlation_time)
    cfg["ephemeris_file"] = None
    eph = cfgmod.build_ephemeris(cfg)
    path = _out_dir(args) / EPHEMERIS_FILE
    write_ephemeris(eph, path)
    print(f"wrote {path} ({len(eph)} samples, min range {eph.ranges.min() / 1e3:.3f} km)")
    return EXIT_OK


# --- simulate ----------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _effective_config(args)
    cfgmod.override(cfg, "simulation.duration", args.duration)
    cfgmod.override(cfg, "simulation.p_det", args.p_det)
    cfgmod.override(cfg, "ephemeris_file", args.ephemeris)
    out = _out_dir(args)
    eph = cfgmod.build_ephemeris(cfg)
    sim_cfg = cfgmod.build_sim_config(cfg, eph)
    result = simulate_pass(sim_cfg)
    write_timetags(result.stream, out / TIMETAG_FILE)
    eph_path = out / EPHEMERIS_FILE
    if not (cfg["ephemeris_file"] and Path(cfg["ephemeris_file"]).resolve() == eph_path.resolve()):
        write_ephemeris(eph, eph_path)
    sidecar = {
        "effective_config": cfg,
        "seeds": {"master_seed": sim_cfg.master_seed, "perturbation_seed": int(cfg["seed"])},
        "detection_probability": sim_cfg.detection_probability,
        "summary": {
            "n_shots": result.n_shots,
            "n_signal": result.n_signal,
            "n_background": result.n_background,
            "n_dead_time_dropped": result.n_dead_time_dropped,
            "n_skipped_shots": result.n_skipped_shots,
            "n_detections": int(len(result.stream.detection_epochs)),
        },
    }
    (out / SIDECAR_FILE).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / TIMETAG_FILE}: {result.n_shots} fire tags, "
          f"{len(result.stream.detection_epochs)} detections")
    return EXIT_OK


# --- analyze -----------------------------------------------------------------------


def cmd_analyze(args) -> int:
    cfg = _effective_config(args)
    out = _out_dir(args)
    a = cfg["analysis"]
    stream = read_timetags(args.timetags)
    eph = read_ephemeris(args.ephemeris, int(cfg["orbit"]["interpolation_order"]))
    laser = cfgmod.profile_for(cfg).link.laser
    result = analyze_stream(
        stream, eph,
        widths=a["bin_widths"], headline_bin_width=float(a["headline_bin_width"]),
        span=float(a["span"]), window=float(a["window"]), arc_length=float(a["arc_length"]),
        exclusion_halfwidth_bins=int(a["exclusion_halfwidth_bins"]), min_sigma=float(a["min_sigma"]),
        repetition_rate=laser.repetition_rate,
    )
    best = result.best_arc
    scan = result.scans[best]
    headline = result.headline(best)
    estimate = estimate_signal_rate_and_mu(headline, result.arc_durations[best] or result.arc_length, laser,
                                           float(a["detector_loss_db"]), float(a["path_loss_db"]))

    for old in out.glob("hist_dt*ns.csv"):
        old.unlink()
    for w, _ in scan.entries:
        hist = build_histogram(result.arcs[best], w, float(a["span"]))
        (out / f"hist_dt{_fmt_width(w)}ns.csv").write_text(histogram_csv(hist))
    (out / PEAKS_FILE).write_text(scan_csv(result.scans))
    (out / "peak_report.txt").write_text(peak_report_text(headline))
    (out / "bin_scan.txt").write_text(scan_summary_text(scan))

    summary = {
        "verdict": "peak" if result.detected else "no_peak",
        "n_arcs": len(result.scans),
        "n_deviations": result.n_deviations,
        "arc_length_s": result.arc_length,
        "best_arc": best,
        "best_arc_start_s": (result.origin + best * round(result.arc_length * 1e12)) / 1e12,
        "headline_bin_width_ns": result.headline_bin_width,
        "significance": _json_float(headline.significance),
        "persistent": scan.persistent,
        "persistent_centered": scan.persistent_centered,
        "optimal_bin_ns": scan.optimal_bin,
        "scan": [[w, _json_float(s)] for w, s in scan.significances],
        "signal_rate_cps": estimate.rate,
        "p_det": estimate.p_det,
        "mu": estimate.mu,
        "below_background": estimate.below_background,
        "attenuation_db": _json_float(total_attenuation_db(estimate.rate, laser)),
    }
    (out / ANALYSIS_FILE).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{summary['verdict']}: arc {best}, {headline.significance:.2f} sigma at "
          f"{result.headline_bin_width:g} ns, optimal bin {scan.optimal_bin:g} ns")
    return EXIT_OK if result.detected else EXIT_NO_PEAK


def _json_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


# --- report ------------------------------------------------------------------------

REPORT_INPUTS = (BUDGET_FILE, SIDECAR_FILE, ANALYSIS_FILE, EPHEMERIS_FILE, PEAKS_FILE)


def cmd_report(args) -> int:
    run = Path(args.out)
    missing = [name for name in REPORT_INPUTS if not (run / name).is_file()]
    if missing:
        raise CliError(f"run directory {run} is missing: {', '.join(missing)}")
    sidecar = json.loads((run / SIDECAR_FILE).read_text())
    analysis = json.loads((run / ANALYSIS_FILE).read_text())
    satellite = sidecar["effective_config"]["satellite"]
    with open(run / BUDGET_FILE, newline="") as fh:
        rows = {r["name"].lower(): r for r in csv.DictReader(fh)}
    budget = rows.get(satellite.lower())
    if budget is None:
        raise CliError(f"{BUDGET_FILE} has no row for {satellite}")

    lines = [
        f"satellite = {satellite}",
        "[link budget]",
        f"expected_rate_cps = {float(budget['rate_cps']):.4g}",
        f"p_det = {float(budget['p_det']):.4g}",
        f"fluence_per_shot = {float(budget['fluence_per_shot']):.4g}",
        f"downlink_loss = {float(budget['downlink_loss']):.4g}",
        f"attenuation_db = {float(budget['attenuation_db']):.2f}",
        "[simulation]",
        f"master_seed = {sidecar['seeds']['master_seed']}",
        f"simulated_p_det = {sidecar['detection_probability']:.4g}",
    ]
    lines += [f"{k} = {v}" for k, v in sorted(sidecar["summary"].items())]
    lines += [
        "[analysis]",
        f"verdict = {analysis['verdict']}",
        f"arcs = {analysis['n_arcs']}",
        f"best_arc = {analysis['best_arc']}",
        f"significance = {_fmt_sig(analysis['significance'])}",
        f"persistent = {str(analysis['persistent']).lower()}",
        f"optimal_bin_ns = {analysis['optimal_bin_ns']:g}",
        f"measured_rate_cps = {analysis['signal_rate_cps']:.4g}",
        f"measured_p_det = {analysis['p_det']:.4g}",
        f"mu = {analysis['mu']:.4g}",
        f"measured_attenuation_db = {_fmt_sig(analysis['attenuation_db'], '.2f')}",
    ]
    report = "\n".join(lines) + "\n"
    (run / REPORT_FILE).write_text(report)
    _render_figures(run, analysis)
    sys.stdout.write(report)
    return EXIT_OK


def _fmt_sig(x, fmt: str = ".3f") -> str:
    return x if isinstance(x, str) else format(x, fmt)


def _render_figures(run: Path, analysis: dict) -> None:
    from . import plotting

    width = analysis["headline_bin_width_ns"]
    hist_path = run / f"hist_dt{_fmt_width(width)}ns.csv"
    if hist_path.is_file():
        data = np.loadtxt(hist_path, delimiter=",", skiprows=1, ndmin=2)
        with open(run / PEAKS_FILE, newline="") as fh:
            row = next(r for r in csv.DictReader(fh)
                       if int(r["arc"]) == analysis["best_arc"] and float(r["bin_width_ns"]) == width)
        plotting.plot_histogram(data[:, 0], data[:, 1], width, float(row["background_mean"]),
                                float(row["background_sigma"]), run / "fig_histogram.png",
                                title=f"arc {analysis['best_arc']}, bin {width:g} ns")
    scan = analysis["scan"]
    sig = [float(s) for _, s in scan]
    plotting.plot_bin_scan([w for w, _ in scan], sig, run / "fig_bin_scan.png")
    eph = read_ephemeris(run / EPHEMERIS_FILE)
    plotting.plot_range(eph.epochs / 1e12, eph.ranges, run / "fig_range.png")


# --- run (end to end) ---------------------------------------------------------------


def cmd_run(args) -> int:
    for step in (cmd_budget, cmd_simulate):
        step(args)
    args.timetags = str(Path(args.out) / TIMETAG_FILE)
    args.ephemeris = str(Path(args.out) / EPHEMERIS_FILE)
    status = cmd_analyze(args)
    cmd_report(args)
    return status


# --- parser ------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, *, analysis: bool = False) -> None:
    p.add_argument("--config", help="YAML/JSON config file (a simulation.json sidecar also works)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--satellite", help="satellite profile name")
    p.add_argument("--catalog", help="satellite catalog file (default: bundled catalog)")
    p.add_argument("--out", default="run", help="output directory (default: run)")
    if analysis:
        p.add_argument("--bin-widths", type=_widths, help="comma-separated bin widths in ns")
        p.add_argument("--arc-length", type=float, help="analysis arc length in s")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slr-qlink", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    b = sub.add_parser("budget", help="link budget table for the catalog")
    _common(b)
    b.set_defaults(func=cmd_budget)

    g = sub.add_parser("passgen", help="synthesize a pass and write the ephemeris CSV")
    _common(g)
    g.add_argument("--altitude", type=float, help="m")
    g.add_argument("--max-elevation", type=float, help="deg")
    g.add_argument("--pass-duration", type=float, help="s")
    g.add_argument("--step", type=float, help="sample interval, s")
    g.add_argument("--perturbation", type=float, help="range perturbation amplitude, ns one-way")
    g.add_argument("--correlation-time", type=float, help="perturbation correlation time, s")
    g.set_defaults(func=cmd_passgen)

    s = sub.add_parser("simulate", help="simulate the time-tag record of a pass")
    _common(s)
    s.add_argument("--duration", type=float, help="acquisition duration, s")
    s.add_argument("--p-det", type=float, help="per-shot detection probability (default: link budget)")
    s.add_argument("--ephemeris", help="use this ephemeris CSV instead of a synthetic pass")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="search time tags for the return peak")
    _common(a, analysis=True)
    a.add_argument("--timetags", required=True)
    a.add_argument("--ephemeris", required=True)
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("report", help="consolidated report and figures for a run directory")
    _common(r)
    r.set_defaults(func=cmd_report)

    e = sub.add_parser("run", help="budget, simulate, analyze and report in one go")
    _common(e, analysis=True)
    e.add_argument("--duration", type=float, help="acquisition duration, s")
    e.add_argument("--p-det", type=float, help="per-shot detection probability")
    e.add_argument("--ephemeris", default=None, help=argparse.SUPPRESS)
    e.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
    except (CliError, cfgmod.ConfigError, LinkBudgetError, EphemerisError, TimeTagError,
            AnalysisError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
