"""
Command-line entry point.

Exit codes: 0 success, 1 at least one trial failed (or a replay diverged),
2 configuration, layout or log-schema error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import ConfigError, LayoutValidationError, SchemaMismatchError
from ..layout import default_layout, load_layout
from ..mission import TrialResult
from ..sensors import CameraModel, Occlusions
from ..study import compare_bit_patterns, coverage_map, format_report, segment_means, survey_path
from .batch import run_batch, summarize
from .config import APPROACHES, config_from_dict, load_config
from .log import Trajectory, read_log, result_record, run_logged, verify_replay

EXIT_OK, EXIT_FAILURES, EXIT_CONFIG = 0, 1, 2


def _config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else config_from_dict({})
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "approach", None):
        changes["approach"] = args.approach
    return replace(cfg, **changes) if changes else cfg


def _out(args, default):
    out = Path(args.out) if args.out else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_steps_csv(records, path):
    traj = Trajectory.from_records(records)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "phase", "frame", "x", "y", "z", "yaw", "est_x", "est_y", "est_z", "est_yaw", "markers"])
        for k in range(len(traj)):
            w.writerow([repr(float(traj.t[k])), traj.phase[k], traj.frame[k],
                        *[repr(float(v)) for v in traj.truth_star[k]],
                        *[repr(float(v)) for v in traj.est[k]], int(traj.markers[k])])


def cmd_run(args):
    cfg = _config(args)
    out = _out(args, "runs")
    stem = f"{cfg.approach}-{cfg.seed:06d}"
    result, text = run_logged(cfg, cfg.seed)
    log_path = out / f"{stem}.jsonl"
    log_path.write_text(text)
    if args.format == "csv":
        _write_steps_csv(read_log(log_path), out / f"{stem}.csv")
    status = "success" if result.success else f"failed ({result.abort_reason})"
    dur = "-" if result.docking_duration is None else f"{result.docking_duration:.1f} s"
    print(f"{cfg.approach} seed {cfg.seed}: {status}, docking {dur}, log {log_path}")
    return EXIT_OK if result.success else EXIT_FAILURES


def cmd_batch(args):
    cfg = _config(args)
    approaches = tuple(args.approach_list.split(",")) if args.approach_list else (
        (args.approach,) if args.approach else APPROACHES)
    out = _out(args, "batch")
    summary = run_batch(cfg, approaches, args.n, cfg.seed, out, args.workers, args.format)
    print(summary.format())
    print(f"written to {out}")
    return EXIT_FAILURES if summary.failures else EXIT_OK


def _log_files(paths):
    files = []
    for p in map(Path, paths):
        files.extend(sorted(p.rglob("*.jsonl")) if p.is_dir() else [p])
    return files


def cmd_analyze(args):
    results = []
    for f in _log_files(args.logs):
        rec = result_record(read_log(f))
        if rec is not None:
            results.append(TrialResult.from_dict(rec))
    if not results:
        print("no trial results found", file=sys.stderr)
        return EXIT_CONFIG
    summary = summarize(results)
    print(summary.format())
    if args.out:
        out = _out(args, ".")
        if args.format == "csv":
            (out / "summary.csv").write_text(summary.to_csv())
        else:
            (out / "summary.jsonl").write_text(summary.to_jsonl())
    return EXIT_FAILURES if summary.failures else EXIT_OK


def cmd_layout_check(args):
    if args.layout:
        layout = load_layout(Path(args.layout))
    elif args.config:
        cfg = load_config(args.config)
        layout = load_layout(Path(cfg.layout)) if cfg.layout else default_layout()
    else:
        layout = default_layout()
    cam = CameraModel()
    poses, labels = survey_path(layout.geometry, stand_off=args.stand_off)
    counts = coverage_map(poses, layout, cam, Occlusions.for_layout(layout))
    front = [c for c, l in zip(counts, labels) if l == "front"]
    print(f"layout ok: {len(layout.tags)} tags, tag* id {layout.tag_star_id}, {len(layout.masks)} masks")
    print(f"max simultaneous detections {int(counts.max())} (front exit {max(front) if front else 0})")
    for lab, m in segment_means(counts, labels).items():
        print(f"  {lab:<6} mean {m:.2f}")
    if args.out:
        out = _out(args, ".")
        if args.format == "csv":
            with open(out / "coverage.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["sample", "segment", "x", "y", "count"])
                for k, (p, lab, c) in enumerate(zip(poses, labels, counts)):
                    w.writerow([k, lab, repr(float(p.position[0])), repr(float(p.position[1])), int(c)])
        else:
            with open(out / "coverage.jsonl", "w") as fh:
                for k, (lab, c) in enumerate(zip(labels, counts)):
                    fh.write(json.dumps({"sample": k, "segment": lab, "count": int(c)}, sort_keys=True) + "\n")
        from .plots import coverage_figure, save
        save(coverage_figure(counts, labels), out / "coverage.svg")
    return EXIT_OK


def cmd_bitpattern(args):
    results = compare_bit_patterns(sizes=tuple(args.sizes))
    print(format_report(results))
    if args.out:
        out = _out(args, ".")
        rows = [{"size_m": r.size, "bits": r.density, "max_range_m": r.max_range, "detection_rate": r.detection_rate,
                 "max_view_angle_rad": r.max_view_angle} for r in results]
        if args.format == "csv":
            with open(out / "bitpattern.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
                w.writeheader()
                w.writerows(rows)
        else:
            (out / "bitpattern.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
    return EXIT_OK


def cmd_replay(args):
    d = verify_replay(Path(args.log))
    print(f"replay divergence {d:g}")
    return EXIT_OK if d == 0.0 else EXIT_FAILURES


def cmd_plot(args):
    from .plots import emit_plots
    out = Path(args.out) if args.out else Path(args.log).parent
    for p in emit_plots(Path(args.log), out, args.plot_format):
        print(p)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="residock", description="Resident-ROV docking simulator and GNC tools")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, approach=True, fmt=True):
        p.add_argument("--config", help="scenario YAML")
        p.add_argument("--seed", type=int, help="trial seed (base seed for batch)")
        if approach:
            p.add_argument("--approach", choices=APPROACHES)
        p.add_argument("--out", help="output directory")
        if fmt:
            p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")

    p = sub.add_parser("run", help="run a single trial")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="Monte Carlo batch over approaches and seeds")
    common(p)
    p.add_argument("-n", "--n-seeds", dest="n", type=int, default=10)
    p.add_argument("--approaches", dest="approach_list", help="comma-separated subset of front,left,right")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_batch, format="csv")

    p = sub.add_parser("analyze", help="summarise trial logs")
    p.add_argument("logs", nargs="+", help="log files or directories")
    p.add_argument("--out")
    p.add_argument("--format", choices=("jsonl", "csv"), default="csv")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("layout-check", help="validate a marker layout and print its coverage map")
    common(p, approach=False)
    p.add_argument("--layout", help="layout YAML (defaults to the shipped layout)")
    p.add_argument("--stand-off", type=float, default=1.5)
    p.set_defaults(func=cmd_layout_check)

    p = sub.add_parser("bitpattern", help="compare marker bit densities")
    common(p, approach=False)
    p.add_argument("--sizes", type=float, nargs="+", default=[0.22])
    p.set_defaults(func=cmd_bitpattern)

    p = sub.add_parser("replay", help="re-run a logged trial and check it matches")
    p.add_argument("log")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("plot", help="render trajectory and marker-count figures from a log")
    p.add_argument("log")
    p.add_argument("--out")
    p.add_argument("--plot-format", choices=("svg", "png"), default="svg")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaMismatchError, LayoutValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
