"""Command-line interface.

Subcommands::

    steincouplings bound    --config CFG   evaluate bounds, no sampling
    steincouplings simulate --config CFG   draw coupled samples, no checks
    steincouplings verify   --config CFG   full pipeline + check suite
    steincouplings sweep    --config CFG   parameter grid -> CSV summary
    steincouplings report   [--out DIR]    summarize stored run reports

Exit codes: 0 on success, 1 when any check fails, 2 on configuration
errors (bad flags, bad config file, invalid stored reports).  The output
directory is resolved as ``--out`` flag, then the STEINCOUPLINGS_OUT
environment variable, then the config's ``output.dir``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

from .errors import ConfigError
from .experiments import (ExperimentConfig, OUTPUT_DIR_ENV, compute_moments,
                          build_instance, draw_all, evaluate_bounds,
                          resolve_out_dir, run, run_sweep, sweep_rows_to_csv,
                          validate_report)

__all__ = ["main", "build_parser"]


def _add_common(parser: argparse.ArgumentParser, *, config_required=True,
                with_threads=False) -> None:
    if config_required:
        parser.add_argument("--config", required=True, metavar="PATH",
                            help="experiment config (TOML)")
    parser.add_argument("--seed", type=int, default=None, metavar="U64",
                        help="override experiment.seed")
    parser.add_argument("--reps", type=int, default=None, metavar="N",
                        help="override experiment.reps")
    if with_threads:
        parser.add_argument("--threads", type=int, default=None, metavar="N",
                            help="parallel replicate workers "
                                 "(default: available hardware threads)")
    parser.add_argument("--out", default=None, metavar="DIR",
                        help="output directory (overrides "
                             f"{OUTPUT_DIR_ENV} and output.dir)")
    parser.add_argument("--format", default=None, choices=("json", "csv"),
                        help="override output.format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steincouplings",
        description="Coupling-based normal approximation: samplers, "
                    "explicit bounds, and verification suites.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_bound = sub.add_parser(
        "bound", help="evaluate the bound formulas for a config (no sampling "
                      "beyond what moments need)")
    _add_common(p_bound)

    p_sim = sub.add_parser(
        "simulate", help="draw coupled samples and summarize them "
                         "(optionally spooling raw draws); runs no checks")
    _add_common(p_sim, with_threads=True)

    p_verify = sub.add_parser(
        "verify", help="run the full pipeline and check suite; exit 1 on "
                       "any failed check")
    _add_common(p_verify, with_threads=True)

    p_sweep = sub.add_parser(
        "sweep", help="expand the [sweep] table into a config grid and run "
                      "every point (errors contained per row)")
    _add_common(p_sweep, with_threads=True)

    p_report = sub.add_parser(
        "report", help="summarize stored run reports after validating them "
                       "against the shipped schema")
    p_report.add_argument("--out", default=None, metavar="DIR",
                          help="directory holding run reports (default: "
                               f"{OUTPUT_DIR_ENV} or 'runs')")
    p_report.add_argument("--format", default="json", choices=("json", "csv"),
                          help="stdout format (default json)")
    return parser


def _load_config(args) -> ExperimentConfig:
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError("--seed must fit an unsigned 64-bit integer")
    if args.reps is not None and args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    config = ExperimentConfig.from_toml(args.config)
    return config.override(seed=args.seed, reps=args.reps, fmt=args.format)


def _cmd_bound(args) -> int:
    config = _load_config(args)
    instance = build_instance(config)
    moments = compute_moments(config, instance)
    rows = [{"variant": variant, "smoothness": kind, **report.as_dict()}
            for variant, kind, report in
            evaluate_bounds(config, instance, moments)]
    if config.output_format == "csv":
        fields = ["variant", "smoothness", "bound", "vacuous",
                  "precondition_ok", "scaled_gap", "gap_bound",
                  "smoothing_constant", "sigma", "mu", "delta", "formula",
                  "precondition_text"]
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in fields})
        sys.stdout.write(buffer.getvalue())
    else:
        json.dump(rows, sys.stdout, sort_keys=True, indent=2)
        sys.stdout.write("\n")
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    out_dir = resolve_out_dir(config, args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays = draw_all(config, threads=args.threads)
    summary = {
        "experiment_id": config.experiment_id,
        "construction": config.construction,
        "seed": config.seed,
        "reps": config.reps,
        "replicates": config.replicates,
        "fields": {
            key: {"mean": float(values.mean()),
                  "min": float(values.min()),
                  "max": float(values.max())}
            for key, values in sorted(arrays.items())
        },
    }
    if config.spool:
        from .zero_bias import DRAW_FIELDS, write_spool
        spool_path = out_dir / f"{config.experiment_id}.spool.bin"
        count = write_spool(spool_path, {k: arrays[k] for k in DRAW_FIELDS})
        summary["spool"] = {"path": spool_path.name, "records": count}
    path = out_dir / f"{config.experiment_id}.draws.json"
    path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"wrote {path}")
    return 0


def _cmd_verify(args) -> int:
    config = _load_config(args)
    out_dir = resolve_out_dir(config, args.out)
    spool_path = (out_dir / f"{config.experiment_id}.spool.bin"
                  if config.spool else None)
    if spool_path is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    report = run(config, threads=args.threads, spool_path=spool_path)
    paths = report.write(out_dir)
    for check in report.checks:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}: observed {check['observed']} "
              f"{check['direction']} {check['threshold']}")
    print(f"wrote {paths[0]}")
    print(f"overall: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    out_dir = resolve_out_dir(config, args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports, rows = run_sweep(config, threads=args.threads)
    for report in reports:
        if report is not None:
            report.write(out_dir)
    csv_path = sweep_rows_to_csv(rows, out_dir / f"{config.experiment_id}.sweep.csv")
    for row in rows:
        status = "PASS" if row["passed"] else "FAIL"
        tail = f" ({row['error']})" if row["error"] else ""
        print(f"{status} {row['id']} [{row['parameters']}]{tail}")
    print(f"wrote {csv_path}")
    return 0 if all(row["passed"] for row in rows) else 1


def _cmd_report(args) -> int:
    out_dir = Path(args.out or os.environ.get(OUTPUT_DIR_ENV) or "runs")
    if not out_dir.is_dir():
        raise ConfigError(f"not a directory: {out_dir}")
    rows = []
    for path in sorted(out_dir.glob("*.json")):
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
        if path.name.endswith(".draws.json") or "experiment_id" not in document:
            continue  # not a run report (e.g. a draws summary)
        try:
            validate_report(document)
        except Exception as exc:
            raise ConfigError(f"{path} does not match the run-report "
                              f"schema: {exc}") from exc
        best = min((b["bound"] for b in document["bounds"]), default=None)
        distances = {d["metric"]: d["value"] for d in document["distances"]}
        rows.append({
            "experiment_id": document["experiment_id"],
            "construction": document["construction"],
            "seed": document["seed"],
            "reps": document["reps"],
            "sigma_hat": math.sqrt(document["moments"]["variance"]),
            "delta_half_line": distances.get("half-line"),
            "delta_interval": distances.get("interval"),
            "best_bound": best,
            "checks": len(document["checks"]),
            "passed": document["passed"],
        })
    if args.format == "csv":
        fields = ["experiment_id", "construction", "seed", "reps",
                  "sigma_hat", "delta_half_line", "delta_interval",
                  "best_bound", "checks", "passed"]
        writer = csv.DictWriter(sys.stdout, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    else:
        json.dump(rows, sys.stdout, sort_keys=True, indent=2)
        sys.stdout.write("\n")
    return 0


_COMMANDS = {
    "bound": _cmd_bound,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
