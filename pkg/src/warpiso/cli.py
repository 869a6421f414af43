"""Command-line entry point: ``warpiso <subcommand> --config run.yaml --out DIR``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import KINDS, load_config
from .errors import ConfigError, ContractViolation, SolverError, WarpIsoError
from .experiments import run_experiment
from .plotdata import emit_plot_data

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CONTRACT = 0, 2, 3, 4

log = logging.getLogger("warpiso")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory and rename over the target."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="warpiso",
        description="Quantitative isoperimetry experiments on warped products S^1 x S^{n-1}.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default: output.dir from the config)")
        p.add_argument("--verbose", "-v", action="count", default=0,
                       help="log progress (repeat for debug output)")

    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", type=Path, required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for random sweeps")
        common(p)

    p = sub.add_parser("plotdata", help="convert experiment summaries to plot-ready CSV")
    p.add_argument("inputs", nargs="+", type=Path, help="summary JSON files written by experiments")
    common(p)
    return parser


def _write_tables(out: Path, tables: dict) -> list[str]:
    written = []
    for stem, text in tables.items():
        target = out / f"{stem}.csv"
        write_atomic(target, text)
        written.append(str(target))
    return written


def _run(args) -> int:
    if args.command == "plotdata":
        out = args.out or Path(".")
        tables = {}
        for stem, (header, rows) in emit_plot_data(args.inputs).items():
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows([[repr(float(x)) if isinstance(x, float) else x for x in r] for r in rows])
            tables[stem] = buf.getvalue()
        for path in _write_tables(out, tables):
            print(path)
        return EXIT_OK

    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = cfg.model_copy(update={"experiment": cfg.experiment.model_copy(update={"seed": args.seed})})
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    out = args.out or Path(cfg.output.dir)
    result = run_experiment(args.command, cfg, threads=args.threads)
    stem = args.command.replace("-", "_")
    summary_path = out / f"{stem}.json"
    write_atomic(summary_path, json.dumps(_jsonable(result.summary), indent=2, sort_keys=True) + "\n")
    print(summary_path)
    for path in _write_tables(out, result.tables):
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (SolverError, WarpIsoError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
