"""Turn experiment summaries into plain CSV files for external plotting tools."""

from __future__ import annotations

import json
import math
from pathlib import Path

from .errors import ConfigError

LOGLOG_KINDS = ("exponent", "counterexample")


def _family_label(summary: dict) -> str:
    m = summary.get("manifold", {})
    extra = ",".join(f"{k}={m[k]}" for k in ("k", "m", "eps") if k in m)
    return f"{m.get('family', '?')}(n={m.get('n', '?')}{',' + extra if extra else ''})"


def _log(x):
    return math.log(x) if x > 0 else float("nan")


def rows_for(summary: dict) -> tuple[list[str], list[list]]:
    """Header and rows of the plot table for one experiment summary."""
    kind = summary.get("kind")
    res = summary.get("results")
    if not isinstance(res, dict):
        raise ConfigError("summary has no results block")
    if kind == "exponent":
        xs, ys = res["alphas"], res["defects"]
    elif kind == "counterexample":
        xs, ys = res["data"]["alphas"], res["data"]["defects"]
    elif kind == "ls-reduce":
        red = res["reduction"]
        pairs = [(z, v) for z, v in zip(red["zetas"], red["values"])]
        return (["zeta", "reduced_minus_base", "log_zeta", "log_value"],
                [[z, v, _log(z), _log(v)] for z, v in pairs])
    else:
        raise ConfigError(f"no plot data defined for experiment kind {kind!r}")
    return (["alpha", "defect", "log_alpha", "log_defect"],
            [[x, y, _log(x), _log(y)] for x, y in zip(xs, ys)])


def load_summary(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not a valid summary file: {exc}") from exc


def emit_plot_data(paths) -> dict[str, tuple[list[str], list[list]]]:
    """Per-file tables plus, for several inputs, one long-format table with a family column."""
    tables = {}
    long_rows, long_header = [], None
    for p in paths:
        summary = load_summary(p)
        try:
            header, rows = rows_for(summary)
        except KeyError as exc:
            raise ConfigError(f"{p}: summary is missing field {exc.args[0]!r}") from exc
        tables[f"plot_{Path(p).stem}"] = (header, rows)
        if long_header is None:
            long_header = ["family", "kind", *header]
        if header == long_header[2:]:
            long_rows += [[_family_label(summary), summary["kind"], *r] for r in rows]
    if len(tables) > 1 and long_rows:
        tables["plot_long"] = (long_header, long_rows)
    return tables
