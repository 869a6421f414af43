"""Experiment drivers: one function per CLI subcommand, each returning a summary and CSV tables."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import ConfigError
from .geometry import SlabRegion, WarpedProduct, slab_perimeter, slab_volume
from .graph import graph_area_excess, graph_slab_symmetric_difference, project_to_volume
from .quantitative import (
    MinimizerSet,
    asymmetry,
    default_deltas,
    defect,
    fit_exponent,
    fuglede_verify,
    isoperimetric_profile,
    pure_mode_perturbation,
    pure_mode_prediction,
    sliding_family,
)
from .reduction import default_zetas, reduced_function, transverse_coercivity_check
from .spectral import classify_minimizer, constrained_spectrum

log = logging.getLogger(__name__)

TARGETS = {
    "profile": "isoperimetric profile among slabs; half-volume minimizers bounded by minimal slices",
    "counterexample": "flat warp minimum: asymmetry^2 / defect diverges and no power of the "
                      "asymmetry bounds the defect",
    "spectrum": "Jacobi spectrum of the slab boundary: strict stability versus degeneracy",
    "ls-reduce": "reduced area on the Jacobi kernel: order of vanishing and transverse coercivity",
    "fuglede": "strict stability implies the quadratic defect-asymmetry inequality",
    "exponent": "sharp exponent 2 + gamma in defect >= C asymmetry^(2 + gamma)",
}


@dataclass
class ExperimentOutput:
    kind: str
    summary: dict
    tables: dict = field(default_factory=dict)  # file stem -> CSV text


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _finite(x):
    """JSON-safe float: infinities and NaN become strings."""
    x = float(x)
    return x if math.isfinite(x) else repr(x)


@contextmanager
def _mapper(threads: int):
    if threads <= 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield pool.map


def _half_volume(M: WarpedProduct, cfg: ExperimentConfig) -> float:
    return cfg.experiment.volume_fraction * M.total_volume


def _minimizers(M: WarpedProduct, cfg: ExperimentConfig) -> MinimizerSet:
    return isoperimetric_profile(M, _half_volume(M, cfg))


def _slab(M: WarpedProduct, cfg: ExperimentConfig, mins: MinimizerSet | None = None) -> SlabRegion:
    if cfg.experiment.slab is not None:
        a, b = cfg.experiment.slab
        return SlabRegion.single(a, b, M.period)
    mins = _minimizers(M, cfg) if mins is None else mins
    return mins.regions[0]


def run_profile(M, cfg, threads=1) -> ExperimentOutput:
    V0 = _half_volume(M, cfg)
    mins = isoperimetric_profile(M, V0)
    comp = isoperimetric_profile(M, M.total_volume - V0)
    rows = [(r.arcs[0][0], r.arcs[0][1], slab_perimeter(M, r), slab_volume(M, r)) for r in mins.regions]
    minima = M.profile.minima
    L = M.period

    def dist_to_minima(x):
        if not minima:
            return None
        return min(min(abs((x - m) % L), L - abs((x - m) % L)) for m in minima)

    summary = {
        "value": mins.value,
        "complement_value": comp.value,
        "complement_gap": abs(mins.value - comp.value),
        "label": mins.label,
        "continuum": mins.continuum,
        "minimizer_count": len(mins.regions),
        "minimizers": [list(r.arcs[0]) for r in mins.regions],
        "endpoint_distance_to_warp_minima": [
            [dist_to_minima(x) for x in r.arcs[0]] for r in mins.regions],
        "V0": V0,
    }
    return ExperimentOutput("profile", summary,
                            {"minimizers": _csv(["a", "b", "perimeter", "volume"], rows)})


def _deltas(cfg):
    g = cfg.experiment.deltas
    return default_deltas(g.lo, g.hi, g.per_decade)


def run_counterexample(M, cfg, threads=1) -> ExperimentOutput:
    mins = _minimizers(M, cfg)
    fam = sliding_family(M, _slab(M, cfg, mins))
    deltas = _deltas(cfg)
    gamma = cfg.experiment.gamma
    rows = []
    for d in deltas:
        E = fam(float(d))
        a, p = asymmetry(M, E, mins), defect(M, E, mins)
        rows.append((float(d), a, p, a**2 / p if p > 0 else math.inf,
                     a ** (2 + gamma) / p if p > 0 else math.inf))
    per = cfg.experiment.deltas.per_decade
    growth_sq = [rows[i][3] / rows[i + per][3] for i in range(len(rows) - per)]
    growth_g = [rows[i][4] / rows[i + per][4] for i in range(len(rows) - per)]
    fit = fit_exponent(M, fam, mins, deltas)
    slopes = [s["slope"] for s in fit.decade_slopes]
    summary = {
        "gamma": gamma,
        "min_growth_per_decade_sq": _finite(min(growth_sq)) if growth_sq else None,
        "min_growth_per_decade_gamma": _finite(min(growth_g)) if growth_g else None,
        "decade_slopes": fit.decade_slopes,
        "slope_per_decade_increasing": bool(all(x > y for x, y in zip(slopes, slopes[1:]))),
        "overall_slope": fit.slope,
        "data": {"deltas": fit.deltas, "alphas": fit.alphas, "defects": fit.defects},
    }
    table = _csv(["delta", "alpha", "defect", "alpha2_over_defect", "alpha_pow_over_defect"], rows)
    return ExperimentOutput("counterexample", summary, {"counterexample": table})


def run_spectrum(M, cfg, threads=1) -> ExperimentOutput:
    slab = _slab(M, cfg)
    rep = constrained_spectrum(M, slab, K=cfg.experiment.modes)
    cls = classify_minimizer(rep)
    summary = {"classification": cls.kind, "lambda1": cls.lambda1, "coercivity": cls.coercivity,
               "kernel": cls.kernel, "report": rep.to_dict()}
    return ExperimentOutput("spectrum", summary, {"spectrum": rep.to_csv()})


def run_ls_reduce(M, cfg, threads=1) -> ExperimentOutput:
    ex = cfg.experiment
    slab = _slab(M, cfg)
    rep = constrained_spectrum(M, slab, K=ex.modes)
    zetas = default_zetas(ex.zetas.lo, min(ex.zetas.hi, ex.zeta_max), ex.zetas.per_decade)
    res = reduced_function(M, slab, rep, zetas=zetas, N=ex.truncation)
    rng = np.random.default_rng(ex.seed)
    with _mapper(threads) as mp:
        coer = transverse_coercivity_check(M, slab, rep, rng, samples=ex.coercivity_samples,
                                           cap=ex.coercivity_cap, N=ex.truncation, map_fn=mp)
    summary = {
        "reduction": res.to_dict(),
        "coercivity_min_ratio": coer.min_ratio,
        "coercivity_samples": int(coer.ratios.size),
        "coercivity_skipped": coer.skipped,
        "transverse_coercivity_bound": 0.5 * rep.transverse_coercivity,
    }
    return ExperimentOutput("ls-reduce", summary, {"reduced": res.to_csv()})


def run_fuglede(M, cfg, threads=1) -> ExperimentOutput:
    ex = cfg.experiment
    slab = _slab(M, cfg)
    rep = constrained_spectrum(M, slab, K=ex.modes)
    rng = np.random.default_rng(ex.seed)
    with _mapper(threads) as mp:
        res = fuglede_verify(M, slab, ex.trials, ex.cap, rng, N=ex.truncation, report=rep, map_fn=mp)
    V0 = slab_volume(M, slab)
    rows = []
    for k in (1, 2, 3):
        for sheet in ("a", "b"):
            for amp in (1e-2, 1e-3):
                u = pure_mode_perturbation(M, slab, k, sheet, amp, ex.truncation)
                pred = pure_mode_prediction(M, rep, u)
                up = project_to_volume(M, u, V0)
                meas = graph_area_excess(M, up) / graph_slab_symmetric_difference(M, up, slab) ** 2
                rows.append((k, sheet, amp, pred, meas, abs(meas / pred - 1)))
    summary = {**res.to_dict(), "pure_mode_max_relative_error": max(r[-1] for r in rows)}
    table = _csv(["degree", "sheet", "amplitude", "predicted", "measured", "relative_error"], rows)
    return ExperimentOutput("fuglede", summary, {"pure_modes": table})


def run_exponent(M, cfg, threads=1) -> ExperimentOutput:
    mins = _minimizers(M, cfg)
    fit = fit_exponent(M, sliding_family(M, _slab(M, cfg, mins)), mins, _deltas(cfg))
    return ExperimentOutput("exponent", fit.to_dict(), {"exponent": fit.to_csv()})


RUNNERS = {
    "profile": run_profile,
    "counterexample": run_counterexample,
    "spectrum": run_spectrum,
    "ls-reduce": run_ls_reduce,
    "fuglede": run_fuglede,
    "exponent": run_exponent,
}


def run_experiment(kind: str, cfg: ExperimentConfig, threads: int = 1) -> ExperimentOutput:
    if cfg.experiment.kind is not None and cfg.experiment.kind != kind:
        raise ConfigError(f"experiment.kind: config is for {cfg.experiment.kind!r}, "
                          f"but subcommand {kind!r} was requested")
    M = cfg.manifold.build()
    log.info("running %s on %s", kind, M.to_dict())
    out = RUNNERS[kind](M, cfg, threads)
    out.summary = {
        "tool": "warpiso",
        "version": __version__,
        "kind": kind,
        "target": TARGETS[kind],
        "config_hash": cfg.digest(),
        "seed": cfg.experiment.seed,
        "manifold": M.to_dict(),
        "results": out.summary,
    }
    return out
