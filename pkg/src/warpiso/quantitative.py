"""Isoperimetric profile over slabs, Fraenkel asymmetry, defect and exponent fits.

All defects are assembled from perimeter excesses (perimeter minus the
matching multiple of the smallest slice area), so gaps of 1e-50 relative to
perimeters of order 10 remain meaningful.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .errors import ConfigError, ContractViolation
from .geometry import (
    SlabRegion,
    WarpedProduct,
    arc_integral,
    slab_perimeter_excess,
    slab_volume,
    solve_volume_endpoint,
    symmetric_difference,
    symmetric_difference_arcs,
)
from .graph import (
    GraphPerturbation,
    basis_for,
    graph_area_excess,
    graph_slab_symmetric_difference,
    graph_volume,
    project_to_volume,
    random_perturbation,
)
from .profiles import FlatBumpProfile
from .reduction import decade_slopes, loglog_fit
from .spectral import SpectralReport, classify_minimizer, constrained_spectrum

GRID_POINTS = 512
VALUE_TOL = 1e-10
VOLUME_TOL = 1e-9
ASYM_ZERO = 1e-12
DEFECT_FLOOR = -1e-10


@dataclass(frozen=True)
class MinimizerSet:
    """Perimeter minimizers among single-arc slabs of volume V0.

    For a continuum (constant warp) ``regions`` holds one representative and
    every translate of it is a minimizer.
    """

    V0: float
    value: float
    value_excess: float  # value - 2 * sigma * min(phi)^{n-1}
    regions: tuple[SlabRegion, ...]
    continuum: bool = False
    half_volume: bool = True

    @property
    def label(self) -> str:
        return "isoperimetric profile" if self.half_volume else "slab-class profile"

    @property
    def width(self) -> float:
        a, b = self.regions[0].arcs[0]
        return b - a

    def min_separation(self, M: WarpedProduct) -> float:
        """Smallest volume of symmetric difference between two distinct minimizers."""
        if self.continuum or len(self.regions) < 2:
            return math.inf
        return min(symmetric_difference(M, E, F)
                   for i, E in enumerate(self.regions) for F in self.regions[i + 1:])

    def to_dict(self) -> dict:
        return {
            "V0": self.V0,
            "value": self.value,
            "value_excess": self.value_excess,
            "continuum": self.continuum,
            "label": self.label,
            "regions": [r.to_dict() for r in self.regions],
        }


def _endpoint_map(M: WarpedProduct, V0: float):
    """Piecewise-linear approximation t -> b(t) from the tabulated volume primitive."""
    edges, cum = M.primitive.table()
    L, per = M.period, M.primitive.per_period
    ex = np.concatenate([edges, edges[1:] + L, edges[1:] + 2 * L])
    cx = np.concatenate([cum, cum[1:] + per, cum[1:] + 2 * per])
    target = V0 / M.sphere_area

    def approx(t):
        t = np.asarray(t, dtype=float)
        q = np.floor(t / L)
        s = t - q * L
        return np.interp(np.interp(s, ex, cx) + target, cx, ex) + q * L

    return approx


def isoperimetric_profile(M: WarpedProduct, V0: float, grid: int = GRID_POINTS) -> MinimizerSet:
    """Minimise slab perimeter over single-arc slabs of volume V0.

    The perimeter of (t, b(t)) has derivative proportional to
    g(t) = phi'(t)/phi(t) + phi'(b)/phi(b). Local minima are located as
    sign changes of g from - to + on a ``grid``-point multistart grid and refined
    by bisection; if g vanishes identically on an interval (a minimum flat
    to all orders) the midpoint of that interval is taken.
    """
    Vtot = M.total_volume
    if not 0.0 < V0 < Vtot:
        raise ConfigError(f"V0 must lie in (0, {Vtot!r}), got {V0!r}")
    prof, L = M.profile, M.period
    approx_b = _endpoint_map(M, V0)
    sig = M.sphere_area
    half = abs(V0 - 0.5 * Vtot) <= 1e-12 * Vtot

    def b_of(t):
        return solve_volume_endpoint(M, t, V0, guess=float(approx_b(t)))

    def g_exact(t):
        b = b_of(t)
        phi, d1, _ = prof.evaluate(np.array([t, b]))
        return float(d1[0] / phi[0] + d1[1] / phi[1])

    ts = _multistart_grid(M, V0, grid)
    bs = approx_b(ts)
    phi_t, d1_t, _ = prof.evaluate(ts)
    phi_b, d1_b, _ = prof.evaluate(bs)
    g = d1_t / phi_t + d1_b / phi_b

    if np.all(g == 0.0):
        b0 = b_of(0.0)
        rep = SlabRegion.single(0.0, b0, L)
        ex = slab_perimeter_excess(M, rep)
        return MinimizerSet(V0, 2 * sig * prof.phi_min**M.p + ex, ex, (rep,), continuum=True,
                            half_volume=half)

    sgn = np.sign(g)
    nz = np.flatnonzero(sgn != 0)
    brackets = []
    for i, j in zip(nz, np.roll(nz, -1)):
        if sgn[i] < 0 and sgn[j] > 0:
            hi = ts[j] if j > i else ts[j] + L
            brackets.append((ts[i], hi))
    if not brackets:
        raise ConfigError("no interior minimum of slab perimeter found on the grid")

    step = L / grid
    candidates = []
    for lo, hi in brackets:
        for _ in range(4):
            glo, ghi = g_exact(lo), g_exact(hi)
            if glo < 0 < ghi:
                break
            if glo >= 0:
                lo -= step
            if ghi <= 0:
                hi += step
        else:
            continue
        # bisection: minima of high order make g vanish to high order too, which stalls Brent
        t = optimize.bisect(g_exact, lo, hi, xtol=1e-13, maxiter=200)
        if g_exact(t) == 0.0:
            t = _plateau_midpoint(g_exact, lo, t, hi)
        candidates.append(t % L)

    regions, excesses = [], []
    for t in candidates:
        E = SlabRegion.single(t, b_of(t), L)
        regions.append(E)
        excesses.append(slab_perimeter_excess(M, E))
    best = min(excesses)
    chosen = []
    for E, ex in sorted(zip(regions, excesses), key=lambda z: z[0].arcs[0][0]):
        if ex - best > VALUE_TOL:
            continue
        a = E.arcs[0][0]
        if any(min(abs(a - F.arcs[0][0]), L - abs(a - F.arcs[0][0])) < 1e-8 for F, _ in chosen):
            continue
        chosen.append((E, ex))
    value = 2 * sig * prof.phi_min**M.p + best
    return MinimizerSet(V0, value, best, tuple(E for E, _ in chosen), half_volume=half)


def _multistart_grid(M: WarpedProduct, V0: float, grid: int) -> np.ndarray:
    """Uniform grid on one period, refined where either endpoint meets a minimum of the warp.

    Narrow bumps (FlatBump with large k) can fall between uniform grid points.
    """
    L = M.period
    h = L / grid
    pts = [np.arange(grid) * h]
    mins = np.asarray(M.profile.minima, dtype=float)
    if mins.size:
        local = np.linspace(-2 * h, 2 * h, 129)
        back = _endpoint_map(M, M.total_volume - V0)
        for m in mins:
            pts.append(m + local)
            pts.append(float(back(m)) - L + local)
    return np.unique(np.concatenate(pts) % L)


def _plateau_midpoint(g, lo, mid, hi, tol=1e-13):
    """Midpoint of the interval around ``mid`` where g == 0 exactly (g(lo) < 0 < g(hi))."""
    a, b = lo, mid
    while b - a > tol:
        c = 0.5 * (a + b)
        a, b = (c, b) if g(c) < 0 else (a, c)
    left = b
    a, b = mid, hi
    while b - a > tol:
        c = 0.5 * (a + b)
        a, b = (a, c) if g(c) > 0 else (c, b)
    return 0.5 * (left + a)


def region_volume(M: WarpedProduct, E) -> float:
    if isinstance(E, GraphPerturbation):
        return graph_volume(M, E)
    return slab_volume(M, E)


def _check_volume(M: WarpedProduct, E, V0: float):
    V = region_volume(M, E)
    if abs(V - V0) > VOLUME_TOL:
        raise ConfigError(f"volume mismatch: |E| = {V!r}, expected {V0!r} +- {VOLUME_TOL}")


def _near(u: GraphPerturbation, S: SlabRegion) -> bool:
    if len(S.arcs) != 1:
        return False
    L = u.period
    a2, b2 = S.arcs[0]
    sh = round((u.a - a2) / L) * L
    tol = 0.25 * (u.b - u.a)
    return abs(a2 + sh - u.a) < tol and abs(b2 + sh - u.b) < tol


def _graph_far_difference(M: WarpedProduct, u: GraphPerturbation, S: SlabRegion) -> float:
    """|E_u delta S| node by node for slabs far from the graph's base."""
    hb = basis_for(u)
    ra = u.a + hb.B @ u.coeffs_a
    rb = u.b + hb.B @ u.coeffs_b
    tot = 0.0
    for w, x, y in zip(hb.grid.weights, ra, rb):
        pieces = symmetric_difference_arcs(SlabRegion.single(x, y, u.period), S)
        tot += w * sum(arc_integral(M, p, q) for p, q in pieces)
    return float(tot)


def distance_to(M: WarpedProduct, E, S: SlabRegion) -> float:
    """Volume of E delta S for a slab region or graph region E."""
    if isinstance(E, GraphPerturbation):
        if _near(E, S):
            return graph_slab_symmetric_difference(M, E, S)
        return _graph_far_difference(M, E, S)
    return symmetric_difference(M, E, S)


def _continuum_distance(M: WarpedProduct, E, mins: MinimizerSet) -> float:
    rep = mins.regions[0]
    a0, b0 = rep.arcs[0]
    L = M.period

    def f(s):
        return distance_to(M, E, rep.shifted(s))

    if isinstance(E, GraphPerturbation):
        hb = basis_for(E)
        sup = max(np.max(np.abs(hb.B @ E.coeffs_a)), np.max(np.abs(hb.B @ E.coeffs_b)))
        centre = E.a - a0
        lo, hi = centre - 2 * sup - 1e-9, centre + 2 * sup + 1e-9
        shifts = list(np.linspace(lo, hi, 33))
    else:
        shifts = list(np.arange(256) * (L / 256))
        for x in E.endpoints:
            shifts += [x - a0, x - b0]
        lo, hi = 0.0, L
    vals = [f(s) for s in shifts]
    best = min(vals)
    order = np.argsort(vals)[:3]
    h = (hi - lo) / max(len(shifts) - 1, 1)
    for i in order:
        s = shifts[i]
        res = optimize.minimize_scalar(f, bounds=(s - h, s + h), method="bounded",
                                       options={"xatol": 1e-11})
        best = min(best, float(res.fun))
    return best


def default_locality(M: WarpedProduct, mins: MinimizerSet) -> float:
    """A quarter of the smallest distance between distinct minimizers."""
    return 0.25 * mins.min_separation(M)


def asymmetry(M: WarpedProduct, E, mins: MinimizerSet, locality: float | None = None,
              reference: SlabRegion | None = None) -> float:
    """Fraenkel asymmetry of E relative to the minimizer set.

    Without ``reference`` this is the infimum over all minimizers. With a
    reference minimizer only minimizers within ``locality`` (default: a quarter
    of the minimal separation) of it are used, which is the local asymmetry.
    """
    _check_volume(M, E, mins.V0)
    if mins.continuum:
        return _continuum_distance(M, E, mins)
    pool = list(mins.regions)
    if reference is not None:
        delta = default_locality(M, mins) if locality is None else locality
        pool = [S for S in pool if symmetric_difference(M, S, reference) <= delta]
        if not pool:
            raise ConfigError("no minimizer within the locality radius of the reference")
    return min(distance_to(M, E, S) for S in pool)


def _cyclic_gap(x: float, y: float, L: float) -> float:
    d = (x - y) % L
    return min(d, L - d)


def _endpoint_pairing(xs, mins: MinimizerSet, L: float):
    """Endpoints of the minimizer best matched one-to-one with ``xs`` (nearest neighbours), or None."""
    best, best_cost = None, math.inf
    for S in mins.regions:
        ys = S.endpoints
        if len(ys) != len(xs):
            continue
        match = [min(ys, key=lambda y: _cyclic_gap(x, y, L)) for x in xs]
        if len(set(match)) != len(match):
            continue
        cost = sum(_cyclic_gap(x, y, L) for x, y in zip(xs, match))
        if cost < best_cost:
            best, best_cost = match, cost
    return best


def defect(M: WarpedProduct, E, mins: MinimizerSet) -> float:
    """Perimeter of E minus the profile value; raises ContractViolation if clearly negative.

    Boundary sheets of E are paired with the nearest sheets of a minimizer and
    the slice-area differences are summed pair by pair, so a gap of 1e-50 next
    to a slice area of order one is not lost to cancellation.
    """
    _check_volume(M, E, mins.V0)
    graph = isinstance(E, GraphPerturbation)
    xs = [E.a, E.b] if graph else E.endpoints
    extra = graph_area_excess(M, E) if graph else 0.0
    prof, p, sig = M.profile, M.p, M.sphere_area
    match = None if mins.continuum else _endpoint_pairing(xs, mins, M.period)
    if match is not None:
        d = sig * float(np.sum(prof.power_excess(np.array(xs), p) - prof.power_excess(np.array(match), p)))
    else:
        d = (sig * float(np.sum(prof.power_excess(np.array(xs), p))) - mins.value_excess
             + (len(xs) - 2) * sig * prof.phi_min**p)
    d += extra
    if d < DEFECT_FLOOR:
        raise ContractViolation(f"negative isoperimetric defect {d:.3e}: profile value is not minimal")
    return float(d)


class QValue(NamedTuple):
    value: float
    flag: str  # "ratio" | "infinite" | "minimizer"


def q_functional(M: WarpedProduct, E, gamma: float, mins: MinimizerSet,
                 locality: float | None = None, reference: SlabRegion | None = None) -> QValue:
    """defect / asymmetry^(2 + gamma), with explicit conventions for vanishing asymmetry."""
    d = defect(M, E, mins)
    alpha = asymmetry(M, E, mins, locality, reference)
    if alpha > ASYM_ZERO:
        return QValue(d / alpha ** (2.0 + gamma), "ratio")
    if d > 0:
        return QValue(math.inf, "infinite")
    return QValue(0.0, "minimizer")


def sliding_family(M: WarpedProduct, slab: SlabRegion) -> Callable[[float], SlabRegion]:
    """delta -> slab whose left boundary moved by delta, right boundary re-solved to keep volume."""
    if len(slab.arcs) != 1:
        raise ConfigError("sliding family needs a single-arc slab")
    a0, b0 = slab.arcs[0]
    V0 = slab_volume(M, slab)
    pa = M.density(a0)

    def member(delta: float) -> SlabRegion:
        guess = b0 + delta * pa / M.density(b0)
        b = solve_volume_endpoint(M, a0 + delta, V0, guess=guess)
        return SlabRegion.single(a0 + delta, b, M.period)

    return member


def default_deltas(lo: float = 1e-3, hi: float = 1e-1, per_decade: int = 16) -> np.ndarray:
    count = int(round(np.log10(hi / lo) * per_decade)) + 1
    return np.geomspace(lo, hi, count)


@dataclass
class ExponentFit:
    """Log-log fit of defect against asymmetry along a one-parameter family."""

    deltas: list
    alphas: list
    defects: list
    slope: float
    intercept: float
    max_residual: float
    decade_range: tuple
    decade_slopes: list = field(default_factory=list)
    excluded: list = field(default_factory=list)

    @property
    def gamma(self) -> float:
        return self.slope - 2.0

    def to_dict(self) -> dict:
        return {
            "deltas": self.deltas, "alphas": self.alphas, "defects": self.defects,
            "slope": self.slope, "gamma": self.gamma, "intercept": self.intercept,
            "max_residual": self.max_residual, "decade_range": list(self.decade_range),
            "decade_slopes": self.decade_slopes, "excluded": self.excluded,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "alpha", "defect", "log_alpha", "log_defect"])
        for d, a, p in zip(self.deltas, self.alphas, self.defects):
            w.writerow([repr(d), repr(a), repr(p), repr(math.log(a)), repr(math.log(p))])
        return buf.getvalue()


def fit_exponent(M: WarpedProduct, family: Callable[[float], object], mins: MinimizerSet,
                 deltas: Sequence[float] | None = None) -> ExponentFit:
    """Sample (asymmetry, defect) along ``family`` and regress log defect on log asymmetry.

    Samples with vanishing defect or asymmetry are excluded and listed. Slopes
    are also reported per decade of delta, since a flat minimum has no single
    exponent.
    """
    deltas = default_deltas() if deltas is None else np.asarray(deltas, dtype=float)
    ds, als, defs, excluded = [], [], [], []
    for delta in deltas:
        E = family(float(delta))
        a = asymmetry(M, E, mins)
        d = defect(M, E, mins)
        if a > ASYM_ZERO and d > 0:
            ds.append(float(delta))
            als.append(float(a))
            defs.append(float(d))
        else:
            excluded.append({"delta": float(delta), "alpha": float(a), "defect": float(d)})
    if len(ds) < 2:
        raise ConfigError("fewer than two non-degenerate samples along the family")
    slope, icpt, resid = loglog_fit(als, defs)
    per = []
    for dec in decade_slopes(ds, defs):
        sel = [(a, p) for x, a, p in zip(ds, als, defs) if dec["lo"] * (1 - 1e-9) <= x <= dec["hi"] * (1 + 1e-9)]
        s, _, r = loglog_fit([a for a, _ in sel], [p for _, p in sel])
        per.append({"delta_lo": dec["lo"], "delta_hi": dec["hi"], "slope": s, "max_residual": r})
    return ExponentFit(ds, als, defs, slope, icpt, resid, (min(ds), max(ds)), per, excluded)


@dataclass
class FugledeResult:
    min_ratio: float
    ratios: np.ndarray
    skipped: int
    classification: str
    lambda1: float

    def to_dict(self) -> dict:
        return {
            "min_ratio": self.min_ratio, "trials": int(self.ratios.size + self.skipped),
            "skipped": self.skipped, "classification": self.classification,
            "lambda1": self.lambda1,
            "ratio_quantiles": np.quantile(self.ratios, [0.0, 0.25, 0.5, 0.75, 1.0]).tolist(),
        }


def fuglede_verify(M: WarpedProduct, slab: SlabRegion, trials: int, cap: float,
                   rng: np.random.Generator, N: int | None = None,
                   report: SpectralReport | None = None, map_fn=map) -> FugledeResult:
    """Empirical constant in defect >= C0 |E delta slab|^2 over random graph perturbations.

    Perturbations are volume corrected; their defect is measured against the
    slab's own perimeter. The slab must be strictly stable. All random draws
    happen up front, so evaluating through a parallel ``map_fn`` gives the same
    result as the serial default.
    """
    report = constrained_spectrum(M, slab) if report is None else report
    cls = classify_minimizer(report)
    if cls.kind != "StrictlyStable":
        raise ConfigError(f"slab is {cls.kind}, not strictly stable")
    a, b = slab.arcs[0]
    V0 = slab_volume(M, slab)
    draws = [random_perturbation(M, a, b, rng, cap, N) for _ in range(trials)]

    def evaluate(u):
        u = project_to_volume(M, u, V0)
        sd = graph_slab_symmetric_difference(M, u, slab)
        if sd <= ASYM_ZERO:
            return None
        return graph_area_excess(M, u) / sd**2

    out = list(map_fn(evaluate, draws))
    ratios = np.array([r for r in out if r is not None])
    skipped = len(out) - ratios.size
    mn = float(np.min(ratios))
    if not mn > 0:
        raise ContractViolation(f"non-positive defect ratio {mn:.3e} at a strictly stable slab")
    return FugledeResult(mn, ratios, skipped, cls.kind, cls.lambda1)


def pure_mode_perturbation(M: WarpedProduct, slab: SlabRegion, degree: int, sheet: str,
                           amplitude: float, N: int | None = None) -> GraphPerturbation:
    """First basis function of the given degree on one sheet, scaled to sup-norm ``amplitude``."""
    a, b = slab.arcs[0]
    u0 = GraphPerturbation.zero(M, a, b, N)
    hb = basis_for(u0)
    j = int(np.flatnonzero(hb.degrees == degree)[0])
    c = np.zeros(2 * hb.size)
    c[j + (0 if sheet == "a" else hb.size)] = amplitude / np.max(np.abs(hb.B[:, j]))
    return u0.with_vector(c)


def pure_mode_prediction(M: WarpedProduct, report: SpectralReport, u: GraphPerturbation) -> float:
    """Second-order prediction of defect / |E delta slab|^2 for a single-mode perturbation.

    With u = t Y on a sheet at r0: defect ~ (t^2 / 2) phi^{n-1} mu_k ||Y||_2^2
    and |E delta slab| ~ t phi^{n-1} ||Y||_1, norms on the unit sphere.
    """
    hb = basis_for(u)
    # dominant mode: a volume correction adds a tiny degree-0 part to a pure mode
    size = np.sqrt(hb.norms2)
    amps = np.concatenate([np.abs(u.coeffs_a) * size, np.abs(u.coeffs_b) * size])
    if not np.any(amps > 0):
        raise ConfigError("perturbation is zero")
    i = int(np.argmax(amps))
    sheet, r0 = ("a", u.a) if i < hb.size else ("b", u.b)
    j = i % hb.size
    k = int(hb.degrees[j])
    mu = report.eigenvalues(sheet)[k]
    w = M.density(r0)
    l1 = float(np.dot(hb.grid.weights, np.abs(hb.B[:, j])))
    return 0.5 * mu * hb.norms2[j] / (w * l1**2)


def uniqueness_scan(n: int, ks: Sequence[float], R: float = 10.0) -> list[dict]:
    """For each bump parameter k, check that the half-volume minimizers are one slab and its complement."""
    out = []
    for k in ks:
        M = WarpedProduct(n, FlatBumpProfile(R=R, k=float(k)))
        mins = isoperimetric_profile(M, 0.5 * M.total_volume)
        pair = (len(mins.regions) == 2
                and symmetric_difference(M, mins.regions[0].complement(), mins.regions[1]) < 1e-8)
        out.append({"k": float(k), "minimizers": len(mins.regions), "unique_pair": bool(pair),
                    "value": mins.value})
    return out
