"""Warped products S^1(R) x S^{n-1} and rotationally symmetric slab regions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize

from .errors import ConfigError, SolverError
from .profiles import WarpProfile, profile_from_dict
from .quadrature import adaptive_integral, sphere_area

__all__ = [
    "WarpedProduct",
    "SlabRegion",
    "VolumePrimitive",
    "slab_volume",
    "slab_perimeter",
    "slab_perimeter_excess",
    "slice_mean_curvature",
    "symmetric_difference",
    "symmetric_difference_arcs",
    "solve_volume_endpoint",
    "arc_integral",
]

MERGE_TOL = 1e-13


@dataclass(frozen=True)
class WarpedProduct:
    """The manifold S^1(R) x S^{n-1} with metric dr^2 + phi(r)^2 g_{S^{n-1}}."""

    n: int
    profile: WarpProfile

    def __post_init__(self):
        if int(self.n) != self.n or not 2 <= self.n <= 7:
            raise ConfigError(f"n: must be an integer in 2..7, got {self.n!r}")

    @property
    def R(self) -> float:
        return self.profile.R

    @property
    def period(self) -> float:
        return self.profile.period

    @property
    def p(self) -> int:
        """Exponent of the slice area element phi^{n-1}."""
        return self.n - 1

    @cached_property
    def sphere_area(self) -> float:
        return sphere_area(self.n - 1)

    def density(self, r):
        """Volume density phi(r)^{n-1} per unit area of the cross-section sphere."""
        return self.profile.phi(r) ** self.p

    def density_scalar(self, r: float) -> float:
        return self.profile.phi_scalar(r) ** self.p

    @cached_property
    def primitive(self) -> "VolumePrimitive":
        return VolumePrimitive(self)

    @cached_property
    def total_volume(self) -> float:
        return self.sphere_area * self.primitive.per_period

    def slice_area(self, r):
        return self.sphere_area * self.density(r)

    def to_dict(self) -> dict:
        return {"n": int(self.n), **self.profile.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "WarpedProduct":
        data = dict(data)
        try:
            n = data.pop("n")
        except KeyError as exc:
            raise ConfigError("n: required field missing") from exc
        return cls(n, profile_from_dict(data))


class VolumePrimitive:
    """Antiderivative Phi(r) = int_0^r phi^{n-1} dr built from adaptively integrated panels.

    Full panels are integrated once; evaluation adds one adaptive integral over a
    partial panel, so Phi is accurate to the adaptive tolerance and cheap to call
    repeatedly inside root finders.
    """

    def __init__(self, manifold: WarpedProduct, panels: int = 512):
        self.manifold = manifold
        L = manifold.period
        edges = set(np.linspace(0.0, L, panels + 1).tolist())
        for bp in manifold.profile.breakpoints():
            edges.add(float(bp % L))
        self.edges = np.array(sorted(edges))
        self.edges[-1] = L
        f = manifold.density_scalar
        pts = _lifted_breakpoints(manifold.profile, 0.0, L)
        vals = [adaptive_integral(f, lo, hi, points=pts)
                for lo, hi in zip(self.edges[:-1], self.edges[1:])]
        self.cum = np.concatenate([[0.0], np.cumsum(vals)])
        self.per_period = float(self.cum[-1])
        self.max_panel = float(np.max(np.diff(self.edges)))

    def __call__(self, r: float) -> float:
        L = self.manifold.period
        q = math.floor(r / L)
        s = r - q * L
        j = int(np.searchsorted(self.edges, s, side="right")) - 1
        j = min(max(j, 0), len(self.edges) - 2)
        lo = self.edges[j]
        part = adaptive_integral(self.manifold.density_scalar, lo, s,
                                 points=_lifted_breakpoints(self.manifold.profile, lo, s))
        return q * self.per_period + self.cum[j] + part

    def table(self):
        """Panel edges and Phi values there (for interpolation-based initial guesses)."""
        return self.edges.copy(), self.cum.copy()


def _lifted_breakpoints(profile: WarpProfile, a: float, b: float):
    bps = profile.breakpoints()
    if not bps:
        return None
    L = profile.period
    out = []
    for bp in bps:
        j0 = math.floor((min(a, b) - bp) / L)
        j1 = math.ceil((max(a, b) - bp) / L)
        out.extend(bp + j * L for j in range(j0, j1 + 1))
    return out


def arc_integral(M: WarpedProduct, a: float, b: float) -> float:
    """int_a^b phi^{n-1} dr (no sphere-area factor)."""
    if b - a <= M.primitive.max_panel:
        return adaptive_integral(M.density_scalar, a, b, points=_lifted_breakpoints(M.profile, a, b))
    return M.primitive(b) - M.primitive(a)


@dataclass(frozen=True)
class SlabRegion:
    """A union of disjoint arcs (a_i, b_i) times S^{n-1}; arcs live on a circle of length ``period``.

    Arcs are stored canonically: left endpoints in [0, period), right endpoint
    = left + length, sorted by left endpoint, overlapping or touching arcs merged.
    """

    arcs: tuple[tuple[float, float], ...]
    period: float

    @classmethod
    def from_arcs(cls, arcs, period: float) -> "SlabRegion":
        if not arcs:
            raise ConfigError("SlabRegion: at least one arc is required")
        pieces = []
        for a, b in arcs:
            a, b = float(a), float(b)
            if not (b > a):
                raise ConfigError(f"SlabRegion: arc ({a}, {b}) must have b > a")
            if b - a >= period:
                raise ConfigError(f"SlabRegion: arc ({a}, {b}) wraps the whole circle")
            a0 = a % period
            pieces.append((a0, a0 + (b - a)))
        merged = _merge_cyclic(pieces, period)
        total = sum(b - a for a, b in merged)
        if total >= period - MERGE_TOL:
            raise ConfigError("SlabRegion: arcs cover the whole circle")
        return cls(tuple(merged), period)

    @classmethod
    def single(cls, a: float, b: float, period: float) -> "SlabRegion":
        return cls.from_arcs([(a, b)], period)

    @property
    def endpoints(self) -> list[float]:
        return [x for arc in self.arcs for x in arc]

    @property
    def length(self) -> float:
        return sum(b - a for a, b in self.arcs)

    def shifted(self, s: float) -> "SlabRegion":
        return SlabRegion.from_arcs([(a + s, b + s) for a, b in self.arcs], self.period)

    def reflected(self, center: float) -> "SlabRegion":
        """Image under r -> 2*center - r."""
        return SlabRegion.from_arcs([(2 * center - b, 2 * center - a) for a, b in self.arcs],
                                    self.period)

    def complement(self) -> "SlabRegion":
        arcs = list(self.arcs)
        out = []
        for (a0, b0), (a1, _) in zip(arcs, arcs[1:] + [(arcs[0][0] + self.period, 0.0)]):
            out.append((b0, a1))
        return SlabRegion.from_arcs(out, self.period)

    def unwrapped(self) -> list[tuple[float, float]]:
        """Pieces inside [0, period) (arcs crossing the seam are split)."""
        L = self.period
        out = []
        for a, b in self.arcs:
            if b <= L:
                out.append((a, b))
            else:
                out.append((a, L))
                out.append((0.0, b - L))
        return sorted(out)

    def to_dict(self) -> dict:
        return {"arcs": [list(a) for a in self.arcs], "period": self.period}


def _merge_cyclic(pieces, period):
    pieces = sorted(pieces)
    merged = []
    for a, b in pieces:
        if merged and a <= merged[-1][1] + MERGE_TOL:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    # an arc running past the seam may overlap the first arc
    while len(merged) > 1 and merged[-1][1] - period >= merged[0][0] - MERGE_TOL:
        a, b = merged.pop()
        a0, b0 = merged.pop(0)
        merged.append((a, max(b, b0 + period)))
        merged.sort()
    return merged


def slab_volume(M: WarpedProduct, E: SlabRegion) -> float:
    """sigma_{n-1} * sum_i int_{a_i}^{b_i} phi^{n-1} dr."""
    return M.sphere_area * sum(arc_integral(M, a, b) for a, b in E.arcs)


def slab_perimeter(M: WarpedProduct, E: SlabRegion) -> float:
    """sigma_{n-1} * sum_i (phi(a_i)^{n-1} + phi(b_i)^{n-1})."""
    return float(M.sphere_area * np.sum(M.density(np.array(E.endpoints))))


def slab_perimeter_excess(M: WarpedProduct, E: SlabRegion) -> float:
    """Perimeter minus sigma * (#endpoints) * min(phi)^{n-1}, free of cancellation."""
    return float(M.sphere_area * np.sum(M.profile.power_excess(np.array(E.endpoints), M.p)))


def slice_mean_curvature(M: WarpedProduct, r0):
    """Mean curvature (n-1) phi'/phi of the slice {r0} x S^{n-1} with respect to d/dr."""
    phi, dphi, _ = M.profile.evaluate(r0)
    return (M.n - 1) * dphi / phi


def symmetric_difference_arcs(E: SlabRegion, F: SlabRegion) -> list[tuple[float, float]]:
    """Arc set of E delta F, as pieces inside [0, period)."""
    if abs(E.period - F.period) > 1e-12 * E.period:
        raise ConfigError("regions live on circles of different length")
    ue, uf = E.unwrapped(), F.unwrapped()
    cuts = sorted({0.0, E.period, *[x for p in ue + uf for x in p]})

    def inside(pieces, x):
        return any(a < x < b for a, b in pieces)

    out = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= MERGE_TOL:
            continue
        mid = 0.5 * (lo + hi)
        if inside(ue, mid) != inside(uf, mid):
            if out and abs(out[-1][1] - lo) <= MERGE_TOL:
                out[-1] = (out[-1][0], hi)
            else:
                out.append((lo, hi))
    return out


def symmetric_difference(M: WarpedProduct, E: SlabRegion, F: SlabRegion) -> float:
    """Volume of E delta F."""
    pieces = symmetric_difference_arcs(E, F)
    return M.sphere_area * sum(arc_integral(M, a, b) for a, b in pieces)


def solve_volume_endpoint(M: WarpedProduct, a: float, V: float, tol: float = 1e-12,
                          guess: float | None = None) -> float:
    """Return b > a with slab_volume((a, b)) == V to absolute tolerance ``tol``.

    Volume is strictly increasing in b because phi > 0, so the root is bracketed
    in (a, a + period) and unique. A ``guess`` close to the root is polished by
    Newton's method directly; otherwise (or if that stalls) the root is
    bracketed first.
    """
    Vtot = M.total_volume
    if not (0.0 < V < Vtot):
        raise ConfigError(f"target volume {V!r} outside (0, {Vtot!r})")
    sig = M.sphere_area
    if guess is not None and a < guess < a + M.period:
        b = guess
        for _ in range(6):
            res = sig * arc_integral(M, a, b) - V
            if abs(res) <= tol:
                return b
            b -= res / M.slice_area(b)
            if not a < b < a + M.period:
                break
    prim = M.primitive
    base = prim(a)
    target = V / sig

    def g(b):
        return prim(b) - base - target

    L = M.period
    b = optimize.brentq(g, a, a + L, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    for _ in range(8):
        res = sig * arc_integral(M, a, b) - V
        if abs(res) <= tol:
            return b
        b -= res / M.slice_area(b)
    res = sig * arc_integral(M, a, b) - V
    if abs(res) > 10 * tol:
        raise SolverError(f"volume endpoint solve stalled with residual {res:.3e}")
    return b
