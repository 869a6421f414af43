"""Finite-dimensional reduction of area near a degenerate critical slab.

With K the kernel of the constrained second variation and K^perp its
L^2-orthogonal complement, every small volume-preserving perturbation close to
a critical slab is written as zeta + Upsilon(zeta) + (transverse part), where
Upsilon(zeta) in K^perp solves the projected Euler-Lagrange equation

    pi_{K^perp}(grad A - lambda grad V)(zeta + Upsilon(zeta)) = 0,  V = V_0.

The reduced function f(zeta) = A(zeta + Upsilon(zeta)) then carries all the
degeneracy: the order of vanishing of f - f(0) is the growth exponent of the
isoperimetric defect along the kernel.

Kernel coordinates are orthonormal for the area-averaged L^2 inner product
<u, v> / |boundary|, so zeta is measured in length units (the RMS displacement).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg, stats

from .errors import ConfigError, SolverError
from .geometry import SlabRegion, WarpedProduct, slab_perimeter, slab_volume
from .graph import (
    GraphPerturbation,
    area_gradient,
    area_hessian,
    graph_area_excess,
    graph_volume_excess,
    l2_weights,
    project_to_volume,
    random_perturbation,
    volume_gradient,
    volume_hessian,
    w12_weights,
)
from .spectral import SpectralReport, kernel_vectors

ZETA_MAX = 0.05
RESIDUAL_TOL = 1e-10
VOLUME_TOL = 1e-11


@dataclass
class KernelSplitting:
    """Coordinates adapted to K (+) K^perp for one truncation of one slab."""

    u0: GraphPerturbation
    G: np.ndarray  # L^2 metric diagonal
    EK: np.ndarray  # kernel basis, columns orthonormal for G / area
    Z: np.ndarray  # complement basis, columns orthonormal for G
    boundary_area: float

    @classmethod
    def build(cls, M: WarpedProduct, u0: GraphPerturbation, kernel: np.ndarray,
              Q: int | None = None) -> "KernelSplitting":
        G = l2_weights(M, u0, Q)
        if kernel.ndim != 2 or kernel.shape[0] != G.size:
            raise ConfigError("kernel basis has the wrong shape for this truncation")
        area = slab_perimeter(M, u0.base)
        sq = np.sqrt(G)
        if kernel.shape[1]:
            q, _ = np.linalg.qr(sq[:, None] * kernel)
            EK = q / sq[:, None] * np.sqrt(area)
            Zs = linalg.null_space(q.T)
        else:
            EK = np.zeros((G.size, 0))
            Zs = np.eye(G.size)
        return cls(u0, G, EK, Zs / sq[:, None], area)

    def kernel_coords(self, c: np.ndarray) -> np.ndarray:
        return self.EK.T @ (self.G * c) / self.boundary_area

    def kernel_part(self, c: np.ndarray) -> np.ndarray:
        return self.EK @ self.kernel_coords(c)


def solve_upsilon(M: WarpedProduct, split: KernelSplitting, zeta, Q: int | None = None,
                  zeta_max: float = ZETA_MAX, tol: float = RESIDUAL_TOL, max_iter: int = 30,
                  guess: np.ndarray | None = None):
    """Solve for Upsilon(zeta) in K^perp and the multiplier by Newton's method.

    Unknowns are the K^perp coordinates eta (u = EK zeta + Z eta) and lambda;
    equations are Z^T (grad A - lambda grad V) = 0 and V(u) = V(0). The Jacobian
    uses the exact Hessians of the discretised functionals.

    Returns ``(w, lam, residual)`` with ``w = Z eta`` as a coefficient vector.
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    if zeta.size != split.EK.shape[1]:
        raise ConfigError(f"zeta has {zeta.size} components, kernel has {split.EK.shape[1]}")
    if np.linalg.norm(zeta) > zeta_max:
        raise ConfigError(f"|zeta| = {np.linalg.norm(zeta):.3g} outside the trust region {zeta_max}")
    u0, Z = split.u0, split.Z
    base = split.EK @ zeta
    eta = np.zeros(Z.shape[1]) if guess is None else Z.T @ (split.G * guess)
    gV0 = volume_gradient(M, u0, Q)
    lam = float(area_gradient(M, u0, Q) @ gV0 / (gV0 @ gV0))

    def residual(eta, lam):
        u = u0.with_vector(base + Z @ eta)
        gA, gV = area_gradient(M, u, Q), volume_gradient(M, u, Q)
        F = np.concatenate([Z.T @ (gA - lam * gV), [graph_volume_excess(M, u, Q)]])
        return u, gA, gV, F

    u, gA, gV, F = residual(eta, lam)
    history = []
    for _ in range(max_iter):
        res_grad = float(np.linalg.norm(F[:-1]))
        history.append(max(res_grad, abs(F[-1])))
        if res_grad < tol and abs(F[-1]) < VOLUME_TOL:
            return Z @ eta, lam, res_grad
        HL = area_hessian(M, u, Q) - lam * volume_hessian(M, u, Q)
        top = np.hstack([Z.T @ HL @ Z, -(Z.T @ gV)[:, None]])
        bottom = np.concatenate([gV @ Z, [0.0]])[None, :]
        J = np.vstack([top, bottom])
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Jacobian in the reduced Euler-Lagrange solve") from exc
        eta, lam = eta + step[:-1], lam + step[-1]
        u, gA, gV, F = residual(eta, lam)
        if len(history) > 3 and history[-1] > 1e3 * history[0] + 1e-6:
            break
    raise SolverError(f"reduced Euler-Lagrange Newton solve did not converge; residual history "
                      f"{[f'{h:.2e}' for h in history[-6:]]}")


@dataclass
class ReductionResult:
    """Tabulated reduced function along one kernel direction."""

    zetas: list
    values: list  # f(zeta) - f(0)
    upsilon_norms: list
    residuals: list
    multipliers: list
    base_area: float
    order: float | None
    coefficient: float | None
    fit_residual: float | None
    decade_slopes: list
    integrable: bool
    kernel_dim: int
    zeta_converged_max: float
    upsilon_gradient_at_zero: float
    direction: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["zeta", "reduced_minus_base", "upsilon_l2", "residual", "multiplier"])
        for row in zip(self.zetas, self.values, self.upsilon_norms, self.residuals, self.multipliers):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def default_zetas(lo: float = 1e-3, hi: float = 5e-2, per_decade: int = 16) -> np.ndarray:
    count = int(round(np.log10(hi / lo) * per_decade)) + 1
    return np.geomspace(lo, hi, count)


def loglog_fit(x, y):
    """Least-squares line through (log x, log y): (slope, intercept, max |residual|)."""
    lx, ly = np.log(x), np.log(y)
    fit = stats.linregress(lx, ly)
    resid = ly - (fit.intercept + fit.slope * lx)
    return float(fit.slope), float(fit.intercept), float(np.max(np.abs(resid)))


def decade_slopes(x, y):
    """Log-log slope fitted separately on each full decade of x (positive samples only)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    x, y = x[keep], y[keep]
    out = []
    if x.size < 2:
        return out
    lo = 10.0 ** np.floor(np.log10(x.min()) + 1e-9)
    while lo * 10 <= x.max() * (1 + 1e-9):
        sel = (x >= lo * (1 - 1e-9)) & (x <= lo * 10 * (1 + 1e-9))
        if np.count_nonzero(sel) >= 2:
            out.append({"lo": float(lo), "hi": float(lo * 10), "slope": loglog_fit(x[sel], y[sel])[0]})
        lo *= 10
    return out


def upsilon_gradient_at_zero(M: WarpedProduct, split: KernelSplitting, Q: int | None = None,
                             h: float = 1e-5) -> float:
    """Central-difference norm of dUpsilon/dzeta at zeta = 0 (max over kernel directions)."""
    worst = 0.0
    for j in range(split.EK.shape[1]):
        e = np.zeros(split.EK.shape[1])
        e[j] = h
        wp, _, _ = solve_upsilon(M, split, e, Q)
        wm, _, _ = solve_upsilon(M, split, -e, Q)
        d = (wp - wm) / (2 * h)
        worst = max(worst, float(np.sqrt(np.sum(split.G * d**2) / split.boundary_area)))
    return worst


def reduced_function(M: WarpedProduct, slab: SlabRegion, report: SpectralReport,
                     zetas=None, N: int | None = None, Q: int | None = None,
                     direction=None, fit_range=(1e-3, 1e-2),
                     integrable_tol: float = 1e-12) -> ReductionResult:
    """Evaluate f(zeta) - f(0) along a unit kernel direction and fit its order.

    The difference is accumulated as an area excess, never as a difference of
    two areas, so values far below machine epsilon relative to the area are
    resolved. ``order`` is the log-log slope over ``fit_range``. The direction
    is classified integrable when every value is below
    ``integrable_tol * (1 + area)`` and the values show no resolvable power law
    (fewer than two positive samples in the fit range, or a fit residual above
    0.1); a clean power law of tiny amplitude is a genuine, if very flat,
    degeneracy.
    """
    if len(slab.arcs) != 1:
        raise ConfigError("reduction requires a single-arc slab")
    a, b = slab.arcs[0]
    u0 = GraphPerturbation.zero(M, a, b, N)
    K = kernel_vectors(report, u0)
    if K.shape[1] == 0:
        raise ConfigError("slab is non-degenerate: the kernel is trivial")
    split = KernelSplitting.build(M, u0, K, Q)
    dim = split.EK.shape[1]
    e = np.zeros(dim)
    if direction is None:
        e[0] = 1.0
    else:
        e = np.asarray(direction, dtype=float)
        if e.size != dim or not np.linalg.norm(e) > 0:
            raise ConfigError(f"direction must be a nonzero vector of length {dim}")
        e = e / np.linalg.norm(e)
    zetas = default_zetas() if zetas is None else np.asarray(zetas, dtype=float)
    vals, norms, ress, lams = [], [], [], []
    w = None
    for z in zetas:
        w, lam, res = solve_upsilon(M, split, z * e, Q, guess=w)
        u = u0.with_vector(split.EK @ (z * e) + w)
        vals.append(graph_area_excess(M, u, Q))
        norms.append(float(np.sqrt(np.sum(split.G * w**2) / split.boundary_area)))
        ress.append(res)
        lams.append(lam)
    vals_arr = np.array(vals)
    area = slab_perimeter(M, slab)
    order = coef = fit_res = None
    sel = ((zetas >= fit_range[0] * (1 - 1e-12)) & (zetas <= fit_range[1] * (1 + 1e-12))
           & (vals_arr > 0))
    if np.count_nonzero(sel) >= 2:
        order, icpt, fit_res = loglog_fit(zetas[sel], vals_arr[sel])
        coef = float(np.exp(icpt))
    small = bool(np.all(np.abs(vals_arr) < integrable_tol * (1.0 + area)))
    integrable = small and (order is None or fit_res > 0.1)
    return ReductionResult(
        zetas=[float(z) for z in zetas], values=[float(v) for v in vals], upsilon_norms=norms,
        residuals=ress, multipliers=lams, base_area=area, order=order, coefficient=coef,
        fit_residual=fit_res, decade_slopes=decade_slopes(zetas, vals_arr), integrable=integrable,
        kernel_dim=dim, zeta_converged_max=float(np.max(np.abs(zetas))),
        upsilon_gradient_at_zero=upsilon_gradient_at_zero(M, split, Q), direction=e.tolist(),
    )


@dataclass
class CoercivitySample:
    ratios: np.ndarray
    zetas: np.ndarray
    skipped: int

    @property
    def min_ratio(self) -> float:
        return float(np.min(self.ratios))


def transverse_coercivity_check(M: WarpedProduct, slab: SlabRegion, report: SpectralReport,
                                rng: np.random.Generator, samples: int = 200, cap: float = 0.02,
                                N: int | None = None, Q: int | None = None,
                                map_fn=map) -> CoercivitySample:
    """Sample (A(u) - A(u_L)) / ||u - u_L||^2_{W^{1,2}} with u_L = P_K u + Upsilon(P_K u).

    ``u`` ranges over random volume-preserving graph perturbations; a uniform
    positive lower bound is the quantitative transverse coercivity. Samples
    with u = u_L (pure kernel elements) are skipped.
    """
    if len(slab.arcs) != 1:
        raise ConfigError("coercivity check requires a single-arc slab")
    a, b = slab.arcs[0]
    u0 = GraphPerturbation.zero(M, a, b, N)
    split = KernelSplitting.build(M, u0, kernel_vectors(report, u0), Q)
    W = w12_weights(M, u0, Q)
    V0 = slab_volume(M, slab)
    draws = [random_perturbation(M, a, b, rng, cap, N, Q=Q) for _ in range(samples)]

    def evaluate(u):
        u = project_to_volume(M, u, V0, Q)
        c = u.vector
        if split.EK.shape[1]:
            zeta = split.kernel_coords(c)
            w, _, _ = solve_upsilon(M, split, zeta, Q)
            cL = split.EK @ zeta + w
        else:
            zeta = np.zeros(0)
            cL = np.zeros_like(c)
        d = c - cL
        den = float(np.sum(W * d**2))
        if den < 1e-20:
            return None
        num = graph_area_excess(M, u, Q) - graph_area_excess(M, u0.with_vector(cL), Q)
        return num / den, float(np.linalg.norm(zeta)) if zeta.size else 0.0

    out = list(map_fn(evaluate, draws))
    kept = [r for r in out if r is not None]
    return CoercivitySample(np.array([r for r, _ in kept]), np.array([z for _, z in kept]),
                            len(out) - len(kept))
