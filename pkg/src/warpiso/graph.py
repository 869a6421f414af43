"""Graphical perturbations of slab boundaries and their area and volume functionals.

A perturbation of the slab (a, b) x S^{n-1} moves the two boundary spheres to
r = a + u_a(omega) and r = b + u_b(omega). The functions u_a, u_b are truncated
harmonic expansions: a Fourier series on the circle when n = 2 and a zonal
(Gegenbauer, i.e. Legendre for n = 3) series in the polar angle when n >= 3.
Displacements are measured along d/dr, which for slices coincides with the
normal exponential map, so the r-graph is the normal graph.

Coefficients are stored in the natural (unnormalised) basis; the vector
``c = [c_a, c_b]`` is the coordinate system used by every gradient and Hessian.
The L^2(boundary) inner product in these coordinates is the diagonal metric
returned by :func:`l2_weights`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import ConfigError, EmbeddingError, SolverError
from .geometry import SlabRegion, WarpedProduct, slab_perimeter, slab_volume
from .quadrature import QuadratureGrid, fixed_legendre_integral

DEFAULT_MODES = {"full": 32, "zonal": 24}
VOLUME_TOL = 1e-11


def mode_for(n: int) -> str:
    return "full" if n == 2 else "zonal"


def default_quad_points(mode: str, N: int) -> int:
    return max(8 * N, 64) if mode == "full" else max(4 * (N + 1), 48)


@dataclass(frozen=True)
class HarmonicBasis:
    """Basis values ``B`` and angular-gradient values ``D`` on a quadrature grid.

    ``|grad_S u|`` at node i equals ``|(D @ c)[i]|`` for u = sum_j c_j Y_j.
    """

    grid: QuadratureGrid
    N: int
    B: np.ndarray
    D: np.ndarray
    degrees: np.ndarray
    norms2: np.ndarray

    @property
    def mode(self) -> str:
        return self.grid.kind

    @property
    def size(self) -> int:
        return self.B.shape[1]

    @property
    def laplace_eigs(self) -> np.ndarray:
        """-Laplacian eigenvalue k(k + n - 2) of each basis function on the unit sphere."""
        k = self.degrees
        return k * (k + self.grid.n - 2.0)


@lru_cache(maxsize=64)
def harmonic_basis(n: int, N: int, Q: int | None = None) -> HarmonicBasis:
    mode = mode_for(n)
    Q = Q or default_quad_points(mode, N)
    grid = QuadratureGrid.build(n, Q)
    if mode == "full":
        th = grid.nodes
        cols, dcols, deg = [np.ones_like(th)], [np.zeros_like(th)], [0]
        for j in range(1, N + 1):
            cols += [np.cos(j * th), np.sin(j * th)]
            dcols += [-j * np.sin(j * th), j * np.cos(j * th)]
            deg += [j, j]
    else:
        x = grid.nodes
        lam = 0.5 * (n - 2)
        sin_polar = np.sqrt(1.0 - x**2)
        cols, dcols, deg = [], [], []
        for ell in range(N + 1):
            cols.append(special.eval_gegenbauer(ell, lam, x))
            if ell == 0:
                dcols.append(np.zeros_like(x))
            else:
                dcols.append(sin_polar * 2 * lam * special.eval_gegenbauer(ell - 1, lam + 1, x))
            deg.append(ell)
    B = np.column_stack(cols)
    D = np.column_stack(dcols)
    norms2 = np.einsum("i,ij,ij->j", grid.weights, B, B)
    for arr in (B, D, norms2):
        arr.setflags(write=False)
    degrees = np.array(deg, dtype=float)
    degrees.setflags(write=False)
    return HarmonicBasis(grid, N, B, D, degrees, norms2)


@dataclass(frozen=True, eq=False)
class GraphPerturbation:
    """Boundary displacements (u_a, u_b) of the single-arc slab ``(a, b)``."""

    a: float
    b: float
    period: float
    n: int
    coeffs_a: np.ndarray
    coeffs_b: np.ndarray

    def __post_init__(self):
        ca = np.array(self.coeffs_a, dtype=float)
        cb = np.array(self.coeffs_b, dtype=float)
        if ca.shape != cb.shape or ca.ndim != 1:
            raise ConfigError("coeffs_a and coeffs_b must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(ca)) and np.all(np.isfinite(cb))):
            raise ConfigError("coefficients must be finite")
        size = ca.size
        if self.mode == "full" and size % 2 == 0:
            raise ConfigError("full (Fourier) coefficient vectors have odd length 2N+1")
        ca.setflags(write=False)
        cb.setflags(write=False)
        object.__setattr__(self, "coeffs_a", ca)
        object.__setattr__(self, "coeffs_b", cb)

    @property
    def mode(self) -> str:
        return mode_for(self.n)

    @property
    def N(self) -> int:
        size = self.coeffs_a.size
        return (size - 1) // 2 if self.mode == "full" else size - 1

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.coeffs_a, self.coeffs_b])

    @property
    def base(self) -> SlabRegion:
        return SlabRegion.single(self.a, self.b, self.period)

    @classmethod
    def zero(cls, M: WarpedProduct, a: float, b: float, N: int | None = None):
        N = DEFAULT_MODES[mode_for(M.n)] if N is None else N
        size = 2 * N + 1 if M.n == 2 else N + 1
        return cls(a, b, M.period, M.n, np.zeros(size), np.zeros(size))

    def with_vector(self, c) -> "GraphPerturbation":
        c = np.asarray(c, dtype=float)
        h = c.size // 2
        return GraphPerturbation(self.a, self.b, self.period, self.n, c[:h], c[h:])

    def to_dict(self) -> dict:
        return {
            "base": [self.a, self.b],
            "period": self.period,
            "n": self.n,
            "mode": self.mode,
            "N": self.N,
            "coeffs_a": self.coeffs_a.tolist(),
            "coeffs_b": self.coeffs_b.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GraphPerturbation":
        try:
            a, b = data["base"]
            obj = cls(float(a), float(b), float(data["period"]), int(data["n"]),
                      data["coeffs_a"], data["coeffs_b"])
        except KeyError as exc:
            raise ConfigError(f"graph perturbation: missing field {exc.args[0]}") from exc
        if "mode" in data and data["mode"] != obj.mode:
            raise ConfigError(f"mode: {data['mode']!r} inconsistent with n = {obj.n}")
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GraphPerturbation":
        return cls.from_dict(json.loads(text))


def basis_for(u: GraphPerturbation, Q: int | None = None) -> HarmonicBasis:
    return harmonic_basis(u.n, u.N, Q)


def l2_weights(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None) -> np.ndarray:
    """Diagonal of the L^2(boundary of the base slab) metric in coefficient coordinates."""
    hb = basis_for(u, Q)
    pa, pb = M.density(np.array([u.a, u.b]))
    return np.concatenate([pa * hb.norms2, pb * hb.norms2])


def w12_weights(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None) -> np.ndarray:
    """Diagonal of the W^{1,2} metric: int (|grad v|^2 / phi^2 + v^2) phi^{n-1} per sheet."""
    hb = basis_for(u, Q)
    phis = M.profile.phi(np.array([u.a, u.b]))
    parts = [phi ** M.p * hb.norms2 * (1.0 + hb.laplace_eigs / phi**2) for phi in phis]
    return np.concatenate(parts)


class _Sheets:
    """Per-sheet grid values for one perturbation."""

    def __init__(self, M: WarpedProduct, u: GraphPerturbation, Q: int | None, check: bool = True):
        hb = basis_for(u, Q)
        self.hb = hb
        self.w = hb.grid.weights
        self.centers = (u.a, u.b)
        self.disp = (hb.B @ u.coeffs_a, hb.B @ u.coeffs_b)
        self.grad = (hb.D @ u.coeffs_a, hb.D @ u.coeffs_b)
        self.r = tuple(c + d for c, d in zip(self.centers, self.disp))
        if check:
            sup = max(np.max(np.abs(d)) for d in self.disp)
            phi_floor = M.profile.phi_min
            if sup >= phi_floor / 4 or sup >= (u.b - u.a) / 4:
                raise EmbeddingError(
                    f"graph not embedded: sup|u| = {sup:.4g} exceeds min(phi)/4 = {phi_floor / 4:.4g} "
                    f"or (b - a)/4 = {(u.b - u.a) / 4:.4g}")


def _area_terms(M: WarpedProduct, r, g, order: int):
    """Area integrand F(r, g) = phi^{p-1} sqrt(phi^2 + g^2) and its partial derivatives."""
    p = M.p
    phi, d1, d2 = M.profile.evaluate(r)
    S = np.sqrt(phi**2 + g**2)
    out = {"F": phi ** (p - 1) * S}
    if order >= 1:
        h = phi ** (p - 2) * ((p - 1) * S + phi**2 / S)
        out["Fr"] = d1 * h
        out["Fg"] = phi ** (p - 1) * g / S
    if order >= 2:
        dh = ((p - 2) * phi ** (p - 3) * ((p - 1) * S + phi**2 / S)
              + phi ** (p - 2) * ((p + 1) * phi / S - phi**3 / S**3))
        out["Frr"] = d2 * h + d1**2 * dh
        out["Frg"] = d1 * phi ** (p - 2) * g * ((p - 1) / S - phi**2 / S**3)
        out["Fgg"] = phi ** (p + 1) / S**3
    return out


def graph_area_excess(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None) -> float:
    """graph_area(u) - slab_perimeter(base), computed without cancellation.

    Written as sum over sheets of int [(phi(r)^p - phi(c)^p) + phi(r)^p (sqrt(1 + |grad u|^2/phi^2) - 1)],
    with the first bracket taken from the profile's excess representation.
    """
    sh = _Sheets(M, u, Q)
    p = M.p
    total = 0.0
    for c, r, g in zip(sh.centers, sh.r, sh.grad):
        phi = M.profile.phi(r)
        q = (g / phi) ** 2
        stretch = q / (np.sqrt(1.0 + q) + 1.0)
        level = M.profile.power_excess(r, p) - M.profile.power_excess(c, p)
        total += np.dot(sh.w, level + phi**p * stretch)
    return float(total)


def graph_area(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None) -> float:
    """Area of the two perturbed boundary sheets."""
    return slab_perimeter(M, u.base) + graph_area_excess(M, u, Q)


def _layer_integrals(M: WarpedProduct, c, disp: np.ndarray) -> np.ndarray:
    """int_c^{c + disp_i} phi^p dr per node, split as phi_min^p * disp + int (excess)."""
    p = M.p
    lo = np.broadcast_to(np.asarray(c, dtype=float), disp.shape)
    ex = fixed_legendre_integral(lambda r: M.profile.power_excess(r, p), lo, lo + disp, order=48)
    return M.profile.phi_min ** p * disp + ex


def graph_volume_excess(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None) -> float:
    """graph_volume(u) - slab_volume(base)."""
    sh = _Sheets(M, u, Q)
    la = _layer_integrals(M, u.a, sh.disp[0])
    lb = _layer_integrals(M, u.b, sh.disp[1])
    return float(np.dot(sh.w, lb - la))


def graph_volume(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None) -> float:
    """Volume enclosed between the sheets r = a + u_a and r = b + u_b."""
    return slab_volume(M, u.base) + graph_volume_excess(M, u, Q)


def area_gradient(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None) -> np.ndarray:
    """Partial derivatives of graph_area with respect to the coefficient vector."""
    sh = _Sheets(M, u, Q, check=False)
    hb = sh.hb
    parts = []
    for r, g in zip(sh.r, sh.grad):
        t = _area_terms(M, r, g, 1)
        parts.append(hb.B.T @ (sh.w * t["Fr"]) + hb.D.T @ (sh.w * t["Fg"]))
    return np.concatenate(parts)


def volume_gradient(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None) -> np.ndarray:
    sh = _Sheets(M, u, Q, check=False)
    hb = sh.hb
    ga = -hb.B.T @ (sh.w * M.density(sh.r[0]))
    gb = hb.B.T @ (sh.w * M.density(sh.r[1]))
    return np.concatenate([ga, gb])


def area_hessian(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None) -> np.ndarray:
    sh = _Sheets(M, u, Q, check=False)
    hb = sh.hb
    B, D, w = hb.B, hb.D, sh.w
    m = hb.size
    H = np.zeros((2 * m, 2 * m))
    for s, (r, g) in enumerate(zip(sh.r, sh.grad)):
        t = _area_terms(M, r, g, 2)
        cross = B.T @ ((w * t["Frg"])[:, None] * D)
        blk = (B.T @ ((w * t["Frr"])[:, None] * B) + cross + cross.T
               + D.T @ ((w * t["Fgg"])[:, None] * D))
        H[s * m:(s + 1) * m, s * m:(s + 1) * m] = blk
    return H


def volume_hessian(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None) -> np.ndarray:
    sh = _Sheets(M, u, Q, check=False)
    hb = sh.hb
    B, w = hb.B, sh.w
    m = hb.size
    H = np.zeros((2 * m, 2 * m))
    for s, (sign, r) in enumerate(zip((-1.0, 1.0), sh.r)):
        phi, d1, _ = M.profile.evaluate(r)
        dens_r = M.p * phi ** (M.p - 1) * d1
        H[s * m:(s + 1) * m, s * m:(s + 1) * m] = sign * (B.T @ ((w * dens_r)[:, None] * B))
    return H


def normal_shift(u: GraphPerturbation) -> np.ndarray:
    """Coefficient vector of the unit outward normal shift: u_a -> u_a - 1, u_b -> u_b + 1."""
    m = u.coeffs_a.size
    d = np.zeros(2 * m)
    d[0] = -1.0
    d[m] = 1.0
    return d


def project_to_volume(M: WarpedProduct, u: GraphPerturbation, V: float, Q: int | None = None,
                      tol: float = VOLUME_TOL, max_iter: int = 50) -> GraphPerturbation:
    """Add a multiple of the normal shift so that graph_volume equals V.

    Newton iteration on the scalar shift; the derivative is the area-weighted
    mean of phi^{n-1} over both sheets (first variation of volume).
    """
    d = normal_shift(u)
    target = V - slab_volume(M, u.base)
    c0 = u.vector
    shift = 0.0
    cur = u
    for _ in range(max_iter):
        res = graph_volume_excess(M, cur, Q) - target
        if abs(res) <= tol:
            return cur
        slope = float(volume_gradient(M, cur, Q) @ d)
        shift -= res / slope
        cur = u.with_vector(c0 + shift * d)
    res = graph_volume_excess(M, cur, Q) - target
    if abs(res) <= tol:
        return cur
    raise SolverError(f"volume projection did not converge in {max_iter} iterations "
                      f"(residual {res:.3e})")


def first_variation_residual(M: WarpedProduct, u: GraphPerturbation, Q: int | None = None):
    """L^2 gradient of area projected onto the volume-preserving directions.

    Returns ``(residual, multiplier)``: ``residual`` is a coefficient vector,
    the L^2(boundary) gradient of area minus ``multiplier`` times that of
    volume; ``multiplier`` estimates the mean curvature.
    """
    G = l2_weights(M, u, Q)
    gA = area_gradient(M, u, Q) / G
    gV = volume_gradient(M, u, Q) / G
    lam = float(np.sum(G * gA * gV) / np.sum(G * gV * gV))
    return gA - lam * gV, lam


def weighted_norm(v, weights) -> float:
    return float(np.sqrt(np.sum(weights * np.asarray(v) ** 2)))


def graph_slab_symmetric_difference(M: WarpedProduct, u: GraphPerturbation, slab: SlabRegion,
                                    Q: int | None = None) -> float:
    """|E delta slab| for the graph region E of ``u`` and a single-arc slab near its base."""
    if len(slab.arcs) != 1:
        raise ConfigError("comparison slab must consist of a single arc")
    L = u.period
    a2, b2 = slab.arcs[0]
    shift = round((u.a - a2) / L) * L
    a2, b2 = a2 + shift, b2 + shift
    sh = _Sheets(M, u, Q, check=False)
    la = _layer_integrals(M, a2, sh.r[0] - a2)
    lb = _layer_integrals(M, b2, sh.r[1] - b2)
    return float(np.dot(sh.w, np.abs(la) + np.abs(lb)))


def graph_symmetric_difference(M: WarpedProduct, u: GraphPerturbation, v: GraphPerturbation,
                               Q: int | None = None) -> float:
    """|E_u delta E_v| for two perturbations of the same base slab."""
    if (u.a, u.b, u.N) != (v.a, v.b, v.N):
        raise ConfigError("perturbations must share base slab and truncation")
    su = _Sheets(M, u, Q, check=False)
    sv = _Sheets(M, v, Q, check=False)
    tot = 0.0
    for ru, rv in zip(su.r, sv.r):
        tot += np.dot(su.w, np.abs(_layer_integrals(M, rv, ru - rv)))
    return float(tot)


def random_perturbation(M: WarpedProduct, a: float, b: float, rng: np.random.Generator,
                        cap: float, N: int | None = None, decay: float = 2.0,
                        Q: int | None = None) -> GraphPerturbation:
    """Random smooth perturbation with grid sup-norm uniformly drawn in (0, cap].

    Coefficients are Gaussian with variance decaying like (1 + degree)^(-2*decay).
    """
    u0 = GraphPerturbation.zero(M, a, b, N)
    hb = basis_for(u0, Q)
    scale = (1.0 + hb.degrees) ** (-decay) / np.sqrt(hb.norms2)
    c = np.concatenate([rng.standard_normal(hb.size) * scale, rng.standard_normal(hb.size) * scale])
    trial = u0.with_vector(c)
    sup = max(np.max(np.abs(hb.B @ trial.coeffs_a)), np.max(np.abs(hb.B @ trial.coeffs_b)))
    amp = cap * rng.uniform(0.05, 0.9)
    return u0.with_vector(c * (amp / sup))
