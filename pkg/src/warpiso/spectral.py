"""Second variation of area at critical slabs and its spectrum.

For the slice {r0} x S^{n-1} the Jacobi operator is
-Delta_slice - (|A|^2 + Ric(nu, nu)) with |A|^2 + Ric = (n-1)[(phi'/phi)^2 - phi''/phi],
so on a degree-k harmonic it acts by

    mu_k = k(k + n - 2)/phi^2 - (n-1)[(phi'/phi)^2 - phi''/phi].

The two boundary sheets decouple except through the volume constraint, which
only involves their constant (k = 0) parts.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import comb

from .errors import ConfigError
from .geometry import SlabRegion, WarpedProduct
from .graph import GraphPerturbation, basis_for

KERNEL_TOL = 1e-9
CRITICAL_TOL = 1e-8


def jacobi_potential(M: WarpedProduct, r0):
    """|A|^2 + Ric(nu, nu) on the slice at r0."""
    phi, d1, d2 = M.profile.evaluate(r0)
    return (M.n - 1) * ((d1 / phi) ** 2 - d2 / phi)


def jacobi_eigenvalue(M: WarpedProduct, r0, k):
    """Eigenvalue of the Jacobi operator of the slice at r0 on degree-k harmonics."""
    phi = M.profile.phi(r0)
    return k * (k + M.n - 2) / phi**2 - jacobi_potential(M, r0)


def harmonic_multiplicity(n: int, k: int) -> int:
    """Dimension of degree-k spherical harmonics on S^{n-1}."""
    if n == 2:
        return 1 if k == 0 else 2
    d = n
    return int(comb(k + d - 1, d - 1, exact=True) - (comb(k + d - 3, d - 1, exact=True) if k >= 2 else 0))


def criticality_defect(M: WarpedProduct, a: float, b: float) -> float:
    """Mismatch of the boundary mean curvatures; zero iff the slab (a, b) is a constrained critical point."""
    phi, d1, _ = M.profile.evaluate(np.array([a, b]))
    return float((M.n - 1) * (d1[0] / phi[0] + d1[1] / phi[1]))


@dataclass
class SpectralReport:
    """Spectrum of the constrained second variation at a critical single-arc slab.

    ``kernel_r`` lists kernel vectors as per-sheet constant/harmonic data in
    r-displacement coordinates; ``kernel_normal`` gives the same directions as
    outward normal speeds (v_a = -u_a, v_b = u_b).
    """

    a: float
    b: float
    n: int
    K: int
    potential_a: float
    potential_b: float
    table: list  # rows (k, mu_a, mu_b)
    mu0_constrained: float
    lambda1: float
    kernel_dim: int
    raw_kernel_dim: int
    coercivity: float
    transverse_coercivity: float
    kernel_r: list = field(default_factory=list)
    kernel_normal: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    mean_curvature: float = 0.0
    tol: float = KERNEL_TOL

    def eigenvalues(self, sheet: str) -> np.ndarray:
        col = {"a": 1, "b": 2}[sheet]
        return np.array([row[col] for row in self.table])

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "sheet", "mu", "multiplicity"])
        for k, mu_a, mu_b in self.table:
            mult = harmonic_multiplicity(self.n, int(k))
            w.writerow([int(k), "a", repr(float(mu_a)), mult])
            w.writerow([int(k), "b", repr(float(mu_b)), mult])
        w.writerow([0, "constrained", repr(float(self.mu0_constrained)), 1])
        return buf.getvalue()


def constrained_spectrum(M: WarpedProduct, slab: SlabRegion, K: int = 16,
                         tol: float = KERNEL_TOL) -> SpectralReport:
    """Diagonalise the volume-constrained second variation degree by degree.

    Degrees k >= 1 are untouched by the constraint. For k = 0 the constraint
    phi(b)^{n-1} u_b = phi(a)^{n-1} u_a (r-displacements) leaves the single
    direction (1, t), t = phi(a)^{n-1}/phi(b)^{n-1}, whose L^2 Rayleigh
    quotient is the constrained eigenvalue.

    ``coercivity`` is min mu / (1 + k(k+n-2)/phi^2) over all constrained modes,
    the best C with Q[v] >= C ||v||^2_{W^{1,2}}; ``transverse_coercivity`` is
    the same minimum over modes outside the kernel.
    """
    if len(slab.arcs) != 1:
        raise ConfigError("spectrum requires a single-arc slab")
    a, b = slab.arcs[0]
    crit = criticality_defect(M, a, b)
    if abs(crit) > CRITICAL_TOL:
        raise ConfigError(f"non-critical slab: boundary mean curvatures differ by {crit:.3e}")
    n, p = M.n, M.p
    phi_a, phi_b = (float(x) for x in M.profile.phi(np.array([a, b])))
    wa, wb = phi_a**p, phi_b**p
    ks = np.arange(K + 1)
    mu_a = jacobi_eigenvalue(M, a, ks)
    mu_b = jacobi_eigenvalue(M, b, ks)
    t = wa / wb
    mu0c = float((wa * mu_a[0] + wb * mu_b[0] * t**2) / (wa + wb * t**2))

    spectrum = [(mu0c, 0, "pair", phi_a)]
    for k in range(1, K + 1):
        spectrum.append((float(mu_a[k]), k, "a", phi_a))
        spectrum.append((float(mu_b[k]), k, "b", phi_b))
    lam1 = min(s[0] for s in spectrum)
    ratios = [(mu if k == 0 else mu / (1.0 + k * (k + n - 2) / phi**2), mu) for mu, k, _, phi in spectrum]
    coer = min(r for r, _ in ratios)
    trans = min(r for r, mu in ratios if abs(mu) >= tol)

    kernel_r, kernel_normal = [], []
    for mu, k, sheet, _ in spectrum:
        if abs(mu) >= tol:
            continue
        if k == 0:
            nrm = math.sqrt(1.0 + t**2)
            kernel_r.append({"degree": 0, "u_a": 1.0 / nrm, "u_b": t / nrm})
            kernel_normal.append({"degree": 0, "v_a": -1.0 / nrm, "v_b": t / nrm})
        else:
            kernel_r.append({"degree": k, "sheet": sheet})
            kernel_normal.append({"degree": k, "sheet": sheet})
    raw = int(np.sum(np.abs(mu_a) < tol) + np.sum(np.abs(mu_b) < tol))
    notes = []
    if raw != len(kernel_r):
        notes.append(f"raw per-sheet kernel dimension {raw} differs from constraint-reduced "
                     f"dimension {len(kernel_r)}")
    H = float((n - 1) * float(M.profile.dphi(b)) / phi_b)
    return SpectralReport(
        a=float(a), b=float(b), n=n, K=K,
        potential_a=float(jacobi_potential(M, a)), potential_b=float(jacobi_potential(M, b)),
        table=[(int(k), float(x), float(y)) for k, x, y in zip(ks, mu_a, mu_b)],
        mu0_constrained=mu0c, lambda1=float(lam1), kernel_dim=len(kernel_r), raw_kernel_dim=raw,
        coercivity=float(coer), transverse_coercivity=float(trans), kernel_r=kernel_r, kernel_normal=kernel_normal, notes=notes,
        mean_curvature=H, tol=tol,
    )


@dataclass
class Classification:
    kind: str  # "StrictlyStable" | "Degenerate" | "Unstable"
    lambda1: float
    coercivity: float | None = None
    kernel: list = field(default_factory=list)


def classify_minimizer(report: SpectralReport, tol: float | None = None) -> Classification:
    """StrictlyStable (with coercivity certificate) iff lambda_1 > tol.

    A negative lambda_1 beyond tolerance means the slab is not even a local
    minimizer and is reported as Unstable.
    """
    tol = report.tol if tol is None else tol
    if report.lambda1 > tol:
        return Classification("StrictlyStable", report.lambda1, coercivity=report.coercivity)
    if report.lambda1 < -tol:
        return Classification("Unstable", report.lambda1, kernel=list(report.kernel_r))
    return Classification("Degenerate", report.lambda1, kernel=list(report.kernel_r))


def kernel_vectors(report: SpectralReport, u: GraphPerturbation) -> np.ndarray:
    """Kernel directions as columns in the coefficient space of ``u``'s truncation."""
    hb = basis_for(u)
    m = hb.size
    cols = []
    for entry in report.kernel_r:
        k = entry["degree"]
        if k == 0:
            v = np.zeros(2 * m)
            v[0] = entry["u_a"]
            v[m] = entry["u_b"]
            cols.append(v)
        else:
            off = 0 if entry["sheet"] == "a" else m
            for j in np.flatnonzero(hb.degrees == k):
                v = np.zeros(2 * m)
                v[off + j] = 1.0
                cols.append(v)
    if not cols:
        return np.zeros((2 * m, 0))
    return np.column_stack(cols)


def quadratic_form(M: WarpedProduct, report: SpectralReport, u: GraphPerturbation) -> float:
    """Second variation Q[u, u] = sum over sheets and modes of phi^{n-1} mu_k |c|^2 ||Y||^2.

    Valid for volume-preserving directions (the constant parts must satisfy the
    linearised constraint, otherwise the k = 0 terms use per-sheet values).
    """
    hb = basis_for(u)
    deg = hb.degrees.astype(int)
    mu_a = np.array([row[1] for row in report.table])
    mu_b = np.array([row[2] for row in report.table])
    pa, pb = M.density(np.array([u.a, u.b]))
    qa = pa * np.sum(mu_a[deg] * hb.norms2 * u.coeffs_a**2)
    qb = pb * np.sum(mu_b[deg] * hb.norms2 * u.coeffs_b**2)
    return float(qa + qb)
