"""Independent reference computations used to cross-check the package.

Nothing here imports the package's numerics: profiles are re-implemented in
mpmath/sympy, integrals use fixed-grid Simpson or mpmath quadrature, and
derivatives of functionals use finite differences of the scalar functionals.
"""

import math

import mpmath as mp
import numpy as np
import sympy as sp


def mp_smooth_step(x):
    if x <= 0:
        return mp.mpf(0)
    if x >= 1:
        return mp.mpf(1)
    return 1 / (1 + mp.e ** (-(1 / (1 - x) - 1 / x)))


def mp_flat_bump(k, R=10):
    k = mp.mpf(k)
    L = 2 * mp.pi * R

    def phi(r):
        r = mp.mpf(r)
        y = r - 1 - L * mp.nint((r - 1) / L)
        return 1 - (1 - mp_smooth_step(k * abs(y))) / k

    return phi


def mp_analytic_power(m, eps=0.25, R=10):
    eps, R = mp.mpf(eps), mp.mpf(R)
    return lambda r: 1 - eps + eps * mp.sin((mp.mpf(r) - 1) / R) ** (2 * m)


def sympy_analytic_power_derivatives(m, eps=0.25, R=10):
    """(phi, phi', phi'') as float callables from symbolic differentiation."""
    r = sp.symbols("r")
    phi = 1 - sp.Rational(eps) + sp.Rational(eps) * sp.sin((r - 1) / R) ** (2 * m)
    return tuple(sp.lambdify(r, e, "math") for e in (phi, sp.diff(phi, r), sp.diff(phi, r, 2)))


def simpson(f, a, b, n=20000):
    """Composite Simpson rule with n (even) panels, f vectorised."""
    n += n % 2
    x = np.linspace(a, b, n + 1)
    y = f(x)
    h = (b - a) / n
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def sphere_area(dim):
    return 2 * math.pi ** ((dim + 1) / 2) / math.gamma((dim + 1) / 2)


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_hessian(f, x, h=1e-3):
    """Second differences of a scalar function, Richardson-extrapolated in h."""

    def raw(h):
        n = x.size
        H = np.zeros((n, n))
        f0 = f(x)
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = h
            H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h**2
            for j in range(i):
                ej = np.zeros(n)
                ej[j] = h
                H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                     + f(x - ei - ej)) / (4 * h**2)
        return H

    return (4 * raw(h / 2) - raw(h)) / 3


def harmonic_norms2(n, N):
    """Squared L^2(S^{n-1}) norms of the graph basis functions, from closed forms.

    n = 2: 1, cos(j t), sin(j t); n >= 3: Gegenbauer C_l^{(n-2)/2} of the polar cosine.
    """
    if n == 2:
        return np.array([2 * math.pi] + [math.pi] * (2 * N))
    lam = 0.5 * (n - 2)
    out = []
    for ell in range(N + 1):
        seg = (math.pi * 2 ** (1 - 2 * lam) * math.gamma(ell + 2 * lam)
               / (math.factorial(ell) * (ell + lam) * math.gamma(lam) ** 2))
        out.append(sphere_area(n - 2) * seg)
    return np.array(out)


def fd_constrained_eigenvalues(area, volume, x0, gram, h=1e-4):
    """Eigenvalues of the second variation of area restricted to volume-preserving directions.

    ``area`` and ``volume`` are scalar functions of the coefficient vector,
    ``gram`` the diagonal of the L^2 metric. The multiplier comes from the
    finite-difference gradients, the Hessian of area - lambda * volume from
    Richardson-extrapolated second differences, and the tangent space is the
    null space of the volume gradient.
    """
    from scipy import linalg

    gA = fd_gradient(area, x0)
    gV = fd_gradient(volume, x0)
    lam = float(gA @ gV / (gV @ gV))
    H = fd_hessian(lambda c: area(c) - lam * volume(c), x0, h)
    T = linalg.null_space(gV[None, :])
    G = np.diag(gram)
    return np.sort(linalg.eigh(T.T @ H @ T, T.T @ G @ T, eigvals_only=True)), lam
