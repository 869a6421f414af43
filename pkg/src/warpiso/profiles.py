"""Warping functions for the metric dr^2 + phi(r)^2 g_sphere on S^1(R) x S^{n-1}.

Every profile is 2*pi*R periodic and exposes phi, its first two derivatives
and ``excess(r) = phi(r) - min(phi)``. The excess is evaluated directly from
the closed form rather than as a difference, so perimeter gaps that are far
below machine epsilon relative to the perimeter itself stay resolvable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy.special import expit

from .errors import ConfigError

__all__ = [
    "WarpProfile",
    "ConstantProfile",
    "FlatBumpProfile",
    "AnalyticPowerProfile",
    "profile_from_dict",
    "smooth_step",
]


def _out(x):
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


def smooth_step(x):
    """C-infinity step S: 0 for x <= 0, 1 for x >= 1, flat to all orders at both ends.

    Returns ``(S, S', S'')``. Built from exp(-1/x) written as a logistic of
    ``1/(1-x) - 1/x`` so that nothing overflows near the endpoints.
    """
    x = np.asarray(x, dtype=float)
    s = np.zeros_like(x)
    ds = np.zeros_like(x)
    d2s = np.zeros_like(x)
    s[x >= 1.0] = 1.0
    inner = (x > 0.0) & (x < 1.0)
    if np.any(inner):
        xi = x[inner]
        z = 1.0 / (1.0 - xi) - 1.0 / xi
        dz = 1.0 / (1.0 - xi) ** 2 + 1.0 / xi**2
        d2z = 2.0 / (1.0 - xi) ** 3 - 2.0 / xi**3
        sig = expit(z)
        sig_c = expit(-z)
        w = sig * sig_c
        s[inner] = sig
        ds[inner] = w * dz
        d2s[inner] = w * ((sig_c - sig) * dz**2 + d2z)
    return s, ds, d2s


@dataclass(frozen=True)
class WarpProfile:
    """Base class; subclasses implement ``_eval`` returning (excess, phi', phi'')."""

    R: float = 10.0

    family: ClassVar[str] = ""

    def __post_init__(self):
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ConfigError(f"R: must be a positive finite number, got {self.R!r}")

    @property
    def period(self) -> float:
        return 2.0 * math.pi * self.R

    @property
    def phi_min(self) -> float:
        raise NotImplementedError

    @property
    def minima(self) -> tuple[float, ...]:
        """Positions of the strict minima in one fundamental domain (empty for a constant warp)."""
        return ()

    @property
    def critical_points(self) -> tuple[float, ...]:
        """Isolated zeros of phi' in one fundamental domain."""
        return self.minima

    def breakpoints(self) -> tuple[float, ...]:
        """Positions (mod period) where quadrature panels should be split."""
        return ()

    def _eval(self, r):
        raise NotImplementedError

    def phi(self, r):
        e, _, _ = self._eval(np.asarray(r, dtype=float))
        return _out(self.phi_min + e)

    def phi_scalar(self, r: float) -> float:
        """phi at a single float; a numpy-free path for scalar quadrature callbacks."""
        return float(self.phi(r))

    def dphi(self, r):
        return _out(self._eval(np.asarray(r, dtype=float))[1])

    def d2phi(self, r):
        return _out(self._eval(np.asarray(r, dtype=float))[2])

    def excess(self, r):
        """phi(r) - min(phi), computed without cancellation."""
        return _out(self._eval(np.asarray(r, dtype=float))[0])

    def evaluate(self, r):
        """Return (phi, phi', phi'') in one pass."""
        e, d1, d2 = self._eval(np.asarray(r, dtype=float))
        return _out(self.phi_min + e), _out(d1), _out(d2)

    def power_excess(self, r, p: int):
        """phi(r)**p - phi_min**p, accurate even when the excess is tiny."""
        e = np.asarray(self.excess(r), dtype=float)
        lo = self.phi_min
        hi = lo + e
        total = np.zeros_like(e)
        for j in range(p):
            total = total + hi ** (p - 1 - j) * lo**j
        return _out(e * total)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantProfile(WarpProfile):
    """phi == 1: the round product metric."""

    family: ClassVar[str] = "constant"

    @property
    def phi_min(self) -> float:
        return 1.0

    def _eval(self, r):
        z = np.zeros_like(r)
        return z, z.copy(), z.copy()

    def phi_scalar(self, r: float) -> float:
        return 1.0

    def to_dict(self) -> dict:
        return {"family": self.family, "R": self.R}


@dataclass(frozen=True)
class FlatBumpProfile(WarpProfile):
    """A dip of depth 1/k centred at r = 1 whose bottom is flat to infinite order.

    phi(r) = 1 - (1 - S(k|r - 1|)) / k, with S the smooth step. phi == 1 for
    |r - 1| >= 1/k, phi(1) = 1 - 1/k is the unique minimum, and phi is strictly
    monotone on each side of it inside the support.
    """

    k: float = 8.0

    family: ClassVar[str] = "flat_bump"

    def __post_init__(self):
        super().__post_init__()
        if not (self.k > 2.0 and math.isfinite(self.k)):
            raise ConfigError(f"k: must exceed 2 so that phi > 1/2, got {self.k!r}")
        if 1.0 / self.k >= math.pi * self.R:
            raise ConfigError("k: bump support must fit inside half a period")

    @property
    def phi_min(self) -> float:
        return 1.0 - 1.0 / self.k

    @property
    def minima(self) -> tuple[float, ...]:
        return (1.0,)

    def breakpoints(self) -> tuple[float, ...]:
        w = 1.0 / self.k
        return (1.0 - w, 1.0, 1.0 + w)

    def _eval(self, r):
        y = r - 1.0
        y = y - self.period * np.round(y / self.period)
        s, ds, d2s = smooth_step(self.k * np.abs(y))
        return s / self.k, np.sign(y) * ds, self.k * d2s

    def phi_scalar(self, r: float) -> float:
        y = r - 1.0
        y -= self.period * round(y / self.period)
        x = self.k * abs(y)
        if x >= 1.0:
            return 1.0
        if x <= 0.0:
            return 1.0 - 1.0 / self.k
        z = 1.0 / (1.0 - x) - 1.0 / x
        s = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
        return 1.0 - (1.0 - s) / self.k

    def to_dict(self) -> dict:
        return {"family": self.family, "k": self.k, "R": self.R}


@dataclass(frozen=True)
class AnalyticPowerProfile(WarpProfile):
    """phi(r) = 1 - eps + eps * sin((r - 1)/R)**(2m).

    Analytic and pi*R periodic with minima at 1 and 1 + pi*R, maxima halfway
    between; near a minimum phi(1 + x) = phi(1) + eps*(x/R)**(2m)*(1 + O(x^2)).
    """

    m: int = 1
    eps: float = 0.25

    family: ClassVar[str] = "analytic_power"

    def __post_init__(self):
        super().__post_init__()
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"m: must be a positive integer, got {self.m!r}")
        if not (0.0 < self.eps < 0.5):
            raise ConfigError(f"eps: must lie in (0, 1/2), got {self.eps!r}")

    @property
    def phi_min(self) -> float:
        return 1.0 - self.eps

    @property
    def minima(self) -> tuple[float, ...]:
        return (1.0, 1.0 + math.pi * self.R)

    @property
    def critical_points(self) -> tuple[float, ...]:
        h = 0.5 * math.pi * self.R
        return (1.0, 1.0 + h, 1.0 + 2 * h, 1.0 + 3 * h)

    def _eval(self, r):
        half = math.pi * self.R
        y = r - 1.0
        y = y - half * np.round(y / half)
        t = y / self.R
        sn, cs = np.sin(t), np.cos(t)
        s2 = sn * sn
        # sin^(2m-2) by repeated products: numpy's generic pow is several times slower
        low = np.ones_like(s2)
        for _ in range(self.m - 1):
            low = low * s2
        m2 = 2 * self.m
        e = self.eps * low * s2
        d1 = self.eps * m2 * low * sn * cs / self.R
        d2 = self.eps * m2 * low * ((m2 - 1) * cs * cs - s2) / self.R**2
        return e, d1, d2

    def phi_scalar(self, r: float) -> float:
        half = math.pi * self.R
        y = r - 1.0
        y -= half * round(y / half)
        return 1.0 - self.eps + self.eps * math.sin(y / self.R) ** (2 * self.m)

    def to_dict(self) -> dict:
        return {"family": self.family, "m": int(self.m), "eps": self.eps, "R": self.R}


_FAMILIES = {
    "constant": ConstantProfile,
    "flat_bump": FlatBumpProfile,
    "analytic_power": AnalyticPowerProfile,
}


def profile_from_dict(data: dict) -> WarpProfile:
    """Inverse of ``WarpProfile.to_dict``."""
    data = dict(data)
    try:
        cls = _FAMILIES[data.pop("family")]
    except KeyError as exc:
        raise ConfigError(f"family: expected one of {sorted(_FAMILIES)}") from exc
    allowed = {"R"} | {"constant": set(), "flat_bump": {"k"}, "analytic_power": {"m", "eps"}}[cls.family]
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unexpected profile fields for {cls.family}: {sorted(extra)}")
    return cls(**data)
