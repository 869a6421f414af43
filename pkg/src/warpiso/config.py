"""Experiment configuration: YAML in, validated pydantic models out.

Schema (all lengths in units of the circle radius R's coordinate r)::

    manifold:                 # required
      n: 3                    # required, 2..7 (dimension of the manifold)
      family: flat_bump       # required: constant | flat_bump | analytic_power
      R: 10.0                 # circle radius, > 0
      k: 8.0                  # flat_bump: depth 1/k of the dip, k > 2
      m: 1                    # analytic_power: minima of order 2m, m >= 1
      eps: 0.25               # analytic_power: amplitude, 0 < eps < 1/2
    experiment:
      kind: exponent          # optional; must match the CLI subcommand if given
      seed: 0                 # PRNG seed for random sweeps
      volume_fraction: 0.5    # V0 / |M|, in (0, 1)
      slab: null              # [a, b]; default: first minimizer at V0
      modes: 16               # highest harmonic degree in spectral tables
      truncation: null        # harmonic truncation N of graph perturbations
      deltas: {lo: 1.0e-3, hi: 1.0e-1, per_decade: 16}
      zetas: {lo: 1.0e-3, hi: 5.0e-2, per_decade: 16}
      zeta_max: 0.05
      gamma: 0.0              # exponent offset tested by the ratio tables
      trials: 1000            # random perturbations (fuglede)
      cap: 0.05               # sup-norm cap of random perturbations (fuglede)
      coercivity_samples: 200
      coercivity_cap: 0.02
    output:
      dir: results
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .geometry import WarpedProduct

KINDS = ("profile", "counterexample", "spectrum", "ls-reduce", "fuglede", "exponent")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ManifoldConfig(_Strict):
    n: int = Field(ge=2, le=7)
    family: Literal["constant", "flat_bump", "analytic_power"]
    R: float = Field(10.0, gt=0)
    k: Optional[float] = Field(None, gt=2)
    m: Optional[int] = Field(None, ge=1, le=8)
    eps: Optional[float] = Field(None, gt=0, lt=0.5)

    @model_validator(mode="after")
    def _family_fields(self):
        allowed = {"constant": set(), "flat_bump": {"k"}, "analytic_power": {"m", "eps"}}[self.family]
        given = {f for f in ("k", "m", "eps") if getattr(self, f) is not None}
        extra = given - allowed
        if extra:
            raise ValueError(f"fields {sorted(extra)} do not apply to family {self.family!r}")
        return self

    def build(self) -> WarpedProduct:
        data = {"n": self.n, "family": self.family, "R": self.R}
        data.update({f: getattr(self, f) for f in ("k", "m", "eps") if getattr(self, f) is not None})
        return WarpedProduct.from_dict(data)


class DecadeGrid(_Strict):
    lo: float = Field(gt=0)
    hi: float = Field(gt=0)
    per_decade: int = Field(16, ge=2, le=200)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.hi > self.lo:
            raise ValueError("hi must exceed lo")
        return self


class ExperimentSettings(_Strict):
    kind: Optional[Literal[KINDS]] = None
    seed: int = Field(0, ge=0)
    volume_fraction: float = Field(0.5, gt=0, lt=1)
    slab: Optional[tuple[float, float]] = None
    modes: int = Field(16, ge=1, le=200)
    truncation: Optional[int] = Field(None, ge=1, le=128)
    deltas: DecadeGrid = DecadeGrid(lo=1e-3, hi=1e-1)
    zetas: DecadeGrid = DecadeGrid(lo=1e-3, hi=5e-2)
    zeta_max: float = Field(0.05, gt=0, le=0.2)
    gamma: float = Field(0.0, ge=0)
    trials: int = Field(1000, ge=1, le=1_000_000)
    cap: float = Field(0.05, gt=0, le=0.2)
    coercivity_samples: int = Field(200, ge=1, le=1_000_000)
    coercivity_cap: float = Field(0.02, gt=0, le=0.2)


class OutputSettings(_Strict):
    dir: str = "results"


class ExperimentConfig(_Strict):
    manifold: ManifoldConfig
    experiment: ExperimentSettings = ExperimentSettings()
    output: OutputSettings = OutputSettings()

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of the validated config."""
        text = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "invalid configuration:\n  " + "\n  ".join(lines)


def parse_config(data) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("invalid configuration: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(data)
