"""Problem configuration for -Δu = u^p + λu on the annulus a < |x| < b."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

from .errors import ConfigError

MIN_GRID = 16


@dataclass(frozen=True)
class ProblemConfig:
    """Physical parameters plus discretization and tolerance settings.

    ``n_r`` is the node count of the one-dimensional radial grid; the
    two-dimensional (ρ, θ) discretization uses ``n_rho`` × ``n_theta``.
    For ``N == 2`` the angular grid covers the full circle [0, 2π).
    """

    N: int = 3
    a: float = 1.0
    b: float = 2.0
    lam: float = 0.0
    p: float = 3.0
    n_r: int = 512
    n_rho: int = 128
    n_theta: int = 128
    tol_newton: float = 1e-8
    tol_root: float = 1e-9
    tol_cone: float = 1e-10
    delta_rel: float = 1e-3

    def __post_init__(self):
        self.validate()

    def validate(self):
        if isinstance(self.N, bool) or not isinstance(self.N, int) or self.N < 2:
            raise ConfigError("N", f"dimension must be an integer >= 2, got {self.N!r}")
        for name in ("a", "b", "lam", "p", "tol_newton", "tol_root", "tol_cone", "delta_rel"):
            val = getattr(self, name)
            if not isinstance(val, (int, float)) or isinstance(val, bool) or not math.isfinite(val):
                raise ConfigError(name, f"must be a finite number, got {val!r}")
        if self.a <= 0:
            raise ConfigError("a", f"inner radius must be > 0, got {self.a}")
        if self.b <= self.a:
            raise ConfigError("b", f"outer radius must exceed a={self.a}, got {self.b}")
        if self.lam > 0:
            raise ConfigError("lam", f"lambda must be <= 0, got {self.lam}")
        if self.p <= 1:
            raise ConfigError("p", f"exponent must be > 1, got {self.p}")
        for name in ("n_r", "n_rho", "n_theta"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, int) or val < MIN_GRID:
                raise ConfigError(name, f"grid size must be an integer >= {MIN_GRID}, got {val!r}")
        # tol_cone may be 0 to force exact membership checks
        for name in ("tol_newton", "tol_root", "delta_rel"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, f"tolerance must be > 0, got {getattr(self, name)}")
        if self.tol_cone < 0:
            raise ConfigError("tol_cone", f"tolerance must be >= 0, got {self.tol_cone}")

    def replace(self, **changes) -> "ProblemConfig":
        return dataclasses.replace(self, **changes)

    def with_p(self, p: float) -> "ProblemConfig":
        return dataclasses.replace(self, p=float(p))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration field")
        kwargs = {}
        for key, val in data.items():
            if known[key].type == "int" and isinstance(val, float) and val.is_integer():
                val = int(val)
            if known[key].type == "float" and isinstance(val, int) and not isinstance(val, bool):
                val = float(val)
            kwargs[key] = val
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "ProblemConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("<file>", "configuration must be a JSON object")
        return cls.from_dict(data)
