"""Run configuration: one flat JSON document, CLI flags override field-for-field."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

from .kernel import _hurst_cap

__all__ = ["RunConfig", "ConfigError", "load_config"]


class ConfigError(ValueError):
    """Invalid configuration; maps to the usage-error exit code."""


@dataclass
class RunConfig:
    H: float = 0.3
    d: int = 2
    T: float = 1.0
    N: int = 256
    n_max: int = 2
    seed: int = 12061928
    samples: int = 2000
    windows: list = field(default_factory=list)  # [[s, t], ...]; defaults derived from T
    window_sizes: list = field(default_factory=list)  # scaling-study sizes
    mesh_step: int = 8
    level: int = 2
    gamma_factor: float = 0.8
    tol_q: float = 1e-8
    identity_tol: float = 1e-9
    cov_tol: float = 1e-3
    c_H: float | None = None
    outdir: str = "out"
    kernel_cache: str | None = None
    scheme: str = "plpc"
    workers: int = 1

    def __post_init__(self):
        if not self.windows:
            self.windows = [
                [self.T / 4, self.T / 2],
                [self.T / 4, 3 * self.T / 4],
                [self.T / 2, self.T],
            ]
        if not self.window_sizes:
            self.window_sizes = [self.T / 2, self.T / 4, self.T / 8, self.T / 16]

    @property
    def gamma(self) -> float:
        return self.gamma_factor * self.H

    def validate(self):
        if not (0.0 < self.H < 0.5):
            raise ConfigError(f"H out of range (0,1/2): {self.H}")
        if self.N < 2 or (self.N & (self.N - 1)) != 0:
            raise ConfigError(f"N must be a power of two >= 2 (refinement studies halve/double), got {self.N}")
        if self.T <= 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        cap = _hurst_cap(self.H)
        if not (1 <= self.n_max <= cap):
            raise ConfigError(f"n_max must satisfy 1 <= n_max <= floor(1/H) = {cap}, got {self.n_max}")
        for tol_name in ("tol_q", "identity_tol", "cov_tol"):
            if not getattr(self, tol_name) > 0:
                raise ConfigError(f"{tol_name} must be positive")
        if self.c_H is not None and not self.c_H > 0:
            raise ConfigError("c_H override must be positive")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.mesh_step < 1 or self.N % self.mesh_step != 0:
            raise ConfigError("mesh_step must divide N")
        if not (0.0 < self.gamma_factor):
            raise ConfigError("gamma_factor must be positive")
        delta = self.T / self.N
        for w in self.windows:
            if len(w) != 2:
                raise ConfigError(f"window {w} must be a pair [s, t]")
            s, t = w
            if not (0.0 <= s <= t <= self.T):
                raise ConfigError(f"window {w} must satisfy 0 <= s <= t <= T")
            for x in w:
                if abs(round(x / delta) * delta - x) > 1e-9 * max(1.0, self.T):
                    raise ConfigError(f"window endpoint {x} is not a grid point")
        for w in self.window_sizes:
            if not (0.0 < w <= self.T):
                raise ConfigError(f"window size {w} must lie in (0, T]")
        return self

    def to_json(self) -> str:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        return json.dumps(d, sort_keys=True, indent=2)


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a config from an optional JSON file plus flag overrides."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()
