"""Experiment configuration: defaults, TOML files and command-line overrides.

Precedence is CLI > file > defaults.  A TOML file may hold top-level keys
matching :class:`ExperimentConfig` fields; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .chaos_measure import check_beta
from .formats import config_hash


def _pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass
class ExperimentConfig:
    beta: float = 0.3
    backend: str = "fourier"
    modes: int = 256
    band_levels: int = 10
    level: int = 12
    strip_grid: int = 256
    grid: int = 512
    grid_ladder: list = field(default_factory=lambda: [256, 512, 1024])
    side: float = 4.0
    ell: int = 1000
    ell_ladder: list = field(default_factory=lambda: [4, 8, 16, 32])
    reps: int = 100
    seed: int = 0
    tol: float = 1e-10
    max_iter: int = 5000
    n_boundary: int = 1024
    override_beta_guard: bool = False
    # suite parameters
    p: float = 1.5
    q: list = field(default_factory=lambda: [0.5, 1.0])
    moment_levels: list = field(default_factory=lambda: [3, 4, 5, 6, 7, 8])
    cutoffs: list = field(default_factory=lambda: [256, 512, 1024, 2048])
    lags: list = field(default_factory=lambda: [0.05, 0.1, 0.25, 0.5])
    betas: list = field(default_factory=lambda: [0.3, 0.5, 1.0])
    rho: float = 0.125
    n_max: int = 4
    delta: float | None = None
    target_probability: float = 0.3
    calibration_reps: int = 400
    scaling: list = field(default_factory=lambda: [0.0, 0.125, 0.125, 0.25, 0.5])
    out: str = "runs"

    def validate(self) -> "ExperimentConfig":
        check_beta(self.beta, self.override_beta_guard)
        if self.backend not in ("fourier", "band"):
            raise ValueError(f"unknown backend {self.backend!r}")
        for name in ("modes", "strip_grid", "grid", "n_boundary"):
            if not _pow2(int(getattr(self, name))):
                raise ValueError(f"{name} must be a power of two, got {getattr(self, name)}")
        for g in self.grid_ladder:
            if not _pow2(int(g)):
                raise ValueError(f"grid ladder entries must be powers of two, got {g}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Hash of every statistic-relevant field (the output directory is excluded)."""
        d = self.to_dict()
        d.pop("out")
        return config_hash(d)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)


FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def read_toml(path) -> dict:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    unknown = set(data) - FIELDS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return data


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the TOML file, then non-``None`` overrides."""
    values = {}
    if path is not None:
        values.update(read_toml(path))
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in FIELDS:
            raise ValueError(f"unknown config key {k!r}")
        values[k] = v
    return ExperimentConfig(**values).validate()
