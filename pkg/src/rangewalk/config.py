"""Experiment configuration: flat key-value text files with typed parsing.

Defaults are desk-scale so the default pipeline completes in minutes; the
acceptance bands live here as declared parameters rather than hard-coded
truths, since no feasible horizon reaches the asymptotic regime.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields


class ConfigError(Exception):
    """Malformed configuration file or value."""


@dataclass
class ExperimentConfig:
    dimension: int = 4
    control_dimension: int = 5
    n_grid: tuple = (1024, 4096, 16384)
    seeds_per_point: int = 30
    master_seed: int = 20240
    horizon_factor: float = 2.0
    buffer_policy: str = "log6"
    solver_rtol: float = 1e-10
    oracle_cap: int = 300000
    exact_kernel_cap: int = 2000
    # acceptance bands (config parameters by design)
    slope_band_low: float = -0.8
    slope_band_high: float = -0.25
    control_band: float = 0.15
    exit_band: float = 3.0
    heat_kernel_rel_tol: float = 0.25
    lambda_agreement_sigma: float = 2.0
    # process comparisons
    t_grid: tuple = (0.5, 1.0)
    walk_lengths: tuple = (4096, 16384)
    process_samples: int = 500
    # exit times
    exit_radii: tuple = (8, 16, 32)
    exit_samples_per_radius: int = 48
    # heat kernel
    heat_kernel_environments: int = 20
    heat_kernel_replicas: int = 2000
    heat_kernel_duration: int = 20000
    heat_kernel_x_grid: tuple = (0.0, 0.5, 1.0)
    # two-sided estimator
    two_sided_pairs: int = 2000
    two_sided_window: int = 0  # 0: use ceil(sqrt(n_max))
    threads: int = 1
    out_dir: str = "out"

    def validate(self) -> None:
        if self.dimension < 1:
            raise ConfigError("dimension must be >= 1")
        for name in ("n_grid", "t_grid", "walk_lengths", "exit_radii"):
            grid = getattr(self, name)
            if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"{name} must be nonempty and increasing")
        if self.seeds_per_point < 1:
            raise ConfigError("seeds_per_point must be >= 1")
        if self.solver_rtol <= 0:
            raise ConfigError("solver_rtol must be positive")
        if self.horizon_factor <= 1.0:
            raise ConfigError("horizon_factor must exceed 1")


def _parse_value(raw: str, example):
    raw = raw.strip()
    if isinstance(example, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(example, int):
        return int(raw)
    if isinstance(example, float):
        return float(raw)
    if isinstance(example, tuple):
        elem = example[0] if example else 1
        parts = [p for p in raw.split(",") if p.strip()]
        return tuple(type(elem)(float(p)) if isinstance(elem, int)
                     else type(elem)(p) for p in parts)
    return raw


def load_config(path) -> ExperimentConfig:
    """Parse `key = value` lines; '#' starts a comment; keys must exist."""
    cfg = ExperimentConfig()
    known = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        try:
            setattr(cfg, key, _parse_value(raw, known[key]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}")
    cfg.validate()
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical text form, reparseable and stable for hashing."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]
