"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .graph import GammaConvention


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


@dataclass(frozen=True)
class SimConfig:
    n_nodes: int = 10
    edge_prob: float = 0.5
    dim_p: int = 3
    rows_per_node: int = 3
    epsilon_ar: float = 0.01
    rho: float = 10.0
    phi: float = 2.0
    gamma_l_convention: GammaConvention = GammaConvention.SECOND_LARGEST
    track_len: int = 300
    num_tracks: int = 200
    warm_start_eps: float = 1e-6
    warm_start_max_iters: int = 10_000_000
    mu_tol: float = 1e-12
    decay_window: int = 50
    seed: int = 0
    out_dir: Path = Path("out")

    def __post_init__(self):
        object.__setattr__(self, "gamma_l_convention", GammaConvention(self.gamma_l_convention))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        validate(self)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


_CHECKS = {
    "n_nodes": (lambda v: v >= 2, "must be >= 2"),
    "edge_prob": (lambda v: 0.0 < v <= 1.0, "must lie in (0, 1]"),
    "dim_p": (lambda v: v >= 1, "must be >= 1"),
    "rows_per_node": (lambda v: v >= 1, "must be >= 1"),
    "epsilon_ar": (lambda v: 0.0 <= v <= 1.0, "must lie in [0, 1]"),
    "rho": (lambda v: v > 0.0 and math.isfinite(v), "must be > 0"),
    "phi": (lambda v: v > 1.0 and math.isfinite(v), "must be > 1"),
    "track_len": (lambda v: v >= 1, "must be >= 1"),
    "num_tracks": (lambda v: v >= 2, "must be >= 2"),
    "warm_start_eps": (lambda v: v > 0.0, "must be > 0"),
    "warm_start_max_iters": (lambda v: v >= 0, "must be >= 0"),
    "mu_tol": (lambda v: v > 0.0, "must be > 0"),
    "decay_window": (lambda v: v >= 2, "must be >= 2"),
}


def validate(cfg: SimConfig) -> None:
    for key, (ok, msg) in _CHECKS.items():
        value = getattr(cfg, key)
        if not ok(value):
            raise ConfigError(f"{key} = {value!r}: {msg}")
    if cfg.decay_window > cfg.track_len:
        raise ConfigError(f"decay_window = {cfg.decay_window} exceeds track_len = {cfg.track_len}")


def _field_types():
    return {f.name: f.type for f in dataclasses.fields(SimConfig)}


def _coerce(key: str, raw: str, lineno: int):
    kind = _field_types()[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "Path":
            return Path(raw)
        if kind == "GammaConvention":
            return GammaConvention(raw)
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r} ({exc})") from None
    raise ConfigError(f"line {lineno}: unsupported key type for {key}")


def parse_config_text(text: str, **overrides) -> SimConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are errors."""
    known = _field_types()
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: missing value for {key}")
        values[key] = _coerce(key, raw, lineno)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig(**values)


def parse_config(path, **overrides) -> SimConfig:
    return parse_config_text(Path(path).read_text(), **overrides)


def emit_config(cfg: SimConfig) -> str:
    lines = []
    for f in dataclasses.fields(SimConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, GammaConvention):
            value = value.value
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
