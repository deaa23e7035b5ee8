"""System configuration and the flat ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


def _float_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass
class SystemConfig:
    # inverse sensor model
    lambda_L: float = 1.7
    lambda_T: float = 7.0
    lambda_c: float = 0.9
    depth_scale: float | None = None  # None: scene bounding-box diagonal
    # planner
    T: float = 1.6
    w_I: float = 0.03
    w_J: float = 0.01
    cost_normalized: bool = False
    V_xy: tuple[float, ...] = (-0.5, -0.25, 0.0, 0.25, 0.5)
    V_z: tuple[float, ...] = (-0.3, 0.0, 0.3)
    Omega_z: tuple[float, ...] = (
        -math.pi / 4, -math.pi / 8, 0.0, math.pi / 8, math.pi / 4,
    )
    clearance_radius: float = 0.3
    workspace_min: tuple[float, float, float] = (-3.0, -3.0, 0.0)
    workspace_max: tuple[float, float, float] = (3.0, 3.0, 2.0)
    # termination
    tau: float = 0.7
    phi: float = 0.75
    # measurement prior / sensor noise
    noise_kind: str = "poissonian_gaussian"
    noise_a: float = 0.01
    noise_b: float = 0.0001
    # mapping
    spawn_stride: int = 2
    spawn_opacity: float = 0.5
    spawn_coverage: float = 0.5
    optimizer_iters: int = 10
    optimizer_lr: float = 0.02
    keyframe_cap: int = 8
    keyframes_per_iter: int = 3
    efficiency_log_base: float = 10.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (self.lambda_L > 0 and self.lambda_T > 0):
            raise ConfigError("lambda_L and lambda_T must be positive")
        if not 0.0 <= self.lambda_c <= 1.0:
            raise ConfigError("lambda_c must lie in [0, 1]")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if not 0.0 < self.phi < 1.0:
            raise ConfigError("phi must lie in (0, 1)")
        if not self.T > 0:
            raise ConfigError("primitive duration T must be positive")
        if self.depth_scale is not None and self.depth_scale <= 0:
            raise ConfigError("depth_scale must be positive")
        if self.noise_kind not in ("uniform", "poissonian_gaussian"):
            raise ConfigError(f"unknown noise_kind {self.noise_kind!r}")
        if self.noise_a < 0 or self.noise_b <= 0:
            raise ConfigError("noise model needs a >= 0 and b > 0")
        if any(lo >= hi for lo, hi in zip(self.workspace_min, self.workspace_max)):
            raise ConfigError("workspace_min must be below workspace_max")
        if self.spawn_stride < 1:
            raise ConfigError("spawn_stride must be >= 1")

    def resolved_depth_scale(self, fallback: float = 5.0) -> float:
        return fallback if self.depth_scale is None else self.depth_scale

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


_TUPLE_KEYS = {"V_xy", "V_z", "Omega_z", "workspace_min", "workspace_max"}


def _parse_value(key: str, raw: str, kind):
    if key in _TUPLE_KEYS:
        parts = [p for p in raw.replace(",", " ").split() if p]
        vals = tuple(_eval_number(p) for p in parts)
        if key.startswith("workspace") and len(vals) != 3:
            raise ConfigError(f"{key} needs three numbers")
        return vals
    if kind is bool or kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected boolean, got {raw!r}")
    if kind is int or kind == "int":
        return int(raw)
    if kind == "float | None":
        return None if raw.lower() in ("none", "auto") else _eval_number(raw)
    if kind is float or kind == "float":
        return _eval_number(raw)
    return raw


def _eval_number(text: str) -> float:
    # allow "pi/4" style entries for the yaw-rate set
    t = text.strip().lower()
    sign = -1.0 if t.startswith("-") else 1.0
    t = t.lstrip("+-")
    if "pi" in t:
        num, _, den = t.partition("/")
        coef = num.replace("pi", "").replace("*", "") or "1"
        value = float(coef) * math.pi
        if den:
            value /= float(den)
        return sign * value
    try:
        return sign * float(t)
    except ValueError as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def parse_config(text: str, base: SystemConfig | None = None) -> SystemConfig:
    base = base or SystemConfig()
    fields = {f.name: f.type for f in dataclasses.fields(SystemConfig)}
    changes = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            changes[key] = _parse_value(key, raw, fields[key])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    return dataclasses.replace(base, **changes)


def load_config(path) -> SystemConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: SystemConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            value = "auto"
        elif isinstance(value, tuple):
            value = ", ".join(repr(float(v)) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
