"""Pipeline configuration and its flat ``key = value`` file format.

Keys are ``section.field`` for sub-configs (``circuit.v_in``, ``opt.r_min``,
``layout.iterations``, ``loss_weights.w_pos``, ``material.layer_height``,
``train.phase2_epochs``) and bare names for ``clock_period`` and ``rng_seed``.
``rng_seed`` seeds every stage unless a stage seed is set explicitly.
"""

from __future__ import annotations

import dataclasses
import json
import re
from decimal import Decimal, InvalidOperation
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .adjust import LossWeights, TrainConfig
from .circuit import CircuitSpec
from .fabrication import MaterialProfile
from .layout import LayoutConfig
from .optimize import OptimizationConfig


class ConfigError(ValueError):
    pass


SECTIONS = {
    "circuit": CircuitSpec,
    "opt": OptimizationConfig,
    "layout": LayoutConfig,
    "loss_weights": LossWeights,
    "material": MaterialProfile,
    "train": TrainConfig,
}
# stage seed fields that follow the top-level rng_seed
SEED_FIELDS = {"opt": "rng_seed", "layout": "rng_seed", "train": "seed"}

_UNITS = {"s": 0, "ms": -3, "us": -6, "µs": -6, "ns": -9, "ps": -12}  # decimal exponents


def parse_seconds(text) -> float:
    """``"2.1us"`` -> 2.1e-6; bare numbers are seconds."""
    if isinstance(text, (int, float)):
        return float(text)
    m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*([a-zµ]*)\s*", str(text))
    if not m or m.group(2) not in ("",) + tuple(_UNITS):
        raise ConfigError(f"cannot parse duration {text!r}")
    try:
        # decimal scaling keeps "21ns" at exactly 2.1e-08
        return float(Decimal(m.group(1)).scaleb(_UNITS[m.group(2) or "s"]))
    except InvalidOperation as exc:
        raise ConfigError(f"cannot parse duration {text!r}") from exc


@dataclass(frozen=True)
class PipelineConfig:
    circuit: CircuitSpec = field(default_factory=CircuitSpec)
    opt: OptimizationConfig = field(default_factory=OptimizationConfig)
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    material: MaterialProfile = field(default_factory=MaterialProfile)
    train: TrainConfig = field(default_factory=TrainConfig)
    clock_period: float = 21e-9
    rng_seed: int = 0

    def __post_init__(self):
        if not self.clock_period > 0:
            raise ConfigError("clock_period must be positive")

    def to_json(self) -> dict:
        out = {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}
        out["clock_period"] = self.clock_period
        out["rng_seed"] = self.rng_seed
        if out["opt"]["init"] is not None:
            out["opt"]["init"] = list(out["opt"]["init"])
        return out

    def to_text(self) -> str:
        lines = []
        for key, value in sorted(flatten(self).items()):
            if value is None:
                continue
            if isinstance(value, (list, tuple)):
                value = ",".join(repr(float(v)) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def flatten(cfg: PipelineConfig) -> dict:
    data = cfg.to_json()
    flat = {}
    for name in SECTIONS:
        for k, v in data[name].items():
            flat[f"{name}.{k}"] = v
    flat["clock_period"] = data["clock_period"]
    flat["rng_seed"] = data["rng_seed"]
    return flat


def known_keys() -> list[str]:
    return sorted(flatten(PipelineConfig()))


def _coerce(raw: str, hint, key: str):
    raw = raw.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union and type(None) in args:
        if raw.lower() in ("", "none", "null"):
            return None
        hint = next(a for a in args if a is not type(None))
        origin = typing.get_origin(hint)
    try:
        if hint is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is str:
            return raw
        if origin is not None or hint is typing.Sequence:
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    raise ConfigError(f"unsupported type for {key}")


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def build_config(values: dict) -> PipelineConfig:
    """PipelineConfig from ``{"section.field": str | value}``; unknown keys are errors."""
    grouped: dict[str, dict] = {name: {} for name in SECTIONS}
    top: dict = {}
    for key, raw in values.items():
        section, _, fname = key.partition(".")
        if fname:
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section in {key!r}")
            hints = _hints(SECTIONS[section])
            if fname not in hints:
                raise ConfigError(f"unknown config key {key!r}")
            val = _coerce(raw, hints[fname], key) if isinstance(raw, str) else raw
            grouped[section][fname] = val
        elif key == "clock_period":
            top[key] = parse_seconds(raw)
        elif key == "rng_seed":
            top[key] = int(raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    seed = top.get("rng_seed", 0)
    for section, fname in SEED_FIELDS.items():
        grouped[section].setdefault(fname, seed)
    try:
        subs = {name: SECTIONS[name](**grouped[name]) for name in SECTIONS}
        return PipelineConfig(**subs, **top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config_text(text: str) -> dict:
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = raw
    return values


def load_config(path=None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Read a config file (optional) and apply overrides on top."""
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update(overrides or {})
    return build_config(values)


def config_json(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.to_json(), indent=2, sort_keys=True)
