"""Strict JSON run configuration for the command-line front end."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .network import Activation, LossKind
from .schedule import (
    PRESETS,
    ApoptosisConfig,
    EndOfTraining,
    Fixed,
    FixedDegree,
    HalfLife,
    LinearRamp,
    Logarithmic,
    QuarterLife,
    RandomCount,
    RandomPoint,
)

_DATA_KEYS = {
    "idx": {"format": str, "images": str, "labels": str, "normalize": bool, "limit": int},
    "csv": {
        "format": str,
        "path": str,
        "label_column": str,
        "binary": bool,
        "skip_header": bool,
        "standardize": bool,
        "limit": int,
    },
}


@dataclass
class RunConfig:
    sizes: list = field(default_factory=list)
    activation: str = "sigmoid"
    output_activation: str = "linear"
    iterations: int | None = None
    epochs: float | None = None
    batch_size: int = 64
    lr: float = 0.1
    lr_decay: float | None = None
    momentum: float = 0.9
    loss: str | None = None
    apoptosis: str = "off"
    schedule: str = "quarter-log"
    min_gap: int = 1
    degree: str = "fixed"
    pretrain_epochs: int = 0
    pretrain_lr: float = 0.01
    train_data: dict | None = None
    test_data: dict | None = None
    workers: int = 1
    seed: int = 0
    metrics_out: str | None = None
    report_out: str | None = None
    model_out: str | None = None
    baseline: str | None = None


_TYPES: dict[str, tuple] = {
    "sizes": (list,),
    "activation": (str,),
    "output_activation": (str,),
    "iterations": (int, type(None)),
    "epochs": (int, float, type(None)),
    "batch_size": (int,),
    "lr": (int, float),
    "lr_decay": (int, float, type(None)),
    "momentum": (int, float),
    "loss": (str, type(None)),
    "apoptosis": (str,),
    "schedule": (str,),
    "min_gap": (int,),
    "degree": (str,),
    "pretrain_epochs": (int,),
    "pretrain_lr": (int, float),
    "train_data": (dict, type(None)),
    "test_data": (dict, type(None)),
    "workers": (int,),
    "seed": (int,),
    "metrics_out": (str, type(None)),
    "report_out": (str, type(None)),
    "model_out": (str, type(None)),
    "baseline": (str, type(None)),
}


def _type_ok(value: Any, types: tuple) -> bool:
    # bool is an int subclass; never accept it for numeric fields
    if isinstance(value, bool):
        return bool in types
    return isinstance(value, types)


def _check_data(key: str, source: dict) -> None:
    fmt = source.get("format")
    if fmt not in _DATA_KEYS:
        raise ConfigError(f"{key}.format", f"must be 'idx' or 'csv', got {fmt!r}")
    allowed = _DATA_KEYS[fmt]
    for k, v in source.items():
        if k not in allowed:
            raise ConfigError(f"{key}.{k}", "unknown key")
        if not _type_ok(v, (allowed[k],)):
            raise ConfigError(f"{key}.{k}", f"expected {allowed[k].__name__}, got {type(v).__name__}")
    required = ("images", "labels") if fmt == "idx" else ("path",)
    for k in required:
        if k not in source:
            raise ConfigError(f"{key}.{k}", "required")
    if source.get("label_column", "first") not in ("first", "last"):
        raise ConfigError(f"{key}.label_column", "must be 'first' or 'last'")
    if source.get("limit", 1) < 1:
        raise ConfigError(f"{key}.limit", "must be >= 1")


def from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    for k, v in raw.items():
        if k not in known:
            raise ConfigError(k, "unknown key")
        if not _type_ok(v, _TYPES[k]):
            raise ConfigError(k, f"unexpected type {type(v).__name__}")
    cfg = RunConfig(**raw)
    validate(cfg)
    return cfg


def load_config(path: "str | Path") -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return from_dict(raw)


def override(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply non-None CLI overrides and revalidate."""
    given = {k: v for k, v in overrides.items() if v is not None}
    out = replace(cfg, **given)
    validate(out)
    return out


def validate(cfg: RunConfig) -> None:
    if len(cfg.sizes) < 3:
        raise ConfigError("sizes", "need input, at least one hidden layer, and output")
    for i, s in enumerate(cfg.sizes):
        if isinstance(s, bool) or not isinstance(s, int) or s < 1:
            raise ConfigError(f"sizes[{i}]", f"layer sizes must be positive integers, got {s!r}")
    for key in ("activation", "output_activation"):
        try:
            act = Activation.parse(getattr(cfg, key))
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
        if key == "activation" and act == Activation.LINEAR:
            raise ConfigError(key, "hidden layers must be sigmoid or relu")
    if cfg.loss is not None:
        try:
            LossKind.parse(cfg.loss)
        except ValueError as exc:
            raise ConfigError("loss", str(exc)) from None
    if (cfg.iterations is None) == (cfg.epochs is None):
        raise ConfigError("iterations", "set exactly one of 'iterations' and 'epochs'")
    if cfg.iterations is not None and cfg.iterations < 1:
        raise ConfigError("iterations", "must be >= 1")
    if cfg.epochs is not None and not (math.isfinite(cfg.epochs) and cfg.epochs > 0):
        raise ConfigError("epochs", "must be > 0")
    positive = {"batch_size": cfg.batch_size, "lr": cfg.lr, "workers": cfg.workers,
                "min_gap": cfg.min_gap, "pretrain_lr": cfg.pretrain_lr}
    for key, value in positive.items():
        if not value > 0:
            raise ConfigError(key, f"must be > 0, got {value!r}")
    if not 0 <= cfg.momentum < 1:
        raise ConfigError("momentum", "must lie in [0, 1)")
    if cfg.lr_decay is not None and not 0 < cfg.lr_decay <= 1:
        raise ConfigError("lr_decay", "must lie in (0, 1]")
    if cfg.pretrain_epochs < 0:
        raise ConfigError("pretrain_epochs", "must be >= 0")
    for key in ("train_data", "test_data"):
        source = getattr(cfg, key)
        if source is not None:
            _check_data(key, source)
    apoptosis_config(cfg)  # parses mode, schedule and degree


def factor_of(mode: str) -> float | None:
    """``off`` -> None; preset name or ``factor=<f>`` -> f."""
    if mode == "off":
        return None
    if mode in PRESETS:
        return PRESETS[mode]
    if mode.startswith("factor="):
        try:
            f = float(mode.split("=", 1)[1])
        except ValueError:
            raise ConfigError("apoptosis", f"bad factor in {mode!r}") from None
        if not 1.0 < f < math.inf:
            raise ConfigError("apoptosis", f"factor must be > 1, got {f}")
        return f
    raise ConfigError("apoptosis", f"expected off, a preset ({', '.join(PRESETS)}) or factor=<f>, got {mode!r}")


def _int_suffix(key: str, text: str) -> int:
    try:
        n = int(text.split("=", 1)[1])
    except (IndexError, ValueError):
        raise ConfigError(key, f"bad integer in {text!r}") from None
    if n < 1:
        raise ConfigError(key, f"value in {text!r} must be >= 1")
    return n


def apoptosis_config(cfg: RunConfig) -> ApoptosisConfig | None:
    f = factor_of(cfg.apoptosis)
    s = cfg.schedule
    if s == "quarter-log":
        initial, subsequent = QuarterLife(), Logarithmic(cfg.min_gap)
    elif s.startswith("half-fixed="):
        initial, subsequent = HalfLife(), Fixed(_int_suffix("schedule", s))
    elif s == "random":
        initial, subsequent = RandomPoint(cfg.seed), Logarithmic(cfg.min_gap)
    elif s.startswith("random="):
        initial, subsequent = RandomPoint(cfg.seed), RandomCount(_int_suffix("schedule", s), cfg.seed)
    elif s == "end":
        initial, subsequent = EndOfTraining(), Logarithmic(cfg.min_gap)
    else:
        raise ConfigError("schedule", f"expected quarter-log, half-fixed=<n>, random[=<k>] or end, got {s!r}")
    d = cfg.degree
    try:
        if d == "fixed":
            degree = FixedDegree(f if f is not None else PRESETS["normal"])
        elif d.startswith("ramp="):
            parts = d.split("=", 1)[1].split(":")
            if len(parts) != 2:
                raise ConfigError("degree", f"expected ramp=<f0>:<f1>, got {d!r}")
            degree = LinearRamp(float(parts[0]), float(parts[1]))
        else:
            raise ConfigError("degree", f"expected fixed or ramp=<f0>:<f1>, got {d!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("degree", str(exc)) from None
    if f is None:
        return None
    return ApoptosisConfig(initial, subsequent, degree)
