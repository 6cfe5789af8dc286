"""JSON application config with strict validation.

Every section is optional; omitted values fall back to defaults, and the SR
window defaults to the value for ``granularity``::

    {
      "granularity": "hour",
      "sr":        {"window": 64, "avg_filter": 3, "score_window": 21, "threshold": 3.0,
                    "estimated_points": 5, "gradient_points": 5, "log_epsilon": 1e-8,
                    "center_target": true, "tail_mode": "hold"},
      "train":     {"learning_rate": 0.01, "epochs": 20, "batch_size": 64, "seed": 0,
                    "positive_weight": 1.0, "momentum": 0.9},
      "eval":      {"delay_k": null},
      "injection": {"ratio": 0.01, "seed": 0, "local_window": null, "r_range": null},
      "io":        {"input": null, "output": null, "model": null},
      "decision_threshold": 0.5
    }

Unknown keys at any level raise :class:`ConfigError`.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .cnn import TrainConfig
from .evaluation import EvalConfig
from .spectral import DEFAULT_WINDOWS, SrConfig
from .synth import InjectionParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IoPaths:
    input: Optional[str] = None
    output: Optional[str] = None
    model: Optional[str] = None


@dataclass(frozen=True)
class AppConfig:
    granularity: str = "minute"
    sr: SrConfig = field(default_factory=SrConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    injection: InjectionParams = field(default_factory=InjectionParams)
    io: IoPaths = field(default_factory=IoPaths)
    decision_threshold: float = 0.5

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        rr = out["injection"]["r_range"]
        out["injection"]["r_range"] = list(rr) if rr is not None else None
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTIONS = {"sr": SrConfig, "train": TrainConfig, "eval": EvalConfig, "injection": InjectionParams, "io": IoPaths}


def _section(name: str, cls, raw: Any, defaults: dict[str, Any]):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    values = {**defaults, **raw}
    if name == "injection" and values.get("r_range") is not None:
        rr = values["r_range"]
        if not isinstance(rr, (list, tuple)) or len(rr) != 2:
            raise ConfigError("injection.r_range must be a [lo, hi] pair")
        values["r_range"] = tuple(rr)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from None


def parse_config(raw: Any) -> AppConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - {"granularity", "decision_threshold", *_SECTIONS}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    granularity = raw.get("granularity", "minute")
    if granularity not in DEFAULT_WINDOWS:
        raise ConfigError(f"granularity must be one of {sorted(DEFAULT_WINDOWS)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        defaults = {"window": DEFAULT_WINDOWS[granularity]} if name == "sr" else {}
        sections[name] = _section(name, cls, raw.get(name, {}), defaults)
    threshold = raw.get("decision_threshold", 0.5)
    if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
        raise ConfigError("decision_threshold must be a number")
    return AppConfig(granularity=granularity, decision_threshold=float(threshold), **sections)


def load_config(path: Optional[str | Path], **overrides) -> AppConfig:
    """Read a config file; non-None ``overrides`` replace its top-level keys."""
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    return parse_config(raw)
