"""Tool configuration: one JSON file plus command-line overrides.

Example file::

    {
      "marker_dims": {"Ruler": [200, 20], "Sign": [100, 70]},
      "tier": "large",
      "margin_frac": 0.05,
      "scale_residual_bound": 0.05,
      "adapter": {"command": "python my_model.py", "timeout": 60},
      "split": {"ratios": [0.7, 0.15, 0.15], "seed": 0},
      "dice_epsilon": 1e-6,
      "mass_model": "mass.json",
      "workers": 1
    }

``adapter.command`` may also be a mapping with separate ``instances``,
``segment`` and ``markers`` command lines. Relative paths are resolved
against the directory of the config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from beetscan.classes import MarkerClass
from beetscan.pipeline.patches import TIERS

ADAPTER_ROLES = ("instances", "segment", "markers")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ToolConfig:
    marker_dims: Mapping[MarkerClass, tuple[float, float]] = field(default_factory=dict)
    tier: str = "large"
    margin_frac: float = 0.05
    scale_residual_bound: float = 0.05
    adapter_commands: Mapping[str, str] = field(default_factory=dict)
    adapter_timeout: float = 60.0
    split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0
    dice_epsilon: float = 1e-6
    mass_model: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ConfigError(f"tier must be one of {sorted(TIERS)}, got {self.tier!r}")
        for cls, dims in self.marker_dims.items():
            if len(dims) != 2 or min(dims) <= 0:
                raise ConfigError(f"marker dimensions for {cls.value} must be two positive numbers")
        if self.margin_frac < 0:
            raise ConfigError("margin_frac must be non-negative")
        for name in ("scale_residual_bound", "adapter_timeout", "dice_epsilon"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if len(self.split_ratios) != 3 or min(self.split_ratios) < 0 or sum(self.split_ratios) <= 0:
            raise ConfigError("split ratios must be three non-negative numbers with a positive sum")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        unknown = set(self.adapter_commands) - set(ADAPTER_ROLES)
        if unknown:
            raise ConfigError(f"unknown adapter roles: {sorted(unknown)}")

    @property
    def patch_size(self) -> tuple[int, int]:
        return TIERS[self.tier]

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Path | None = None) -> "ToolConfig":
        known = {"marker_dims", "tier", "margin_frac", "scale_residual_bound", "adapter", "split", "dice_epsilon", "mass_model", "workers"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw: dict = {}
        try:
            if "marker_dims" in d:
                kw["marker_dims"] = {MarkerClass.parse(k): (float(v[0]), float(v[1])) for k, v in d["marker_dims"].items()}
            if "tier" in d:
                kw["tier"] = str(d["tier"])
            for key in ("margin_frac", "scale_residual_bound", "dice_epsilon"):
                if key in d:
                    kw[key] = float(d[key])
            if "workers" in d:
                kw["workers"] = int(d["workers"])
            adapter = d.get("adapter") or {}
            if "command" in adapter:
                cmd = adapter["command"]
                kw["adapter_commands"] = dict(cmd) if isinstance(cmd, Mapping) else {r: cmd for r in ADAPTER_ROLES}
            if "timeout" in adapter:
                kw["adapter_timeout"] = float(adapter["timeout"])
            split = d.get("split") or {}
            if "ratios" in split:
                kw["split_ratios"] = tuple(float(r) for r in split["ratios"])
            if "seed" in split:
                kw["seed"] = int(split["seed"])
            if d.get("mass_model") is not None:
                path = Path(d["mass_model"])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                kw["mass_model"] = str(path)
        except ConfigError:
            raise
        except (TypeError, ValueError, IndexError, AttributeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ToolConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data, base_dir=path.resolve().parent)

    def to_dict(self) -> dict:
        d: dict = {
            "marker_dims": {c.value: list(v) for c, v in self.marker_dims.items()},
            "tier": self.tier,
            "margin_frac": self.margin_frac,
            "scale_residual_bound": self.scale_residual_bound,
            "adapter": {"command": dict(self.adapter_commands), "timeout": self.adapter_timeout},
            "split": {"ratios": list(self.split_ratios), "seed": self.seed},
            "dice_epsilon": self.dice_epsilon,
            "workers": self.workers,
        }
        if self.mass_model is not None:
            d["mass_model"] = self.mass_model
        return d

    def override(self, **flags) -> "ToolConfig":
        """Apply flags that were given (``None`` means "not given")."""
        changes = {k: v for k, v in flags.items() if v is not None}
        if "adapter" in changes:
            cmd = changes.pop("adapter")
            changes["adapter_commands"] = {r: cmd for r in ADAPTER_ROLES}
        return replace(self, **changes)
