"""Area-based beet mass model: mass = projected area x mean mass per unit area."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class MassModel:
    m_bar: float            # g / mm^2
    samples: int
    mean_rel_error: float
    max_rel_error: float

    def __post_init__(self):
        if self.m_bar <= 0:
            raise ValueError("m_bar must be positive")
        if self.samples < 1:
            raise ValueError("a mass model needs at least one calibration sample")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MassModel":
        return cls(float(d["m_bar"]), int(d["samples"]), float(d["mean_rel_error"]), float(d["max_rel_error"]))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "MassModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def calibrate_mass(samples: Iterable[tuple[float, float]]) -> MassModel:
    """Fit m_bar = sum(mass) / sum(area) from (area mm^2, mass g) pairs."""
    data = np.asarray(list(samples), dtype=float).reshape(-1, 2)
    if len(data) == 0:
        raise ValueError("at least one calibration sample is required")
    if np.any(data <= 0):
        raise ValueError("calibration areas and masses must be positive")
    area, mass = data[:, 0], data[:, 1]
    m_bar = mass.sum() / area.sum()
    rel = np.abs(m_bar * area - mass) / mass
    return MassModel(float(m_bar), len(data), float(rel.mean()), float(rel.max()))


def estimate_mass(area_mm2: float, model: MassModel) -> float:
    if area_mm2 < 0:
        raise ValueError("area must be non-negative")
    return float(area_mm2) * model.m_bar


def load_mass_samples(path) -> list[tuple[float, float]]:
    """Read calibration pairs from CSV (``area_mm2,mass_g`` header) or JSON.

    JSON may be a list of ``[area, mass]`` pairs or of objects with
    ``area_mm2`` and ``mass_g`` keys.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        raw = json.loads(text)
        out = []
        for item in raw:
            if isinstance(item, dict):
                out.append((float(item["area_mm2"]), float(item["mass_g"])))
            else:
                out.append((float(item[0]), float(item[1])))
        return out
    reader = csv.DictReader(text.splitlines())
    if not reader.fieldnames or not {"area_mm2", "mass_g"} <= set(reader.fieldnames):
        raise ValueError(f"{path}: CSV needs 'area_mm2' and 'mass_g' columns")
    return [(float(row["area_mm2"]), float(row["mass_g"])) for row in reader]
