"""Metric scale recovery from a reference marker of known physical size."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from beetscan.classes import MarkerClass


class MarkerTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class ScaleEstimate:
    mm_per_pixel: float
    marker: MarkerClass
    residual: float

    def to_dict(self) -> dict:
        return {"mm_per_px": self.mm_per_pixel, "marker": self.marker.value, "residual": self.residual}

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleEstimate":
        return cls(float(d["mm_per_px"]), MarkerClass.parse(d["marker"]), float(d["residual"]))


def estimate_scale(marker, physical: tuple[float, float]) -> ScaleEstimate:
    """Average mm-per-pixel over the four marker sides.

    The opposite-side pair with the longer mean pixel length is matched with
    the longer physical dimension. ``residual`` is the largest relative
    deviation of a single side's ratio from the mean.
    """
    length_mm, width_mm = (float(x) for x in physical)
    if length_mm <= 0 or width_mm <= 0:
        raise ValueError("physical marker dimensions must be positive")
    long_mm, short_mm = max(length_mm, width_mm), min(length_mm, width_mm)

    c = np.asarray(marker.corners, dtype=float)
    sides = np.hypot(*(np.roll(c, -1, axis=0) - c).T)
    if np.any(sides <= 1.0):
        raise MarkerTooSmallError(f"marker side lengths {sides.round(3).tolist()} px are too small")

    # sides 0/2 and 1/3 are opposite.
    if sides[0] + sides[2] >= sides[1] + sides[3]:
        phys = np.array([long_mm, short_mm, long_mm, short_mm])
    else:
        phys = np.array([short_mm, long_mm, short_mm, long_mm])
    ratios = phys / sides
    mean = float(ratios.mean())
    residual = float(np.max(np.abs(ratios - mean)) / mean)
    return ScaleEstimate(mean, MarkerClass(marker.cls), residual)


def mask_area_mm2(pixel_area: float, scale: ScaleEstimate) -> float:
    if pixel_area < 0:
        raise ValueError("pixel area must be non-negative")
    return float(pixel_area) * scale.mm_per_pixel ** 2
