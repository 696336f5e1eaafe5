"""Label vocabularies shared by every module and file format."""

from __future__ import annotations

from enum import Enum, IntEnum


class SemanticClass(IntEnum):
    """Per-pixel class labels. The integer value is the raster index."""

    Bg = 0
    Beet = 1
    Cut = 2
    Leaf = 3
    Soil = 4
    Dmg = 5
    Rot = 6

    @classmethod
    def parse(cls, name: str) -> "SemanticClass":
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown semantic class label {name!r}") from None


NUM_CLASSES = len(SemanticClass)

# Low to high. A pixel covered by several regions takes the last class listed.
PAINT_ORDER: tuple[SemanticClass, ...] = (
    SemanticClass.Beet,
    SemanticClass.Soil,
    SemanticClass.Leaf,
    SemanticClass.Cut,
    SemanticClass.Dmg,
    SemanticClass.Rot,
)


class MarkerClass(str, Enum):
    Ruler = "Ruler"
    Sign = "Sign"

    @classmethod
    def parse(cls, name: str) -> "MarkerClass":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown marker class label {name!r}") from None


class Stage(str, Enum):
    Sample = "Sample"
    Harvest = "Harvest"
    Storage = "Storage"


class Lighting(str, Enum):
    Sunny = "Sunny"
    Diffuse = "Diffuse"
    Artificial = "Artificial"


class Moisture(str, Enum):
    Dry = "Dry"
    Wet = "Wet"
