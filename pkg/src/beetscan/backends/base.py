"""Inference interfaces for the two pipeline stages and marker detection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from beetscan.classes import NUM_CLASSES, MarkerClass
from beetscan.geometry.boxes import AxisAlignedBox, OrientedBox


class BackendContractError(RuntimeError):
    """A backend returned a value that violates its interface invariants."""


@dataclass(frozen=True)
class ImageRef:
    image_id: str
    path: str
    width: int
    height: int


@dataclass(frozen=True, eq=False)
class InstanceOutput:
    mask: np.ndarray  # bool, (height, width)
    box: AxisAlignedBox
    score: float


@dataclass(frozen=True)
class MarkerOutput:
    obb: OrientedBox
    cls: MarkerClass
    score: float


@runtime_checkable
class InstanceSegmenter(Protocol):
    def instances(self, image: ImageRef) -> list[InstanceOutput]: ...


@runtime_checkable
class PatchSegmenter(Protocol):
    def segment(self, patch: np.ndarray, image: ImageRef, transform) -> np.ndarray: ...


@runtime_checkable
class MarkerDetector(Protocol):
    def markers(self, image: ImageRef) -> list[MarkerOutput]: ...


@dataclass
class Backends:
    instances: InstanceSegmenter
    segmenter: PatchSegmenter
    markers: MarkerDetector

    @classmethod
    def from_one(cls, backend) -> "Backends":
        return cls(backend, backend, backend)


def _check_score(score, what: str) -> float:
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not (0.0 <= score <= 1.0):
        raise BackendContractError(f"{what}: confidence {score!r} outside [0, 1]")
    return float(score)


def check_instances(outputs: Sequence[InstanceOutput], image: ImageRef) -> list[InstanceOutput]:
    for k, out in enumerate(outputs):
        what = f"instance {k} of {image.image_id}"
        _check_score(out.score, what)
        if out.mask.shape != (image.height, image.width):
            raise BackendContractError(f"{what}: mask shape {out.mask.shape} != image {(image.height, image.width)}")
        if out.mask.dtype != bool:
            raise BackendContractError(f"{what}: mask must be boolean")
        b = out.box
        if b.x_min < 0 or b.y_min < 0 or b.x_max > image.width or b.y_max > image.height:
            raise BackendContractError(f"{what}: box {b.as_list()} exceeds the image bounds")
    return list(outputs)


def check_patch_mask(mask: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    w, h = size
    mask = np.asarray(mask)
    if mask.shape != (h, w):
        raise BackendContractError(f"patch mask shape {mask.shape} != requested {(h, w)}")
    if mask.size and (mask.min() < 0 or mask.max() >= NUM_CLASSES):
        raise BackendContractError("patch mask holds values outside the class range")
    return mask.astype(np.uint8)


def check_markers(outputs: Sequence[MarkerOutput], image: ImageRef) -> list[MarkerOutput]:
    for k, out in enumerate(outputs):
        _check_score(out.score, f"marker {k} of {image.image_id}")
        if not isinstance(out.cls, MarkerClass):
            raise BackendContractError(f"marker {k} of {image.image_id}: unknown class {out.cls!r}")
    return list(outputs)
