"""Ground-truth backend: answers every query from the annotations themselves."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np

from beetscan.annotations import AnnotatedImage
from beetscan.backends.base import ImageRef, InstanceOutput, MarkerOutput
from beetscan.geometry.boxes import AxisAlignedBox, obb_from_corners
from beetscan.geometry.polygon import polygon_mask, rasterize
from beetscan.pipeline.patches import PatchTransform, warp_to_patch
from beetscan.synthesis import synthesize_instances


class UnknownImageError(KeyError):
    pass


class OracleBackend:
    """Implements all three inference interfaces with confidence 1.0 throughout."""

    def __init__(self, images: Iterable[AnnotatedImage]):
        self._by_id = {im.image_id: im for im in images}
        self._by_path = {str(Path(im.path)): im for im in self._by_id.values() if im.path}
        self._gt: dict[str, np.ndarray] = {}
        self._inst: dict[str, list[InstanceOutput]] = {}

    def lookup(self, image: ImageRef | str) -> AnnotatedImage:
        key = image.image_id if isinstance(image, ImageRef) else image
        if key in self._by_id:
            return self._by_id[key]
        path = image.path if isinstance(image, ImageRef) else image
        for candidate in (str(Path(path)), Path(path).name):
            for p, im in self._by_path.items():
                if p == candidate or Path(p).name == candidate:
                    return im
        raise UnknownImageError(f"oracle has no annotations for image {key!r}")

    def ref(self, image_id: str, path: str | None = None) -> ImageRef:
        im = self.lookup(image_id)
        return ImageRef(im.image_id, path or im.path, im.width, im.height)

    def ground_truth(self, image: ImageRef | str) -> np.ndarray:
        im = self.lookup(image)
        if im.image_id not in self._gt:
            self._gt[im.image_id] = rasterize(im.regions, im.width, im.height)
        return self._gt[im.image_id]

    def instances(self, image: ImageRef) -> list[InstanceOutput]:
        im = self.lookup(image)
        if im.image_id not in self._inst:
            outs = []
            for inst in synthesize_instances(im):
                mask = polygon_mask(inst.polygon, im.width, im.height)
                if not mask.any():
                    continue
                outs.append(InstanceOutput(mask, AxisAlignedBox.from_mask(mask), 1.0))
            self._inst[im.image_id] = outs
        return list(self._inst[im.image_id])

    def segment(self, patch: np.ndarray, image: ImageRef, transform: PatchTransform) -> np.ndarray:
        return warp_to_patch(self.ground_truth(image), transform, fill=0)

    def markers(self, image: ImageRef) -> list[MarkerOutput]:
        im = self.lookup(image)
        return [MarkerOutput(obb_from_corners(m.corners), m.cls, 1.0) for m in im.markers]
