"""Crop-and-letterbox patch extraction with an exactly invertible transform."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from beetscan.geometry.boxes import AxisAlignedBox

TIERS: dict[str, tuple[int, int]] = {
    "small": (512, 288),
    "medium": (768, 448),
    "large": (1056, 576),
}
LETTERBOX_FILL = (128, 128, 128)


@dataclass(frozen=True)
class PatchTransform:
    """Maps a crop of the source image into a fixed-size patch.

    A source point ``x`` lands at patch coordinate ``pad_x + (x - x0) * scale``
    (likewise for ``y``). ``crop`` is ``(x0, y0, x1, y1)`` with exclusive upper
    bounds in whole pixels.
    """

    crop: tuple[int, int, int, int]
    size: tuple[int, int]
    scale: float
    pad_x: int
    pad_y: int

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("patch scale must be positive")

    @property
    def crop_width(self) -> int:
        return self.crop[2] - self.crop[0]

    @property
    def crop_height(self) -> int:
        return self.crop[3] - self.crop[1]

    @property
    def content_size(self) -> tuple[float, float]:
        return self.crop_width * self.scale, self.crop_height * self.scale

    def to_patch(self, x, y):
        return self.pad_x + (np.asarray(x) - self.crop[0]) * self.scale, self.pad_y + (np.asarray(y) - self.crop[1]) * self.scale

    def to_image(self, u, v):
        return self.crop[0] + (np.asarray(u) - self.pad_x) / self.scale, self.crop[1] + (np.asarray(v) - self.pad_y) / self.scale

    def source_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Nearest source row/column for each patch row/column (-1 for padding)."""
        w, h = self.size
        x, _ = self.to_image(np.arange(w) + 0.5, 0.0)
        _, y = self.to_image(0.0, np.arange(h) + 0.5)
        cols = np.floor(x).astype(np.int64)
        rows = np.floor(y).astype(np.int64)
        cols[(cols < self.crop[0]) | (cols >= self.crop[2])] = -1
        rows[(rows < self.crop[1]) | (rows >= self.crop[3])] = -1
        return rows, cols

    def patch_index(self, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nearest patch pixel for image pixels; also returns a validity mask."""
        u, v = self.to_patch(np.asarray(cols) + 0.5, np.asarray(rows) + 0.5)
        pu = np.floor(u).astype(np.int64)
        pv = np.floor(v).astype(np.int64)
        inside_crop = (
            (cols >= self.crop[0]) & (cols < self.crop[2]) & (rows >= self.crop[1]) & (rows < self.crop[3])
        )
        valid = inside_crop & (pu >= 0) & (pu < self.size[0]) & (pv >= 0) & (pv < self.size[1])
        return pv, pu, valid

    def to_dict(self) -> dict:
        return {"crop": list(self.crop), "size": list(self.size), "scale": self.scale, "pad": [self.pad_x, self.pad_y]}

    @classmethod
    def from_dict(cls, d: dict) -> "PatchTransform":
        return cls(tuple(int(v) for v in d["crop"]), tuple(int(v) for v in d["size"]), float(d["scale"]), int(d["pad"][0]), int(d["pad"][1]))


def plan_patch(
    image_size: tuple[int, int], box: AxisAlignedBox, target: tuple[int, int], margin_frac: float = 0.05
) -> PatchTransform:
    """Expand ``box`` by ``margin_frac`` per side, clamp, and fit it into ``target``."""
    width, height = image_size
    tw, th = target
    if tw <= 0 or th <= 0:
        raise ValueError("patch size must be positive")
    if margin_frac < 0:
        raise ValueError("margin_frac must be non-negative")
    bw, bh = box.x_max - box.x_min, box.y_max - box.y_min
    x0 = max(0, math.floor(box.x_min - margin_frac * bw))
    y0 = max(0, math.floor(box.y_min - margin_frac * bh))
    x1 = min(width, math.ceil(box.x_max + margin_frac * bw))
    y1 = min(height, math.ceil(box.y_max + margin_frac * bh))
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box.as_list()} is degenerate after clamping to the image")
    cw, ch = x1 - x0, y1 - y0
    scale = min(tw / cw, th / ch)
    pad_x = math.floor((tw - cw * scale) / 2)
    pad_y = math.floor((th - ch * scale) / 2)
    return PatchTransform((x0, y0, x1, y1), (tw, th), scale, max(pad_x, 0), max(pad_y, 0))


def warp_to_patch(array: np.ndarray, transform: PatchTransform, fill=0) -> np.ndarray:
    """Nearest-neighbour resample of ``array`` (H, W[, C]) into the patch frame."""
    rows, cols = transform.source_index()
    w, h = transform.size
    out = np.empty((h, w) + array.shape[2:], dtype=array.dtype)
    out[...] = fill
    rv, cv = rows >= 0, cols >= 0
    out[np.ix_(rv, cv)] = array[np.ix_(rows[rv], cols[cv])]
    return out


def extract_patch(
    image: np.ndarray,
    box: AxisAlignedBox,
    target: tuple[int, int],
    margin_frac: float = 0.05,
    fill=LETTERBOX_FILL,
) -> tuple[np.ndarray, PatchTransform]:
    image = np.asarray(image)
    transform = plan_patch((image.shape[1], image.shape[0]), box, target, margin_frac)
    if image.ndim == 2 and not np.isscalar(fill):
        fill = fill[0]
    return warp_to_patch(image, transform, fill), transform
