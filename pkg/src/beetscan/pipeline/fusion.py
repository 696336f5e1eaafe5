"""Paste patch-level class maps back into the full-resolution image."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from beetscan.pipeline.patches import PatchTransform

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PatchResult:
    mask: np.ndarray            # semantic mask in patch frame, shape (h, w)
    transform: PatchTransform
    instance_mask: np.ndarray   # boolean stage-1 mask in image frame
    confidence: float


@dataclass(frozen=True)
class FusedMask:
    mask: np.ndarray
    dropped_pixels: int


def fuse(patches: Sequence[PatchResult], canvas: tuple[int, int]) -> FusedMask:
    """Fuse patch masks in ascending confidence; later instances overwrite earlier ones.

    Only pixels inside an instance's own stage-1 mask are written. Instance
    pixels that do not map into their patch are left untouched and counted.
    """
    width, height = canvas
    out = np.zeros((height, width), dtype=np.uint8)
    dropped = 0
    order = sorted(range(len(patches)), key=lambda i: patches[i].confidence)
    for i in order:
        p = patches[i]
        tw, th = p.transform.size
        if p.mask.shape != (th, tw):
            raise ValueError(f"patch mask shape {p.mask.shape} does not match transform size {(th, tw)}")
        if p.instance_mask.shape != (height, width):
            raise ValueError("instance mask does not match the canvas")
        rows, cols = np.nonzero(p.instance_mask)
        pv, pu, valid = p.transform.patch_index(rows, cols)
        out[rows[valid], cols[valid]] = p.mask[pv[valid], pu[valid]]
        dropped += int((~valid).sum())
    if dropped:
        log.warning("fusion dropped %d instance pixel(s) that fell outside their patch", dropped)
    return FusedMask(out, dropped)
