"""Indexed-colour PNG storage for semantic and binary masks."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from beetscan.classes import NUM_CLASSES

# Display colours only; the stored pixel value is the class index.
PALETTE = [
    (0, 0, 0),        # Bg
    (46, 139, 87),    # Beet
    (255, 215, 0),    # Cut
    (124, 252, 0),    # Leaf
    (139, 69, 19),    # Soil
    (220, 20, 60),    # Dmg
    (138, 43, 226),   # Rot
]
BINARY_PALETTE = [(0, 0, 0), (255, 255, 255)]


def _check(mask: np.ndarray, limit: int) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    if arr.size and (arr.min() < 0 or arr.max() >= limit):
        raise ValueError(f"mask values must lie in [0, {limit})")
    return arr.astype(np.uint8)


def validate_semantic_mask(mask: np.ndarray, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = _check(mask, NUM_CLASSES)
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"mask shape {arr.shape} does not match expected {tuple(shape)}")
    return arr


def _save(arr: np.ndarray, path: Path, palette) -> Path:
    img = Image.fromarray(arr, mode="P")
    flat = [v for rgb in palette for v in rgb]
    img.putpalette(flat + [0] * (768 - len(flat)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")
    return path


def save_mask(mask: np.ndarray, path) -> Path:
    return _save(_check(mask, NUM_CLASSES), path, PALETTE)


def save_binary_mask(mask: np.ndarray, path) -> Path:
    return _save(_check(mask, 2), path, BINARY_PALETTE)


def load_mask(path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode not in ("P", "L", "1"):
            raise ValueError(f"{path}: expected an indexed or greyscale PNG, got mode {img.mode}")
        return np.array(img, dtype=np.uint8)


def load_binary_mask(path) -> np.ndarray:
    arr = load_mask(path)
    if arr.size and arr.max() > 1:
        raise ValueError(f"{path}: binary mask contains values other than 0/1")
    return arr.astype(bool)
