"""Pixel-level segmentation scores: confusion counts, IoU/mIoU, Dice loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from beetscan.classes import NUM_CLASSES, Lighting, Moisture, SemanticClass, Stage


class NoEvaluableClassesError(ValueError):
    def __init__(self):
        super().__init__("no evaluable classes")


@dataclass(frozen=True)
class ConfusionTotals:
    """Per-class true positive, false positive and false negative pixel counts."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @classmethod
    def zeros(cls, n_classes: int = NUM_CLASSES) -> "ConfusionTotals":
        z = np.zeros(n_classes, dtype=np.int64)
        return cls(z, z.copy(), z.copy())

    def __add__(self, other: "ConfusionTotals") -> "ConfusionTotals":
        return ConfusionTotals(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def pixels(self) -> int:
        return int(self.tp.sum() + self.fn.sum())

    def iou(self) -> np.ndarray:
        """Per-class IoU with NaN where a class is absent from both prediction and truth."""
        denom = self.tp + self.fp + self.fn
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(denom > 0, self.tp / np.maximum(denom, 1), np.nan)


def confusion(pred: np.ndarray, gt: np.ndarray, roi: np.ndarray | None = None) -> ConfusionTotals:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if roi is not None:
        roi = np.asarray(roi, dtype=bool)
        if roi.shape != gt.shape:
            raise ValueError(f"roi shape {roi.shape} does not match ground truth {gt.shape}")
        pred, gt = pred[roi], gt[roi]
    pred = pred.astype(np.int64).ravel()
    gt = gt.astype(np.int64).ravel()
    if pred.size and (pred.min() < 0 or pred.max() >= NUM_CLASSES or gt.min() < 0 or gt.max() >= NUM_CLASSES):
        raise ValueError("mask values must be class indices in [0, 7)")
    cm = np.bincount(gt * NUM_CLASSES + pred, minlength=NUM_CLASSES**2).reshape(NUM_CLASSES, NUM_CLASSES)
    tp = np.diag(cm).copy()
    return ConfusionTotals(tp, cm.sum(axis=0) - tp, cm.sum(axis=1) - tp)


@dataclass(frozen=True)
class MIoUResult:
    miou: float
    per_class: np.ndarray  # NaN marks classes excluded from the mean

    def as_row(self) -> dict[str, float]:
        row = {c.name: float(self.per_class[c]) for c in SemanticClass}
        row["Mean"] = self.miou
        return row


def _miou_of(totals: ConfusionTotals) -> MIoUResult:
    ious = totals.iou()
    valid = ~np.isnan(ious)
    if not valid.any():
        raise NoEvaluableClassesError()
    return MIoUResult(float(ious[valid].mean()), ious)


def miou(
    totals: ConfusionTotals | Sequence[ConfusionTotals],
    mode: Literal["aggregate", "per_sample"] = "aggregate",
) -> MIoUResult:
    """Mean IoU over classes present in prediction or ground truth.

    ``aggregate`` pools TP/FP/FN over all samples before dividing.
    ``per_sample`` scores every sample separately and averages the sample
    mIoUs; per-class values are then averaged over the samples where the
    class was evaluable.
    """
    if isinstance(totals, ConfusionTotals):
        totals = [totals]
    totals = list(totals)
    if not totals:
        raise NoEvaluableClassesError()
    if mode == "aggregate":
        pooled = totals[0]
        for t in totals[1:]:
            pooled = pooled + t
        return _miou_of(pooled)
    if mode == "per_sample":
        results = [_miou_of(t) for t in totals]
        stacked = np.vstack([r.per_class for r in results])
        with np.errstate(invalid="ignore"):
            counts = (~np.isnan(stacked)).sum(axis=0)
            per_class = np.where(counts > 0, np.nansum(stacked, axis=0) / np.maximum(counts, 1), np.nan)
        return MIoUResult(float(np.mean([r.miou for r in results])), per_class)
    raise ValueError(f"unknown mIoU mode {mode!r}")


def dice_loss(pred_prob: np.ndarray, gt: np.ndarray, epsilon: float = 1e-6) -> float:
    """Smoothed Dice loss averaged over the classes present in ``gt``.

    ``pred_prob`` has shape ``(n_classes, H, W)``; each class channel is
    compared with the one-hot ground truth on the flattened raster.
    """
    p = np.asarray(pred_prob, dtype=float)
    g = np.asarray(gt)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if p.ndim != 3 or p.shape[1:] != g.shape:
        raise ValueError(f"probability raster {p.shape} does not match ground truth {g.shape}")
    if g.size and (g.min() < 0 or g.max() >= p.shape[0]):
        raise ValueError("ground-truth class index outside the probability channels")
    if p.min() < 0 or p.max() > 1:
        raise ValueError("probabilities must lie in [0, 1]")
    if np.abs(p.sum(axis=0) - 1.0).max() > 1e-6:
        raise ValueError("class probabilities must sum to 1 at every pixel")

    flat_p = p.reshape(p.shape[0], -1)
    flat_g = g.ravel()
    losses = []
    for c in np.unique(flat_g):
        onehot = flat_g == c
        inter = flat_p[c][onehot].sum()
        losses.append(1.0 - (2.0 * inter + epsilon) / (flat_p[c].sum() + onehot.sum() + epsilon))
    return float(np.mean(losses))


META_CATEGORIES: dict[str, tuple] = {
    "lighting": tuple(Lighting),
    "moisture": tuple(Moisture),
    "stage": tuple(Stage),
}


@dataclass(frozen=True)
class MetaBreakdown:
    """Mean per-image mIoU for each meta-parameter value (NaN where no images)."""

    cells: dict[str, dict[str, float]]
    counts: dict[str, dict[str, int]]
    overall: float

    def rows(self) -> list[dict]:
        out = []
        for category, values in self.cells.items():
            for value, mean in values.items():
                out.append(
                    {"category": category, "value": value, "miou": mean, "images": self.counts[category][value]}
                )
        out.append({"category": "overall", "value": "", "miou": self.overall, "images": sum(self.counts["stage"].values())})
        return out


def meta_breakdown(per_image: Iterable[tuple[str, float, object]]) -> MetaBreakdown:
    """Average per-image mIoU by lighting, moisture and stage."""
    entries = list(per_image)
    cells: dict[str, dict[str, float]] = {}
    counts: dict[str, dict[str, int]] = {}
    for category, vocab in META_CATEGORIES.items():
        cells[category] = {}
        counts[category] = {}
        for value in vocab:
            scores = [m for _, m, meta in entries if getattr(meta, category) == value]
            cells[category][value.value] = float(np.mean(scores)) if scores else math.nan
            counts[category][value.value] = len(scores)
    overall = float(np.mean([m for _, m, _ in entries])) if entries else math.nan
    return MetaBreakdown(cells, counts, overall)
