"""COCO-style average precision for boxes, masks and oriented boxes.

Detections are ranked by confidence (stable for ties) and greedily matched,
per image, to the unmatched ground truth with the highest IoU. Precision is
interpolated at the 101 recall points 0.00, 0.01, ..., 1.00. No area ranges
and no cap on detections per image.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

import numpy as np

from beetscan.geometry.boxes import AxisAlignedBox, OrientedBox, aabb_iou, obb_iou
from beetscan.geometry.masks import mask_iou

IOU_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_STEPS = 100  # 101 interpolation points

IoUFn = Callable[[object, object], float]


@dataclass(frozen=True, eq=False)
class Detection:
    geometry: object
    label: str = "Beet"
    score: float = 1.0
    image_id: Hashable = None

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    geometry: object
    label: str = "Beet"
    image_id: Hashable = None


def default_iou(a, b) -> float:
    if isinstance(a, AxisAlignedBox) and isinstance(b, AxisAlignedBox):
        return aabb_iou(a, b)
    if isinstance(a, OrientedBox) and isinstance(b, OrientedBox):
        return obb_iou(a, b)
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray):
        return mask_iou(a, b)
    raise TypeError(f"no IoU defined between {type(a).__name__} and {type(b).__name__}")


def _as_gts(gts) -> list[GroundTruth]:
    return [g if isinstance(g, GroundTruth) else GroundTruth(g) for g in gts]


@dataclass(frozen=True)
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray
    interpolated: np.ndarray  # precision at recall 0.00 .. 1.00

    @property
    def ap(self) -> float:
        return float(self.interpolated.mean())


class _Matcher:
    """Caches the IoU of every (detection, same-image gt) pair across thresholds."""

    def __init__(self, dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_fn: IoUFn):
        self.order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
        by_image: dict[Hashable, list[int]] = {}
        for j, g in enumerate(gts):
            by_image.setdefault(g.image_id, []).append(j)
        self.n_gt = len(gts)
        self.candidates = []
        for i in self.order:
            js = by_image.get(dets[i].image_id, [])
            self.candidates.append([(j, iou_fn(dets[i].geometry, gts[j].geometry)) for j in js])

    def true_positives(self, threshold: float) -> np.ndarray:
        matched = set()
        tp = np.zeros(len(self.order), dtype=bool)
        for k, cands in enumerate(self.candidates):
            best_j, best_iou = None, -1.0
            for j, iou in cands:
                if j not in matched and iou > best_iou:
                    best_j, best_iou = j, iou
            if best_j is not None and best_iou >= threshold:
                matched.add(best_j)
                tp[k] = True
        return tp

    def curve(self, threshold: float) -> PRCurve:
        tp = self.true_positives(threshold)
        tp_cum = np.cumsum(tp).astype(np.int64)
        fp_cum = np.cumsum(~tp).astype(np.int64)
        n = max(self.n_gt, 1)
        recall = tp_cum / n
        with np.errstate(invalid="ignore", divide="ignore"):
            precision = np.where(tp_cum + fp_cum > 0, tp_cum / np.maximum(tp_cum + fp_cum, 1), 0.0)
        envelope = np.maximum.accumulate(precision[::-1])[::-1] if len(precision) else precision
        # Recall point i/100 is reached once tp * 100 >= i * n_gt; integer test avoids float ties.
        steps = np.arange(RECALL_STEPS + 1) * self.n_gt
        first = np.searchsorted(tp_cum * RECALL_STEPS, steps, side="left")
        interp = np.zeros(RECALL_STEPS + 1)
        ok = first < len(envelope)
        interp[ok] = envelope[first[ok]]
        return PRCurve(recall, precision, interp)


def _empty_gt_ap(n_dets: int) -> float:
    return 1.0 if n_dets == 0 else 0.0


def pr_curve(dets: Sequence[Detection], gts, iou_threshold: float, iou_fn: IoUFn | None = None) -> PRCurve:
    gts = _as_gts(gts)
    return _Matcher(list(dets), gts, iou_fn or default_iou).curve(iou_threshold)


def average_precision(dets: Sequence[Detection], gts, iou_threshold: float, iou_fn: IoUFn | None = None) -> float:
    """AP of single-class detections at one IoU threshold."""
    if not (0.0 < iou_threshold <= 1.0):
        raise ValueError("IoU threshold must lie in (0, 1]")
    gts = _as_gts(gts)
    if not gts:
        return _empty_gt_ap(len(dets))
    return pr_curve(dets, gts, iou_threshold, iou_fn).ap


@dataclass(frozen=True)
class DetectionEvaluation:
    """AP per class and threshold, plus the class-mean mAP50-95."""

    ap: dict[str, dict[float, float]]
    curves: dict[str, dict[float, PRCurve]]

    def class_map(self, label: str) -> float:
        return float(np.mean(list(self.ap[label].values())))

    @property
    def map_50_95(self) -> float:
        if not self.ap:
            return 1.0
        return float(np.mean([self.class_map(c) for c in self.ap]))

    def table(self) -> dict[str, float]:
        row = {c: self.class_map(c) for c in sorted(self.ap)}
        row["Mean"] = self.map_50_95
        return row


def evaluate_detections(
    dets: Sequence[Detection], gts, iou_fn: IoUFn | None = None, thresholds: Sequence[float] = IOU_THRESHOLDS
) -> DetectionEvaluation:
    gts = _as_gts(gts)
    dets = list(dets)
    iou_fn = iou_fn or default_iou
    labels = sorted({d.label for d in dets} | {g.label for g in gts})
    ap: dict[str, dict[float, float]] = {}
    curves: dict[str, dict[float, PRCurve]] = {}
    for label in labels:
        cd = [d for d in dets if d.label == label]
        cg = [g for g in gts if g.label == label]
        ap[label] = {}
        curves[label] = {}
        if not cg:
            for t in thresholds:
                ap[label][t] = _empty_gt_ap(len(cd))
            continue
        matcher = _Matcher(cd, cg, iou_fn)
        for t in thresholds:
            curve = matcher.curve(t)
            curves[label][t] = curve
            ap[label][t] = curve.ap
    return DetectionEvaluation(ap, curves)


def map_50_95(dets: Sequence[Detection], gts, iou_fn: IoUFn | None = None) -> float:
    """Mean AP over IoU thresholds 0.50:0.05:0.95, averaged over classes."""
    return evaluate_detections(dets, gts, iou_fn).map_50_95
