from beetscan.metrics.detection import (
    IOU_THRESHOLDS,
    Detection,
    DetectionEvaluation,
    GroundTruth,
    PRCurve,
    average_precision,
    default_iou,
    evaluate_detections,
    map_50_95,
    pr_curve,
)
from beetscan.metrics.segmentation import (
    ConfusionTotals,
    MetaBreakdown,
    MIoUResult,
    NoEvaluableClassesError,
    confusion,
    dice_loss,
    meta_breakdown,
    miou,
)

__all__ = [
    "IOU_THRESHOLDS",
    "ConfusionTotals",
    "Detection",
    "DetectionEvaluation",
    "GroundTruth",
    "MIoUResult",
    "MetaBreakdown",
    "NoEvaluableClassesError",
    "PRCurve",
    "average_precision",
    "confusion",
    "default_iou",
    "dice_loss",
    "evaluate_detections",
    "map_50_95",
    "meta_breakdown",
    "miou",
    "pr_curve",
]
