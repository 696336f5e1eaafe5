"""Polygon maths, rasterization, box IoUs and metric scale recovery."""

from beetscan.geometry.boxes import (
    AxisAlignedBox,
    OrientedBox,
    aabb_iou,
    clip_convex,
    convex_hull,
    min_area_rect,
    obb_from_corners,
    obb_iou,
)
from beetscan.geometry.maskio import load_binary_mask, load_mask, save_binary_mask, save_mask
from beetscan.geometry.masks import mask_iou
from beetscan.geometry.polygon import (
    outline_polygon,
    polygon_area,
    polygon_mask,
    rasterize,
    signed_area,
    trace_outlines,
)
from beetscan.geometry.scale import MarkerTooSmallError, ScaleEstimate, estimate_scale, mask_area_mm2

__all__ = [
    "AxisAlignedBox",
    "MarkerTooSmallError",
    "OrientedBox",
    "ScaleEstimate",
    "aabb_iou",
    "clip_convex",
    "convex_hull",
    "estimate_scale",
    "load_binary_mask",
    "load_mask",
    "mask_area_mm2",
    "mask_iou",
    "min_area_rect",
    "obb_from_corners",
    "obb_iou",
    "outline_polygon",
    "polygon_area",
    "polygon_mask",
    "rasterize",
    "save_binary_mask",
    "save_mask",
    "signed_area",
    "trace_outlines",
]
