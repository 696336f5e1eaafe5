"""Axis-aligned and oriented boxes, their IoUs, and minimum-area rectangles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from beetscan.geometry.polygon import signed_area


@dataclass(frozen=True)
class AxisAlignedBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self.as_list()}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def corners(self) -> np.ndarray:
        return np.array(
            [
                [self.x_min, self.y_min],
                [self.x_max, self.y_min],
                [self.x_max, self.y_max],
                [self.x_min, self.y_max],
            ]
        )

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "AxisAlignedBox":
        """Tight box around the pixel squares of a non-empty boolean mask."""
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        if rows.size == 0:
            raise ValueError("cannot box an empty mask")
        return cls(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


@dataclass(frozen=True)
class OrientedBox:
    """Rotated rectangle. ``angle`` is the direction of the ``width`` side.

    Construction canonicalizes so that ``width >= height`` and
    ``0 <= angle < pi`` (``< pi/2`` for squares).
    """

    cx: float
    cy: float
    width: float
    height: float
    angle: float = 0.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("oriented box needs positive width and height")
        w, h, a = self.width, self.height, self.angle
        if h > w:
            w, h, a = h, w, a + math.pi / 2
        period = math.pi / 2 if w == h else math.pi
        a = math.fmod(a, period)
        if a < 0:
            a += period
        if math.isclose(a, period, rel_tol=0.0, abs_tol=1e-12):
            a = 0.0
        object.__setattr__(self, "width", float(w))
        object.__setattr__(self, "height", float(h))
        object.__setattr__(self, "angle", float(a))

    @property
    def area(self) -> float:
        return self.width * self.height

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        ux, uy = 0.5 * self.width * c, 0.5 * self.width * s
        vx, vy = -0.5 * self.height * s, 0.5 * self.height * c
        return np.array(
            [
                [self.cx - ux - vx, self.cy - uy - vy],
                [self.cx + ux - vx, self.cy + uy - vy],
                [self.cx + ux + vx, self.cy + uy + vy],
                [self.cx - ux + vx, self.cy - uy + vy],
            ]
        )

    def to_dict(self) -> dict:
        return {"cx": self.cx, "cy": self.cy, "w": self.width, "h": self.height, "angle": self.angle}

    @classmethod
    def from_dict(cls, d: dict) -> "OrientedBox":
        return cls(float(d["cx"]), float(d["cy"]), float(d["w"]), float(d["h"]), float(d["angle"]))


def aabb_iou(a: AxisAlignedBox, b: AxisAlignedBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _ccw(poly: np.ndarray) -> np.ndarray:
    return poly if signed_area(poly) >= 0 else poly[::-1]


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: part of ``subject`` inside the convex polygon ``clip``.

    Both inputs are (N, 2) vertex arrays of either orientation.
    """
    clip = _ccw(np.asarray(clip, dtype=float))
    out = [tuple(p) for p in _ccw(np.asarray(subject, dtype=float))]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        src, out = out, []
        prev = src[-1]
        s_prev = side(prev)
        for cur in src:
            s_cur = side(cur)
            if s_cur >= 0:
                if s_prev < 0:
                    t = s_prev / (s_prev - s_cur)
                    out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif s_prev >= 0:
                t = s_prev / (s_prev - s_cur)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            prev, s_prev = cur, s_cur
    return np.array(out, dtype=float).reshape(-1, 2)


def convex_intersection_area(a: np.ndarray, b: np.ndarray) -> float:
    inter = clip_convex(a, b)
    return abs(signed_area(inter)) if len(inter) >= 3 else 0.0


def obb_iou(a: OrientedBox, b: OrientedBox) -> float:
    if a == b:
        return 1.0
    inter = convex_intersection_area(a.corners(), b.corners())
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def convex_hull(points) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise (y-up sense), collinear points dropped."""
    pts = sorted({(float(x), float(y)) for x, y in np.asarray(points, dtype=float)})
    if len(pts) < 3:
        return np.array(pts, dtype=float).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def min_area_rect(points) -> OrientedBox:
    """Minimum-area enclosing rectangle; one side is flush with a hull edge."""
    hull = convex_hull(points)
    if len(hull) < 3 or abs(signed_area(hull)) <= 1e-12:
        raise ValueError("points are degenerate (collinear or coincident)")
    best = None
    for i in range(len(hull)):
        edge = hull[(i + 1) % len(hull)] - hull[i]
        length = math.hypot(*edge)
        if length == 0:
            continue
        u = edge / length
        v = np.array([-u[1], u[0]])
        pu, pv = hull @ u, hull @ v
        w, h = pu.max() - pu.min(), pv.max() - pv.min()
        area = w * h
        if best is None or area < best[0] - 1e-9 * max(area, 1.0):
            mid_u, mid_v = 0.5 * (pu.max() + pu.min()), 0.5 * (pv.max() + pv.min())
            center = mid_u * u + mid_v * v
            best = (area, center, w, h, math.atan2(u[1], u[0]))
    _, center, w, h, angle = best
    return OrientedBox(float(center[0]), float(center[1]), float(w), float(h), angle)


def is_convex_quad(corners) -> bool:
    """True for a strictly convex, non-degenerate 4-gon given in winding order."""
    q = np.asarray(corners, dtype=float)
    if q.shape != (4, 2):
        return False
    turns = []
    for i in range(4):
        a, b, c = q[i], q[(i + 1) % 4], q[(i + 2) % 4]
        turns.append((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))
    turns = np.array(turns)
    return bool(np.all(turns > 0) or np.all(turns < 0))


def obb_from_corners(corners) -> OrientedBox:
    if not is_convex_quad(corners):
        raise ValueError("marker corners must form a convex, non-degenerate quadrilateral")
    return min_area_rect(corners)
