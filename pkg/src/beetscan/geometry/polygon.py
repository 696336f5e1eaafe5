"""Polygon area, even-odd rasterization at pixel centers, and outline tracing.

Pixel ``(row, col)`` covers the unit square ``[col, col+1] x [row, row+1]``
and is sampled at its center ``(col + 0.5, row + 0.5)``. Coordinates follow
image convention: origin top-left, x rightward, y downward.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
from scipy import ndimage

from beetscan.classes import PAINT_ORDER, SemanticClass


def _vertices(p) -> np.ndarray:
    v = np.asarray(getattr(p, "vertices", p), dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) vertex array, got shape {v.shape}")
    return v


def signed_area(p) -> float:
    """Shoelace area; positive when vertices run counter-clockwise in a y-up frame."""
    v = _vertices(p)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(p) -> float:
    return abs(signed_area(p))


def polygon_coverage(v: np.ndarray, width: int, height: int):
    """Even-odd coverage of one polygon, restricted to its bounding rows/cols.

    ``v`` is an (N, 2) float vertex array in full-image coordinates.

    Returns ``(row0, col0, local_mask)`` or ``None`` when no pixel center is covered.
    """
    xmin, ymin = v.min(axis=0)
    xmax, ymax = v.max(axis=0)
    r0 = max(0, int(np.ceil(ymin - 0.5)))
    r1 = min(height - 1, int(np.floor(ymax - 0.5)))
    c0 = max(0, int(np.ceil(xmin - 0.5)))
    c1 = min(width - 1, int(np.floor(xmax - 0.5)))
    if r1 < r0 or c1 < c0:
        return None

    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    cy = np.arange(r0, r1 + 1) + 0.5

    # Half-open rule: an edge crosses scanline cy iff exactly one endpoint lies above it.
    crosses = (y0[:, None] > cy[None, :]) != (y1[:, None] > cy[None, :])
    e_idx, r_idx = np.nonzero(crosses)
    xa, ya, xb, yb = x0[e_idx], y0[e_idx], x1[e_idx], y1[e_idx]
    xc = (xb - xa) * (cy[r_idx] - ya) / (yb - ya) + xa

    # First column whose center lies at or right of the crossing.
    k = np.ceil(xc - 0.5)
    k = np.where(k - 0.5 >= xc, k - 1, k)
    k = np.where(k + 0.5 < xc, k + 1, k)
    ncols = c1 - c0 + 1
    k = np.clip(k - c0, 0, ncols).astype(np.int64)

    toggles = np.zeros((r1 - r0 + 1, ncols + 1), dtype=np.int32)
    np.add.at(toggles, (r_idx, k), 1)
    local = (np.cumsum(toggles[:, :ncols], axis=1) & 1).astype(bool)
    return r0, c0, local


def polygon_mask(p, width: int, height: int) -> np.ndarray:
    """Boolean ``(height, width)`` mask of pixels whose centers the polygon covers."""
    if width <= 0 or height <= 0:
        raise ValueError("canvas dimensions must be positive")
    out = np.zeros((height, width), dtype=bool)
    cov = polygon_coverage(_vertices(p), width, height)
    if cov is not None:
        r0, c0, local = cov
        out[r0 : r0 + local.shape[0], c0 : c0 + local.shape[1]] = local
    return out


def rasterize(regions: Iterable, width: int, height: int) -> np.ndarray:
    """Paint class-labelled regions into a ``uint8`` semantic mask.

    Overlaps resolve by class priority (Rot over Dmg over Cut over Leaf over
    Soil over Beet); uncovered pixels stay Bg.
    """
    if width <= 0 or height <= 0:
        raise ValueError("canvas dimensions must be positive")
    mask = np.zeros((height, width), dtype=np.uint8)
    by_class: dict[SemanticClass, list] = {}
    for region in regions:
        by_class.setdefault(SemanticClass(region.cls), []).append(region)
    for cls in PAINT_ORDER:
        for region in by_class.get(cls, ()):
            cov = polygon_coverage(_vertices(region.polygon), width, height)
            if cov is None:
                continue
            r0, c0, local = cov
            window = mask[r0 : r0 + local.shape[0], c0 : c0 + local.shape[1]]
            window[local] = int(cls)
    return mask


# Directed crack edges keep the foreground on the right (screen coordinates).
_RIGHT = {(1, 0): (0, 1), (0, 1): (-1, 0), (-1, 0): (0, -1), (0, -1): (1, 0)}
_LEFT = {d: (-r[0], -r[1]) for d, r in _RIGHT.items()}


def _boundary_edges(mask: np.ndarray) -> dict[tuple[int, int], list[tuple[int, int]]]:
    padded = np.pad(mask, 1)
    core = padded[1:-1, 1:-1]
    out: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(rows, cols, start_dx, start_dy, direction):
        for r, c in zip(rows.tolist(), cols.tolist()):
            out.setdefault((c + start_dx, r + start_dy), []).append(direction)

    r, c = np.nonzero(core & ~padded[:-2, 1:-1])
    add(r, c, 0, 0, (1, 0))
    r, c = np.nonzero(core & ~padded[1:-1, 2:])
    add(r, c, 1, 0, (0, 1))
    r, c = np.nonzero(core & ~padded[2:, 1:-1])
    add(r, c, 1, 1, (-1, 0))
    r, c = np.nonzero(core & ~padded[1:-1, :-2])
    add(r, c, 0, 1, (0, -1))
    return out


def trace_outlines(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    """Trace the pixel-boundary loops of a boolean mask.

    Each loop is a list of integer lattice vertices (collinear points removed)
    running clockwise on screen. At diagonal pinch points the tracer turns
    towards the foreground, so 8-adjacent pixels end up on separate loops.
    Holes produce their own loops; callers wanting outer contours only should
    fill holes first.
    """
    edges = _boundary_edges(np.asarray(mask, dtype=bool))
    loops: list[list[tuple[int, int]]] = []
    for start in sorted(edges, key=lambda p: (p[1], p[0])):
        while edges.get(start):
            start_dir = edges[start].pop(0)
            pos, direction = start, start_dir
            loop: list[tuple[int, int]] = []
            while True:
                nxt = (pos[0] + direction[0], pos[1] + direction[1])
                outgoing = edges.get(nxt, [])
                closing = nxt == start
                choice = None
                for cand in (_RIGHT[direction], direction, _LEFT[direction]):
                    if cand in outgoing or (closing and cand == start_dir):
                        choice = cand
                        break
                if choice is None:
                    raise RuntimeError("unbalanced boundary while tracing outline")
                if choice != direction:
                    loop.append(nxt)
                if closing and choice == start_dir:
                    break
                outgoing.remove(choice)
                pos, direction = nxt, choice
            if loop and loop[-1] == start:
                loop = [loop[-1]] + loop[:-1]
            loops.append(loop)
    return loops


def outline_polygon(mask: np.ndarray) -> list[tuple[int, int]]:
    """Single vertex list whose even-odd rasterization reproduces ``mask`` with holes filled.

    Separate components are chained with zero-width bridges; a bridge is
    traversed once in each direction so it never changes crossing parity.
    """
    filled = ndimage.binary_fill_holes(np.asarray(mask, dtype=bool))
    loops = trace_outlines(filled)
    if not loops:
        raise ValueError("cannot outline an empty mask")
    anchor = loops[0][0]
    vertices: list[tuple[int, int]] = list(loops[0])
    for loop in loops[1:]:
        vertices.append(anchor)
        vertices.extend(loop)
        vertices.append(loop[0])
    return vertices
