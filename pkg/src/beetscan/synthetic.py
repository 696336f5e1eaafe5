"""Deterministic synthetic datasets for demos and end-to-end tests.

The generated images are flat-shaded renderings of annotated beets on a
coloured tarp, most with one reference marker. They exercise every code path
of the toolkit without the real photographs.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image

from beetscan.annotations import (
    AnnotatedImage,
    AnnotatedRegion,
    MarkerAnnotation,
    MetaParams,
    Polygon,
    dump_annotations,
)
from beetscan.classes import Lighting, MarkerClass, Moisture, SemanticClass, Stage
from beetscan.geometry.polygon import polygon_mask, rasterize

# Physical marker sizes used by the synthetic scenes, in mm (length, width).
SYNTHETIC_MARKER_DIMS = {MarkerClass.Ruler: (200.0, 20.0), MarkerClass.Sign: (100.0, 70.0)}
SYNTHETIC_MM_PER_PX = 1.0

CLASS_RGB = {
    SemanticClass.Bg: (70, 90, 160),
    SemanticClass.Beet: (205, 190, 150),
    SemanticClass.Cut: (240, 235, 215),
    SemanticClass.Leaf: (90, 150, 60),
    SemanticClass.Soil: (110, 80, 50),
    SemanticClass.Dmg: (230, 200, 120),
    SemanticClass.Rot: (60, 45, 35),
}
MARKER_RGB = (250, 250, 245)


def _ellipse(cx, cy, rx, ry, angle, n=28):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    x, y = rx * np.cos(t), ry * np.sin(t)
    c, s = math.cos(angle), math.sin(angle)
    return [(round(cx + c * a - s * b, 2), round(cy + s * a + c * b, 2)) for a, b in zip(x, y)]


def _rect(cx, cy, w, h, angle):
    c, s = math.cos(angle), math.sin(angle)
    pts = []
    for a, b in ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)):
        pts.append((round(cx + c * a - s * b, 3), round(cy + s * a + c * b, 3)))
    return pts


def synthetic_beet(rng: np.random.Generator, cx: float, cy: float, size: float, instance_id: int, stage: Stage):
    """Regions of one beet: body, crown cut, leaves, soil, damage and (stored) rot."""
    rx = size * rng.uniform(0.42, 0.5)
    ry = size * rng.uniform(0.24, 0.32)
    angle = rng.uniform(0, np.pi)
    c, s = math.cos(angle), math.sin(angle)

    def along(t, u=0.0):
        return cx + c * t * rx - s * u * ry, cy + s * t * rx + c * u * ry

    regions = [AnnotatedRegion(SemanticClass.Beet, Polygon.from_points(_ellipse(cx, cy, rx, ry, angle)), instance_id)]
    hx, hy = along(0.82)
    regions.append(
        AnnotatedRegion(
            SemanticClass.Cut, Polygon.from_points(_ellipse(hx, hy, ry * 0.35, ry * 0.6, angle)), instance_id
        )
    )
    if rng.random() < 0.6:
        lx, ly = along(1.05)
        regions.append(
            AnnotatedRegion(
                SemanticClass.Leaf, Polygon.from_points(_ellipse(lx, ly, ry * 0.5, ry * 0.3, angle, n=12)), instance_id
            )
        )
    for _ in range(rng.integers(1, 3)):
        sx, sy = along(rng.uniform(-0.6, 0.4), rng.uniform(-0.5, 0.5))
        regions.append(
            AnnotatedRegion(
                SemanticClass.Soil,
                Polygon.from_points(_ellipse(sx, sy, ry * rng.uniform(0.2, 0.4), ry * rng.uniform(0.15, 0.3), angle, n=10)),
                instance_id,
            )
        )
    if rng.random() < 0.5:
        dx, dy = along(rng.uniform(-0.4, 0.3), rng.uniform(0.5, 0.9))
        regions.append(
            AnnotatedRegion(SemanticClass.Dmg, Polygon.from_points(_rect(dx, dy, ry * 0.5, ry * 0.25, angle)), instance_id)
        )
    if stage == Stage.Storage or rng.random() < 0.15:
        ox, oy = along(rng.uniform(-0.8, -0.5))
        regions.append(
            AnnotatedRegion(
                SemanticClass.Rot, Polygon.from_points(_ellipse(ox, oy, ry * 0.45, ry * 0.4, angle, n=12)), instance_id
            )
        )
    return regions


def synthetic_image(
    rng: np.random.Generator,
    image_id: str,
    group_id: str,
    width: int = 800,
    height: int = 480,
    n_beets: int = 3,
    stage: Stage | None = None,
    marker: MarkerClass | None = None,
) -> AnnotatedImage:
    stage = stage or Stage(rng.choice([s.value for s in Stage]))
    lighting = Lighting.Artificial if stage == Stage.Storage and rng.random() < 0.3 else Lighting(
        rng.choice(["Sunny", "Diffuse"])
    )
    moisture = Moisture(rng.choice(["Dry", "Wet"]))
    meta = MetaParams(stage, lighting, moisture, {"Sample": "A", "Harvest": "C", "Storage": "E"}[stage.value], int(rng.integers(0, 3)))

    # Beets sit in separate cells of a grid across the upper part of the frame.
    cols = max(n_beets, 1)
    cell_w = width / cols
    size = min(cell_w, height * 0.7) * 0.8
    regions = []
    for k in range(n_beets):
        cx = cell_w * (k + 0.5) + rng.uniform(-0.05, 0.05) * cell_w
        cy = height * 0.38 + rng.uniform(-0.05, 0.05) * height
        regions.extend(synthetic_beet(rng, cx, cy, size, k + 1, stage))

    markers = ()
    if marker is not None:
        length, wid = SYNTHETIC_MARKER_DIMS[marker]
        w_px, h_px = length / SYNTHETIC_MM_PER_PX, wid / SYNTHETIC_MM_PER_PX
        ang = rng.uniform(-0.3, 0.3)
        corners = _rect(width * 0.5 + rng.uniform(-60, 60), height * 0.85, w_px, h_px, ang)
        markers = (MarkerAnnotation(marker, tuple(corners)),)

    return AnnotatedImage(
        image_id=image_id,
        path=f"images/{image_id}.png",
        width=width,
        height=height,
        group_id=group_id,
        meta=meta,
        regions=tuple(regions),
        markers=markers,
    )


def render_rgb(image: AnnotatedImage, rng: np.random.Generator | None = None) -> np.ndarray:
    """Flat-shaded RGB rendering of the annotation (with mild noise when ``rng`` is given)."""
    labels = rasterize(image.regions, image.width, image.height)
    lut = np.array([CLASS_RGB[c] for c in SemanticClass], dtype=np.uint8)
    rgb = lut[labels]
    for mk in image.markers:
        rgb[polygon_mask(mk.corners, image.width, image.height)] = MARKER_RGB
    if rng is not None:
        noise = rng.integers(-8, 9, size=rgb.shape)
        rgb = np.clip(rgb.astype(np.int16) + noise, 0, 255).astype(np.uint8)
    return rgb


def synthetic_dataset(n_images: int = 20, seed: int = 0, width: int = 800, height: int = 480) -> list[AnnotatedImage]:
    """Pairs of images share a group id, mimicking the two photographed sides."""
    rng = np.random.default_rng(seed)
    images = []
    for i in range(n_images):
        marker = [MarkerClass.Ruler, MarkerClass.Sign, None][i % 3]
        images.append(
            synthetic_image(
                rng,
                image_id=f"syn_{i:04d}",
                group_id=f"grp_{i // 2:04d}",
                width=width,
                height=height,
                n_beets=int(rng.integers(2, 5)),
                marker=marker,
            )
        )
    return images


def write_synthetic_dataset(out_dir, n_images: int = 20, seed: int = 0, width: int = 800, height: int = 480) -> Path:
    """Write ``dataset.json`` plus rendered PNGs under ``images/``; return the JSON path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    images = synthetic_dataset(n_images, seed, width, height)
    rng = np.random.default_rng(seed + 1)
    for im in images:
        Image.fromarray(render_rgb(im, rng)).save(out_dir / im.path)
    return dump_annotations(images, out_dir / "dataset.json")


# Recording sessions: (session, images, beets, lighting, moisture, marker, stage, location)
SESSIONS = [
    (0, 33, 165, "Sunny", "Dry", None, "Sample", "A"),
    (1, 92, 300, "Sunny", "Dry", "Ruler", "Sample", "A"),
    (2, 40, 120, "Diffuse", "Dry", "Ruler", "Sample", "A"),
    (3, 40, 120, "Sunny", "Dry", "Ruler", "Sample", "A"),
    (4, 4, 12, "Sunny", "Dry", "Ruler", "Sample", "A"),
    (5, 31, 93, "Sunny", "Wet", "Ruler", "Harvest", "B/C"),
    (6, 288, 864, "Diffuse", "Wet", "Ruler", "Harvest", "C"),
    (7, 282, 846, "Sunny", "Dry", "Ruler", "Harvest", "D"),
    (8, 116, 319, "Diffuse", "Wet", "Sign", "Storage", "E"),
    (9, 27, 81, "Artificial", "Wet", "Sign", "Storage", "E"),
]


def session_mirror_dataset() -> list[AnnotatedImage]:
    """Metadata-faithful stand-in for the published dataset's session table.

    Every session contributes its listed number of images and beets (spread
    as evenly as possible); each beet is a small square body region. A
    session recorded at two locations alternates between them.
    """
    images = []
    for sid, n_img, n_beets, light, moist, marker, stage, loc in SESSIONS:
        base, extra = divmod(n_beets, n_img)
        for i in range(n_img):
            k = base + (1 if i < extra else 0)
            regions = tuple(
                AnnotatedRegion(
                    SemanticClass.Beet,
                    Polygon(((10.0 + 20 * j, 10.0), (25.0 + 20 * j, 10.0), (25.0 + 20 * j, 25.0), (10.0 + 20 * j, 25.0))),
                    j + 1,
                )
                for j in range(k)
            )
            location = loc if "/" not in loc else loc.split("/")[i % 2]
            markers = ()
            if marker:
                markers = (MarkerAnnotation(MarkerClass(marker), ((10.0, 150.0), (90.0, 150.0), (90.0, 170.0), (10.0, 170.0))),)
            images.append(
                AnnotatedImage(
                    image_id=f"s{sid}_{i:03d}",
                    path="",
                    width=200,
                    height=200,
                    group_id=f"s{sid}_g{i // 2:03d}",
                    meta=MetaParams(Stage(stage), Lighting(light), Moisture(moist), location, sid),
                    regions=regions,
                    markers=markers,
                )
            )
    return images
