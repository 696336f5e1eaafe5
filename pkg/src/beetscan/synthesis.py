"""Convert fine-grained region annotations into one Beet polygon per instance.

For every instance the Leaf regions are discarded, the largest remaining
region seeds the shape, and every region that overlaps the growing shape is
merged into it. The union is formed on the native pixel grid, holes are
filled, and the outer boundary is traced back into a polygon. Regions that
never touch the shape are dropped and reported.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from beetscan.annotations import (
    AnnotatedImage,
    AnnotatedRegion,
    Polygon,
    dump_annotations,
)
from beetscan.classes import SemanticClass
from beetscan.geometry.polygon import outline_polygon, polygon_coverage, polygon_mask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstanceAnnotation:
    image_id: str
    instance_id: int
    polygon: Polygon

    @property
    def cls(self) -> SemanticClass:
        return SemanticClass.Beet

    def mask(self, width: int, height: int) -> np.ndarray:
        return polygon_mask(self.polygon, width, height)


@dataclass
class SynthesisReport:
    # (image_id, instance_id) pairs with nothing but Leaf regions
    skipped: list[tuple[str, int]] = field(default_factory=list)
    # (image_id, instance_id, class) of regions that never overlapped their beet
    dropped: list[tuple[str, int, SemanticClass]] = field(default_factory=list)


def _region_key(region: AnnotatedRegion):
    return (region.polygon.area, int(region.cls), region.polygon.vertices)


def _merge_instance(regions: list[AnnotatedRegion], width: int, height: int):
    """Return (merged polygon, contributing regions, stray regions)."""
    ordered = sorted(regions, key=_region_key, reverse=True)
    seed, rest = ordered[0], ordered[1:]

    covs = [polygon_coverage(r.polygon.array, width, height) for r in ordered]
    nonempty = [c for c in covs if c is not None]
    if covs[0] is None or not rest:
        return seed.polygon, [seed], rest

    r0 = min(c[0] for c in nonempty)
    c0 = min(c[1] for c in nonempty)
    r1 = max(c[0] + c[2].shape[0] for c in nonempty)
    c1 = max(c[1] + c[2].shape[1] for c in nonempty)

    def window_mask(cov):
        m = np.zeros((r1 - r0, c1 - c0), dtype=bool)
        if cov is not None:
            rr, cc, local = cov
            m[rr - r0 : rr - r0 + local.shape[0], cc - c0 : cc - c0 + local.shape[1]] = local
        return m

    masks = [window_mask(c) for c in covs]
    merged = masks[0].copy()
    taken = [True] + [False] * len(rest)
    grew = True
    while grew:
        grew = False
        for i in range(1, len(ordered)):
            if not taken[i] and np.any(masks[i] & merged):
                merged |= masks[i]
                taken[i] = True
                grew = True

    contributors = [r for r, t in zip(ordered, taken) if t]
    strays = [r for r, t in zip(ordered, taken) if not t]
    if len(contributors) == 1:
        return seed.polygon, contributors, strays
    verts = [(float(x + c0), float(y + r0)) for x, y in outline_polygon(merged)]
    return Polygon(tuple(verts)), contributors, strays


def synthesize_instances(image: AnnotatedImage, report: SynthesisReport | None = None) -> list[InstanceAnnotation]:
    """One merged Beet polygon per instance that has at least one non-Leaf region."""
    out = []
    for instance_id in image.instance_ids:
        regions = [r for r in image.regions_of(instance_id) if r.cls != SemanticClass.Leaf]
        if not regions:
            if report is not None:
                report.skipped.append((image.image_id, instance_id))
            log.info("image %s instance %d has only Leaf regions; skipped", image.image_id, instance_id)
            continue
        polygon, _, strays = _merge_instance(regions, image.width, image.height)
        if report is not None:
            report.dropped.extend((image.image_id, instance_id, r.cls) for r in strays)
        out.append(InstanceAnnotation(image.image_id, instance_id, polygon))
    return out


def instance_image(image: AnnotatedImage, report: SynthesisReport | None = None) -> AnnotatedImage:
    """Copy of ``image`` whose regions are the synthesized Beet instances."""
    instances = synthesize_instances(image, report)
    regions = tuple(AnnotatedRegion(SemanticClass.Beet, inst.polygon, inst.instance_id) for inst in instances)
    return AnnotatedImage(
        image_id=image.image_id,
        path=image.path,
        width=image.width,
        height=image.height,
        group_id=image.group_id,
        meta=image.meta,
        regions=regions,
        markers=image.markers,
    )


def write_instance_dataset(
    images: Sequence[AnnotatedImage], out_path, report: SynthesisReport | None = None
) -> Path:
    """Write the one-class instance dataset in the regular annotation schema."""
    return dump_annotations([instance_image(im, report) for im in images], out_path)
