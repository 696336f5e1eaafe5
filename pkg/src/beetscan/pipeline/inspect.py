"""Two-stage inspection of one image: detect, segment patches, fuse, measure."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from beetscan.annotations import MarkerAnnotation
from beetscan.backends.base import (
    Backends,
    ImageRef,
    InstanceOutput,
    MarkerOutput,
    check_instances,
    check_markers,
    check_patch_mask,
)
from beetscan.classes import NUM_CLASSES, MarkerClass, SemanticClass
from beetscan.geometry.maskio import save_mask
from beetscan.geometry.scale import MarkerTooSmallError, ScaleEstimate, estimate_scale
from beetscan.pipeline.fusion import PatchResult, fuse
from beetscan.pipeline.mass import MassModel, estimate_mass
from beetscan.pipeline.patches import TIERS, extract_patch


class PipelineStageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class InspectConfig:
    patch_size: tuple[int, int] = TIERS["large"]
    margin_frac: float = 0.05
    marker_dims: Mapping[MarkerClass, tuple[float, float]] = field(default_factory=dict)
    scale_residual_bound: float = 0.05
    mass_model: MassModel | None = None


@dataclass(frozen=True, eq=False)
class BeetReport:
    id: int
    score: float
    areas_px: np.ndarray                 # per-class pixel counts inside the instance mask
    pixel_count: int
    areas_mm2: np.ndarray | None = None
    total_area_mm2: float | None = None
    mass_g: float | None = None

    def to_dict(self) -> dict:
        d: dict = {
            "id": self.id,
            "score": self.score,
            "pixels": self.pixel_count,
            "areas_px": {c.name: int(self.areas_px[c]) for c in SemanticClass},
        }
        if self.areas_mm2 is not None:
            d["areas_mm2"] = {c.name: float(self.areas_mm2[c]) for c in SemanticClass}
            d["total_area_mm2"] = self.total_area_mm2
        if self.mass_g is not None:
            d["mass_g"] = self.mass_g
        return d


@dataclass(frozen=True, eq=False)
class InspectionReport:
    image_id: str
    scale: ScaleEstimate | None
    beets: list[BeetReport]
    fused: np.ndarray
    timings_ms: dict[str, float]
    dropped_pixels: int = 0
    instances: tuple[InstanceOutput, ...] = ()  # raw stage-1 outputs, in backend order
    markers: tuple[MarkerOutput, ...] = ()

    def to_dict(self, mask_name: str | None = None) -> dict:
        d: dict = {"image_id": self.image_id}
        if self.scale is not None:
            d["scale"] = self.scale.to_dict()
        d["beets"] = [b.to_dict() for b in self.beets]
        d["timings_ms"] = dict(self.timings_ms)
        if mask_name is not None:
            d["mask"] = mask_name
        return d

    def write(self, out_dir) -> Path:
        """Write ``<image_id>.json`` and the fused ``<image_id>_mask.png``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        mask_name = f"{self.image_id}_mask.png"
        save_mask(self.fused, out_dir / mask_name)
        path = out_dir / f"{self.image_id}.json"
        path.write_text(json.dumps(self.to_dict(mask_name), indent=1) + "\n", encoding="utf-8")
        return path


def select_scale(markers, config: InspectConfig) -> ScaleEstimate | None:
    """Scale from the most confident marker with known size and acceptable residual."""
    order = sorted(range(len(markers)), key=lambda i: -markers[i].score)
    for i in order:
        m = markers[i]
        dims = config.marker_dims.get(m.cls)
        if dims is None:
            continue
        corners = tuple(tuple(p) for p in m.obb.corners().tolist())
        try:
            est = estimate_scale(MarkerAnnotation(m.cls, corners), dims)
        except MarkerTooSmallError:
            continue
        if est.residual <= config.scale_residual_bound:
            return est
    return None


def inspect_image(image: ImageRef, raster: np.ndarray, backends: Backends, config: InspectConfig) -> InspectionReport:
    timings: dict[str, float] = {}

    def timed(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except PipelineStageError:
            raise
        except Exception as exc:
            raise PipelineStageError(name, exc) from exc
        finally:
            timings[name] = timings.get(name, 0.0) + 1000.0 * (time.perf_counter() - t0)

    if raster.shape[:2] != (image.height, image.width):
        raise ValueError(f"raster shape {raster.shape[:2]} does not match image {(image.height, image.width)}")

    instances = timed("instances", lambda: check_instances(backends.instances.instances(image), image))

    patches = []
    for inst in instances:
        def run(inst=inst):
            patch, transform = extract_patch(raster, inst.box, config.patch_size, config.margin_frac)
            seg = check_patch_mask(backends.segmenter.segment(patch, image, transform), transform.size)
            return PatchResult(seg, transform, inst.mask, inst.score)

        patches.append(timed("segmentation", run))
    timings.setdefault("segmentation", 0.0)

    fused = timed("fusion", lambda: fuse(patches, (image.width, image.height)))
    markers = timed("markers", lambda: check_markers(backends.markers.markers(image), image))
    scale = select_scale(markers, config)

    t0 = time.perf_counter()
    order = sorted(range(len(instances)), key=lambda i: -instances[i].score)
    beets = []
    for i in order:
        inst = instances[i]
        counts = np.bincount(fused.mask[inst.mask], minlength=NUM_CLASSES).astype(np.int64)
        n = int(inst.mask.sum())
        areas_mm2 = total_mm2 = mass = None
        if scale is not None:
            s2 = scale.mm_per_pixel ** 2
            areas_mm2 = counts * s2
            total_mm2 = n * s2
            if config.mass_model is not None:
                mass = estimate_mass(total_mm2, config.mass_model)
        beets.append(BeetReport(i, float(inst.score), counts, n, areas_mm2, total_mm2, mass))
    timings["report"] = 1000.0 * (time.perf_counter() - t0)

    return InspectionReport(
        image.image_id, scale, beets, fused.mask, timings, fused.dropped_pixels, tuple(instances), tuple(markers)
    )
