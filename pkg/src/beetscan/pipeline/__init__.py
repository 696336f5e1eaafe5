"""Two-stage orchestration: patches, fusion, scale and mass, per-beet reports."""

from beetscan.pipeline.fusion import FusedMask, PatchResult, fuse
from beetscan.pipeline.inspect import (
    BeetReport,
    InspectConfig,
    InspectionReport,
    PipelineStageError,
    inspect_image,
    select_scale,
)
from beetscan.pipeline.mass import MassModel, calibrate_mass, estimate_mass, load_mass_samples
from beetscan.pipeline.patches import TIERS, PatchTransform, extract_patch, plan_patch, warp_to_patch

__all__ = [
    "TIERS",
    "BeetReport",
    "FusedMask",
    "InspectConfig",
    "InspectionReport",
    "MassModel",
    "PatchResult",
    "PatchTransform",
    "PipelineStageError",
    "calibrate_mass",
    "estimate_mass",
    "extract_patch",
    "fuse",
    "inspect_image",
    "load_mass_samples",
    "plan_patch",
    "select_scale",
    "warp_to_patch",
]
