"""Sugar-beet image inspection: annotations, geometry, metrics and a two-stage pipeline.

Subpackages:

``beetscan.annotations``   dataset model, ingest, grouped splits, statistics
``beetscan.geometry``      polygons, rasterization, boxes, marker scale
``beetscan.synthesis``     one-class instance polygons from multi-class regions
``beetscan.metrics``       mIoU, Dice loss, COCO-style mAP
``beetscan.backends``      oracle backend and the subprocess adapter protocol
``beetscan.pipeline``      patches, fusion, mass model, ``inspect_image``
``beetscan.cli``           the ``beetscan`` command
"""

from beetscan.annotations import (
    AnnotatedImage,
    AnnotatedRegion,
    AnnotationError,
    Dataset,
    MarkerAnnotation,
    MetaParams,
    Polygon,
    dataset_stats,
    load_annotations,
    make_split,
)
from beetscan.classes import Lighting, MarkerClass, Moisture, SemanticClass, Stage
from beetscan.pipeline import InspectConfig, InspectionReport, MassModel, inspect_image
from beetscan.synthesis import synthesize_instances

__version__ = "0.1.0"

__all__ = [
    "AnnotatedImage",
    "AnnotatedRegion",
    "AnnotationError",
    "Dataset",
    "InspectConfig",
    "InspectionReport",
    "Lighting",
    "MarkerAnnotation",
    "MarkerClass",
    "MassModel",
    "MetaParams",
    "Moisture",
    "Polygon",
    "SemanticClass",
    "Stage",
    "dataset_stats",
    "inspect_image",
    "load_annotations",
    "make_split",
    "synthesize_instances",
]
