"""A toy model behind the adapter protocol.

Stage two is a real (if naive) model: every patch pixel gets the class whose
reference colour is nearest. Instances and markers still come from the
annotations, so only the segmentation quality is under test.

    python demos/color_model_adapter.py dataset.json
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from beetscan.annotations import load_annotations
from beetscan.backends import ImageRef, OracleBackend
from beetscan.backends.serve import serve
from beetscan.classes import SemanticClass
from beetscan.synthetic import CLASS_RGB, MARKER_RGB

PALETTE = np.array([CLASS_RGB[c] for c in SemanticClass] + [MARKER_RGB], dtype=float)
LABELS = np.array([int(c) for c in SemanticClass] + [int(SemanticClass.Bg)], dtype=np.uint8)


class ColorModel:
    def __init__(self, oracle: OracleBackend):
        self.oracle = oracle

    def instances(self, image):
        return self.oracle.instances(image)

    def markers(self, image):
        return self.oracle.markers(image)

    def segment(self, patch, image, transform):
        rgb = patch[..., :3].astype(float)
        dist = ((rgb[..., None, :] - PALETTE) ** 2).sum(axis=-1)
        return LABELS[dist.argmin(axis=-1)]


def main(dataset_path: str) -> None:
    dataset = load_annotations(dataset_path)
    base = Path(dataset_path).resolve().parent
    oracle = OracleBackend(dataset)

    def resolve(key: str) -> ImageRef:
        im = oracle.lookup(key)
        return ImageRef(im.image_id, str(base / im.path), im.width, im.height)

    serve(ColorModel(oracle), resolve=resolve)


if __name__ == "__main__":
    main(sys.argv[1])
