# %% [markdown]
# # From class regions to beet instances
#
# Annotators outline each visible surface of a beet separately: the skin,
# the cut crown, soil crusts, damage, rot and leaves. Instance segmentation
# needs one outline per beet instead. The merged outline is the union of all
# non-leaf regions of the instance that overlap the body, with holes closed.

# %%
import numpy as np

from beetscan.annotations import AnnotatedImage, AnnotatedRegion, MetaParams, Polygon
from beetscan.classes import Lighting, Moisture, SemanticClass, Stage
from beetscan.geometry import polygon_area, polygon_mask
from beetscan.synthesis import SynthesisReport, synthesize_instances


def rect(x0, y0, x1, y1):
    return Polygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


meta = MetaParams(Stage.Harvest, Lighting.Sunny, Moisture.Wet, "B", 3)
regions = [
    AnnotatedRegion(SemanticClass.Beet, rect(10, 10, 40, 30), 1),
    AnnotatedRegion(SemanticClass.Cut, rect(36, 14, 46, 26), 1),   # crown sticks out on the right
    AnnotatedRegion(SemanticClass.Soil, rect(12, 26, 22, 34), 1),  # crust over the lower edge
    AnnotatedRegion(SemanticClass.Leaf, rect(44, 16, 58, 20), 1),  # leaves never count
    AnnotatedRegion(SemanticClass.Soil, rect(50, 2, 56, 6), 1),    # stray blob, not touching
    AnnotatedRegion(SemanticClass.Leaf, rect(2, 40, 20, 46), 2),   # a leaf-only "instance"
]
image = AnnotatedImage("demo", "", 64, 48, "g", meta, tuple(regions))

report = SynthesisReport()
[beet] = synthesize_instances(image, report)
print("merged area:", polygon_area(beet.polygon), "px^2")
print("skipped leaf-only instances:", report.skipped)
print("dropped stray regions:", report.dropped)

# %% [markdown]
# The outline is traced along pixel edges of the merged raster, so the
# polygon rasterizes back to exactly the merged pixels.

# %%
mask = polygon_mask(beet.polygon, 64, 48)
print("pixels:", int(mask.sum()))
for row in mask[8:36:2, 8:50:2]:
    print("".join("#" if v else "." for v in row))

# %% [markdown]
# Region order in the annotation file does not matter.

# %%
shuffled = AnnotatedImage("demo", "", 64, 48, "g", meta, tuple(reversed(regions)))
[again] = synthesize_instances(shuffled)
print("order-invariant:", np.array_equal(polygon_mask(again.polygon, 64, 48), mask))
