# %% [markdown]
# # Scoring segmentations and detections
#
# Semantic maps are scored by per-class IoU and its mean over the classes
# that occur. Training uses a smoothed Dice loss. Instances and markers are
# scored COCO-style: AP at IoU thresholds 0.50 to 0.95, averaged.

# %%
import numpy as np

from beetscan.geometry import AxisAlignedBox, OrientedBox
from beetscan.metrics import Detection, GroundTruth, confusion, dice_loss, evaluate_detections, miou, pr_curve

rng = np.random.default_rng(0)
gt = np.zeros((60, 80), np.uint8)
gt[10:50, 10:70] = 1   # beet
gt[10:20, 10:70] = 2   # cut crown on top
gt[40:50, 50:70] = 5   # a damaged patch

pred = gt.copy()
pred[18:22, 10:70] = 1           # crown boundary drawn a little high
pred[40:50, 50:60] = 1           # half the damage missed
pred[rng.random(gt.shape) < 0.02] = 4  # speckles of soil

result = miou(confusion(pred, gt))
for name, value in result.as_row().items():
    print(f"{name:>5} {'-' if np.isnan(value) else f'{100 * value:5.1f}'}")

# %% [markdown]
# Dice loss takes class probabilities. A confident correct prediction gives
# a loss near zero and a uniform guess a loss near 1 - 2/(C + 1) for a
# single-class image.

# %%
onehot = (np.arange(7)[:, None, None] == gt[None]).astype(float)
print("perfect:", dice_loss(onehot, gt))
print("uniform on one class:", dice_loss(np.full((7, 10, 10), 1 / 7), np.zeros((10, 10), int)))

# %% [markdown]
# ## Average precision
#
# Two beets and three detections, one of them a duplicate.

# %%
gts = [GroundTruth(AxisAlignedBox(0, 0, 10, 10), image_id=0), GroundTruth(AxisAlignedBox(20, 0, 30, 10), image_id=0)]
dets = [
    Detection(AxisAlignedBox(0, 0, 10, 9), score=0.9, image_id=0),
    Detection(AxisAlignedBox(1, 0, 11, 10), score=0.8, image_id=0),
    Detection(AxisAlignedBox(20, 0, 30, 7), score=0.7, image_id=0),
]
ev = evaluate_detections(dets, gts)
for t, ap in ev.ap["Beet"].items():
    print(f"AP@{t:.2f} = {ap:.3f}")
print("mAP50-95:", round(ev.map_50_95, 4))
curve = pr_curve(dets, gts, 0.5)
print("recall", curve.recall, "precision", curve.precision.round(3))

# %% [markdown]
# Markers use oriented boxes. A ruler detected a few degrees off still
# overlaps strongly.

# %%
ruler = GroundTruth(OrientedBox(100, 50, 200, 20, 0.0), "Ruler", 0)
found = Detection(OrientedBox(101, 50, 198, 20, np.radians(2)), "Ruler", 0.95, 0)
print(evaluate_detections([found], [ruler]).table())
