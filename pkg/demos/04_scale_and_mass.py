# %% [markdown]
# # From pixels to millimetres to grams
#
# A folding-ruler element or a numbered sign of known size lies next to the
# beets. Its four side lengths give the millimetres per pixel. A mass model
# calibrated on weighed beets turns projected area into an estimated mass.

# %%
import numpy as np

from beetscan.annotations import MarkerAnnotation
from beetscan.classes import MarkerClass
from beetscan.geometry import estimate_scale, mask_area_mm2
from beetscan.pipeline import calibrate_mass, estimate_mass

# A 100 x 50 mm sign photographed at 0.5 mm/px, rotated by 30 degrees.
theta = np.radians(30)
c, s = np.cos(theta), np.sin(theta)
corners = [(400 + c * x - s * y, 300 + s * x + c * y) for x, y in ((-100, -50), (100, -50), (100, 50), (-100, 50))]
sign = MarkerAnnotation(MarkerClass.Sign, tuple(corners))
scale = estimate_scale(sign, (100.0, 50.0))
print(f"{scale.mm_per_pixel:.6f} mm/px, residual {scale.residual:.2e}")

# %% [markdown]
# Perspective shows up as unequal side ratios. The residual is the largest
# relative deviation of one side from the mean, and the pipeline discards
# markers whose residual exceeds the configured bound.

# %%
skewed = MarkerAnnotation(MarkerClass.Sign, ((0, 0), (200, 0), (190, 100), (10, 100)))
print(estimate_scale(skewed, (100.0, 50.0)))

# %% [markdown]
# ## Mass model
#
# The model is a single number: mean mass per unit of projected area,
# fitted as total mass over total area.

# %%
rng = np.random.default_rng(1)
areas = rng.uniform(12000, 30000, 25)
masses = 0.05 * areas * rng.normal(1.0, 0.07, 25)
model = calibrate_mass(zip(areas, masses))
print(f"m_bar = {model.m_bar:.5f} g/mm^2, mean error {100 * model.mean_rel_error:.1f}%, max {100 * model.max_rel_error:.1f}%")

beet_pixels = 40000
area = mask_area_mm2(beet_pixels, scale)
print(f"a {beet_pixels} px beet covers {area:.0f} mm^2 and weighs about {estimate_mass(area, model):.0f} g")
