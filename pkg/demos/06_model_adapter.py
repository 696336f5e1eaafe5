# %% [markdown]
# # Plugging in a model through the adapter protocol
#
# Models run in their own process and exchange one JSON object per line
# with the toolkit; rasters travel as PNG files. Any program that speaks the
# protocol can be dropped in with `--adapter "<command>"`.
#
# Here the model is `color_model_adapter.py`, a nearest-colour classifier.
# We inspect a synthetic set with it, then score the fused maps.

# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from beetscan.synthetic import SYNTHETIC_MARKER_DIMS, write_synthetic_dataset

here = Path(__file__).resolve().parent
work = Path(tempfile.mkdtemp(prefix="beetscan-demo-"))
dataset = write_synthetic_dataset(work, n_images=6, seed=2, width=480, height=320)
config = work / "config.json"
config.write_text(json.dumps({"marker_dims": {c.value: list(v) for c, v in SYNTHETIC_MARKER_DIMS.items()}, "tier": "small"}))


def beetscan(*args):
    cmd = [sys.executable, "-m", "beetscan.cli", *map(str, args)]
    done = subprocess.run(cmd, capture_output=True, text=True)
    print(done.stdout.strip())
    if done.returncode:
        print(done.stderr.strip())
    return done.returncode


# %% [markdown]
# ## Inspect with the external model

# %%
adapter = f"{sys.executable} {here / 'color_model_adapter.py'} {dataset}"
beetscan("inspect", "--dataset", dataset, "--adapter", adapter, "--config", config, "--out", work / "run")
summary = json.loads((work / "run" / "summary.json").read_text())
print({k: summary[k] for k in ("images", "inspected", "beets", "images_with_scale")})

# %% [markdown]
# ## Score it
#
# Synthetic renders paint each class a flat colour and patches are sampled
# nearest-neighbour, so colour lookup recovers every label and the scores
# are perfect. A real model on field photos will not be. `--roi instances`
# scores only pixels inside the beets, which is what stage two is
# responsible for.

# %%
beetscan("evaluate", work / "run" / "predictions_seg.jsonl", dataset, "--task", "seg", "--roi", "instances", "--meta", "--out", work / "eval")
print((work / "eval" / "meta_breakdown.csv").read_text())
