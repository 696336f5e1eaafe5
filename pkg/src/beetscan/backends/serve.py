"""Server side of the adapter protocol.

Wraps any in-process backend so that it can be driven through
:class:`~beetscan.backends.adapter.ExternalAdapter`. A model integration only
needs to implement the three interface methods and call :func:`serve`.

    python -m beetscan.backends.serve --oracle dataset.json
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path
from typing import Callable, TextIO

import numpy as np
from PIL import Image

from beetscan.backends.base import ImageRef
from beetscan.geometry.maskio import save_binary_mask, save_mask
from beetscan.pipeline.patches import PatchTransform


def _image_ref(path: str) -> ImageRef:
    with Image.open(path) as img:
        w, h = img.size
    return ImageRef(Path(path).stem, path, w, h)


def handle(backend, request: dict, resolve: Callable[[str], ImageRef], scratch: Path, counter: list) -> dict:
    op = request.get("op")
    scratch = Path(request.get("scratch") or scratch)
    if op == "instances":
        ref = resolve(request["image"])
        items = []
        for out in backend.instances(ref):
            counter[0] += 1
            path = save_binary_mask(out.mask, scratch / f"inst_{counter[0]:06d}.png")
            items.append({"mask": str(path), "box": out.box.as_list(), "score": out.score})
        return {"ok": True, "instances": items}
    if op == "segment":
        source = request.get("source") or {}
        with Image.open(request["image"]) as img:
            patch = np.asarray(img)
        transform = PatchTransform.from_dict(source["transform"]) if "transform" in source else None
        ref = resolve(source.get("image_id") or source.get("image") or request["image"])
        mask = backend.segment(patch, ref, transform)
        counter[0] += 1
        path = save_mask(mask, scratch / f"seg_{counter[0]:06d}.png")
        return {"ok": True, "mask": str(path)}
    if op == "markers":
        ref = resolve(request["image"])
        return {
            "ok": True,
            "markers": [
                {"obb": m.obb.to_dict(), "class": m.cls.value, "score": m.score} for m in backend.markers(ref)
            ],
        }
    return {"ok": False, "error": f"unknown op {op!r}"}


def serve(backend, stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout, resolve=None) -> None:
    resolve = resolve or _image_ref
    scratch = Path(tempfile.mkdtemp(prefix="beetscan-serve-"))
    counter = [0]
    for line in stdin:
        if not line.strip():
            continue
        try:
            reply = handle(backend, json.loads(line), resolve, scratch, counter)
        except Exception as exc:  # reported to the client, never fatal
            reply = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Serve a beetscan backend over stdin/stdout.")
    parser.add_argument("--oracle", metavar="DATASET", required=True, help="answer from this annotation file")
    args = parser.parse_args(argv)

    from beetscan.annotations import load_annotations
    from beetscan.backends.oracle import OracleBackend

    dataset = load_annotations(args.oracle)
    base = Path(args.oracle).resolve().parent
    oracle = OracleBackend(dataset)

    def resolve(key: str) -> ImageRef:
        im = oracle.lookup(key)
        path = Path(im.path)
        return ImageRef(im.image_id, str(path if path.is_absolute() else base / path), im.width, im.height)

    serve(oracle, resolve=resolve)
    return 0


if __name__ == "__main__":
    sys.exit(main())
