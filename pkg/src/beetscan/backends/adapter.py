"""Run a model in a child process and talk to it in line-delimited JSON.

Each request is one JSON object on the child's stdin; the child answers with
one JSON object on stdout. Rasters travel as PNG files in a scratch directory
and are referenced by path.

Requests::

    {"op": "instances", "image": "<path>", "scratch": "<dir>"}
    {"op": "segment", "image": "<patch png>", "patch_size": [w, h], "scratch": "<dir>",
     "source": {"image_id": ..., "image": "<path>", "transform": {...}}}
    {"op": "markers", "image": "<path>", "scratch": "<dir>"}

Responses::

    {"ok": true, "instances": [{"mask": "<png>", "box": [x0, y0, x1, y1], "score": s}]}
    {"ok": true, "mask": "<png>"}
    {"ok": true, "markers": [{"obb": {"cx", "cy", "w", "h", "angle"}, "class": "Ruler|Sign", "score": s}]}
    {"ok": false, "error": "..."}

One request is in flight at a time per adapter process.
"""

from __future__ import annotations

import json
import queue
import shlex
import shutil
import subprocess
import tempfile
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from beetscan.backends.base import (
    BackendContractError,
    ImageRef,
    InstanceOutput,
    MarkerOutput,
    check_instances,
    check_markers,
    check_patch_mask,
)
from beetscan.classes import MarkerClass
from beetscan.geometry.boxes import AxisAlignedBox, OrientedBox
from beetscan.geometry.maskio import load_binary_mask, load_mask


class AdapterError(RuntimeError):
    pass


class AdapterProtocolError(AdapterError):
    pass


class AdapterTimeoutError(AdapterError):
    pass


_EXCERPT = 200


def _excerpt(text: str) -> str:
    text = text.strip()
    return text if len(text) <= _EXCERPT else text[:_EXCERPT] + "..."


@dataclass(frozen=True)
class AdapterConfig:
    command: Sequence[str] | str
    timeout: float = 60.0
    scratch_dir: str | None = None

    def argv(self) -> list[str]:
        return shlex.split(self.command) if isinstance(self.command, str) else list(self.command)


class ExternalAdapter:
    """Client side of the adapter protocol; implements all three interfaces."""

    def __init__(self, config: AdapterConfig):
        self.config = config
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._stderr: deque[str] = deque(maxlen=20)
        self._own_scratch = config.scratch_dir is None
        self.scratch = Path(config.scratch_dir or tempfile.mkdtemp(prefix="beetscan-adapter-"))
        self.scratch.mkdir(parents=True, exist_ok=True)
        self._counter = 0

    # -- process management --------------------------------------------------

    def start(self) -> "ExternalAdapter":
        if self._proc is not None:
            return self
        try:
            self._proc = subprocess.Popen(
                self.config.argv(),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise AdapterError(f"cannot start adapter {self.config.argv()!r}: {exc}") from exc
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()
        return self

    def _pump_stdout(self):
        assert self._proc is not None and self._proc.stdout is not None
        for line in self._proc.stdout:
            if line.strip():
                self._lines.put(line)
        self._lines.put(None)

    def _pump_stderr(self):
        assert self._proc is not None and self._proc.stderr is not None
        for line in self._proc.stderr:
            self._stderr.append(line.rstrip())

    def close(self):
        proc, self._proc = self._proc, None
        if proc is not None:
            try:
                if proc.stdin:
                    proc.stdin.close()
                proc.wait(timeout=5)
            except (subprocess.TimeoutExpired, OSError):
                proc.kill()
                proc.wait()
        if self._own_scratch:
            shutil.rmtree(self.scratch, ignore_errors=True)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()

    def _exit_error(self) -> AdapterError:
        assert self._proc is not None
        try:
            code = self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            code = None
        tail = " | ".join(self._stderr) or "<no stderr>"
        return AdapterError(f"adapter exited with code {code} ({tail})")

    def request(self, payload: dict) -> dict:
        self.start()
        assert self._proc is not None and self._proc.stdin is not None
        payload = {**payload, "scratch": str(self.scratch)}
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise self._exit_error() from None
        try:
            line = self._lines.get(timeout=self.config.timeout)
        except queue.Empty:
            self._proc.kill()
            raise AdapterTimeoutError(
                f"adapter did not answer {payload['op']!r} within {self.config.timeout:g} s"
            ) from None
        if line is None:
            self._lines.put(None)
            raise self._exit_error()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise AdapterProtocolError(f"response is not JSON: {_excerpt(line)!r}") from None
        if not isinstance(msg, dict) or not isinstance(msg.get("ok"), bool):
            raise AdapterProtocolError(f"response lacks a boolean 'ok': {_excerpt(line)!r}")
        if not msg["ok"]:
            raise AdapterError(f"adapter reported an error: {msg.get('error', '<none>')}")
        msg["_raw"] = line
        return msg

    # -- interfaces ------------------------------------------------------------

    def _field(self, msg: dict, key: str, kind):
        if key not in msg or not isinstance(msg[key], kind):
            raise AdapterProtocolError(f"response field {key!r} missing or malformed: {_excerpt(msg['_raw'])!r}")
        return msg[key]

    def instances(self, image: ImageRef) -> list[InstanceOutput]:
        msg = self.request({"op": "instances", "image": image.path})
        outs = []
        try:
            for item in self._field(msg, "instances", list):
                mask = load_binary_mask(item["mask"])
                box = AxisAlignedBox(*(float(v) for v in item["box"]))
                outs.append(InstanceOutput(mask, box, item["score"]))
            return check_instances(outs, image)
        except (KeyError, TypeError, ValueError, OSError, BackendContractError) as exc:
            raise AdapterProtocolError(f"invalid instances response ({exc}): {_excerpt(msg['_raw'])!r}") from None

    def segment(self, patch: np.ndarray, image: ImageRef, transform) -> np.ndarray:
        self._counter += 1
        patch_path = self.scratch / f"patch_{self._counter:06d}.png"
        Image.fromarray(np.asarray(patch, dtype=np.uint8)).save(patch_path)
        size = [int(transform.size[0]), int(transform.size[1])]
        msg = self.request(
            {
                "op": "segment",
                "image": str(patch_path),
                "patch_size": size,
                "source": {"image_id": image.image_id, "image": image.path, "transform": transform.to_dict()},
            }
        )
        try:
            mask = load_mask(self._field(msg, "mask", str))
            return check_patch_mask(mask, tuple(size))
        except (ValueError, OSError, BackendContractError) as exc:
            raise AdapterProtocolError(f"invalid segment response ({exc}): {_excerpt(msg['_raw'])!r}") from None

    def markers(self, image: ImageRef) -> list[MarkerOutput]:
        msg = self.request({"op": "markers", "image": image.path})
        outs = []
        try:
            for item in self._field(msg, "markers", list):
                outs.append(MarkerOutput(OrientedBox.from_dict(item["obb"]), MarkerClass.parse(item["class"]), item["score"]))
            return check_markers(outs, image)
        except (KeyError, TypeError, ValueError, BackendContractError) as exc:
            raise AdapterProtocolError(f"invalid markers response ({exc}): {_excerpt(msg['_raw'])!r}") from None
