from __future__ import annotations

import sys
import textwrap
from pathlib import Path

import numpy as np
import pytest

from beetscan.annotations import load_annotations
from beetscan.backends import (
    AdapterConfig,
    AdapterError,
    AdapterProtocolError,
    AdapterTimeoutError,
    BackendContractError,
    ExternalAdapter,
    ImageRef,
    InstanceOutput,
    OracleBackend,
    UnknownImageError,
)
from beetscan.backends.base import check_instances, check_patch_mask
from beetscan.classes import MarkerClass
from beetscan.geometry import AxisAlignedBox, obb_iou
from beetscan.pipeline import plan_patch
from beetscan.synthesis import synthesize_instances
from beetscan.synthetic import write_synthetic_dataset

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def mini():
    return load_annotations(DATA / "mini_dataset.json")


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    return write_synthetic_dataset(out, n_images=3, seed=7, width=320, height=200)


# --- oracle -------------------------------------------------------------------


def test_oracle_instances_cover_every_annotated_instance(mini):
    oracle = OracleBackend(mini)
    for im in mini:
        outs = oracle.instances(oracle.ref(im.image_id))
        assert len(outs) == len(synthesize_instances(im))
        assert all(o.score == 1.0 and o.mask.shape == (im.height, im.width) for o in outs)
        for o in outs:
            assert AxisAlignedBox.from_mask(o.mask) == o.box


def test_oracle_markers_and_determinism(mini):
    oracle = OracleBackend(mini)
    a = oracle.markers(oracle.ref("img_a"))
    d = oracle.markers(oracle.ref("img_d"))
    assert [m.cls for m in a] == [MarkerClass.Ruler]
    assert [m.cls for m in d] == [MarkerClass.Sign]
    assert oracle.markers(oracle.ref("img_b")) == []
    again = OracleBackend(mini).markers(OracleBackend(mini).ref("img_d"))
    assert obb_iou(again[0].obb, d[0].obb) == pytest.approx(1.0)


def test_oracle_unknown_image(mini):
    oracle = OracleBackend(mini)
    with pytest.raises(UnknownImageError, match="nope"):
        oracle.instances(ImageRef("nope", "nope.png", 10, 10))


def test_oracle_segment_matches_rasterized_truth(mini):
    oracle = OracleBackend(mini)
    ref = oracle.ref("img_a")
    gt = oracle.ground_truth(ref)
    t = plan_patch((ref.width, ref.height), AxisAlignedBox(0, 0, 100, 40), (100, 40), 0.0)
    assert np.array_equal(oracle.segment(None, ref, t), gt)


def test_contract_checks():
    ref = ImageRef("x", "x.png", 4, 3)
    ok = InstanceOutput(np.ones((3, 4), bool), AxisAlignedBox(0, 0, 4, 3), 0.5)
    assert check_instances([ok], ref) == [ok]
    with pytest.raises(BackendContractError, match="confidence"):
        check_instances([InstanceOutput(ok.mask, ok.box, 1.5)], ref)
    with pytest.raises(BackendContractError, match="shape"):
        check_instances([InstanceOutput(np.ones((4, 4), bool), ok.box, 0.5)], ref)
    with pytest.raises(BackendContractError, match="bounds"):
        check_instances([InstanceOutput(ok.mask, AxisAlignedBox(0, 0, 5, 3), 0.5)], ref)
    with pytest.raises(BackendContractError):
        check_patch_mask(np.full((3, 4), 9), (4, 3))


# --- external adapter ---------------------------------------------------------


def script(tmp_path: Path, body: str, name: str = "adapter.py") -> list[str]:
    path = tmp_path / name
    path.write_text(textwrap.dedent(body), encoding="utf-8")
    return [sys.executable, str(path)]


GOOD = """
import json, sys
import numpy as np
from PIL import Image
for line in sys.stdin:
    req = json.loads(line)
    scratch = req["scratch"]
    if req["op"] == "instances":
        m = np.zeros((20, 30), np.uint8); m[5:10, 5:15] = int(sys.argv[1]) if len(sys.argv) > 1 else 1
        Image.fromarray(m).save(scratch + "/m.png")
        out = {"ok": True, "instances": [{"mask": scratch + "/m.png", "box": [5, 5, 15, 10], "score": 0.8}]}
    elif req["op"] == "segment":
        w, h = req["patch_size"]
        Image.fromarray(np.full((h, w), 2, np.uint8)).save(scratch + "/s.png")
        out = {"ok": True, "mask": scratch + "/s.png"}
    else:
        out = {"ok": True, "markers": [{"obb": {"cx": 10, "cy": 10, "w": 8, "h": 2, "angle": 0.0}, "class": "Ruler", "score": 0.9}]}
    print(json.dumps(out), flush=True)
"""


def test_adapter_round_trip(tmp_path):
    ref = ImageRef("a", str(tmp_path / "a.png"), 30, 20)
    with ExternalAdapter(AdapterConfig(script(tmp_path, GOOD), timeout=30)) as ad:
        [inst] = ad.instances(ref)
        assert inst.mask.sum() == 50 and inst.score == 0.8
        assert inst.box == AxisAlignedBox(5, 5, 15, 10)
        t = plan_patch((30, 20), inst.box, (16, 8), 0.0)
        seg = ad.segment(np.zeros((8, 16, 3), np.uint8), ref, t)
        assert seg.shape == (8, 16) and (seg == 2).all()
        [m] = ad.markers(ref)
        assert m.cls == MarkerClass.Ruler and m.obb.width == 8


def test_adapter_wrong_mask_size_is_protocol_error(tmp_path):
    ref = ImageRef("a", "a.png", 31, 20)  # script answers with 30 x 20 masks
    with ExternalAdapter(AdapterConfig(script(tmp_path, GOOD), timeout=30)) as ad:
        with pytest.raises(AdapterProtocolError, match="shape"):
            ad.instances(ref)


def test_adapter_rejects_non_binary_mask_values(tmp_path):
    cmd = script(tmp_path, GOOD) + ["255"]
    with ExternalAdapter(AdapterConfig(cmd, timeout=30)) as ad:
        with pytest.raises(AdapterProtocolError, match="0/1"):
            ad.instances(ImageRef("a", "a.png", 30, 20))


def test_adapter_malformed_json_quotes_excerpt(tmp_path):
    body = """
    import sys
    for line in sys.stdin:
        print("this is not json " + "x" * 500, flush=True)
    """
    with ExternalAdapter(AdapterConfig(script(tmp_path, body), timeout=30)) as ad:
        with pytest.raises(AdapterProtocolError) as err:
            ad.markers(ImageRef("a", "a.png", 4, 4))
    msg = str(err.value)
    assert "this is not json" in msg and "..." in msg and len(msg) < 400


def test_adapter_missing_ok_field(tmp_path):
    body = """
    import sys
    for line in sys.stdin:
        print('{"markers": []}', flush=True)
    """
    with ExternalAdapter(AdapterConfig(script(tmp_path, body), timeout=30)) as ad:
        with pytest.raises(AdapterProtocolError, match="ok"):
            ad.markers(ImageRef("a", "a.png", 4, 4))


def test_adapter_reported_error(tmp_path):
    body = """
    import sys
    for line in sys.stdin:
        print('{"ok": false, "error": "model not loaded"}', flush=True)
    """
    with ExternalAdapter(AdapterConfig(script(tmp_path, body), timeout=30)) as ad:
        with pytest.raises(AdapterError, match="model not loaded"):
            ad.markers(ImageRef("a", "a.png", 4, 4))


def test_adapter_timeout(tmp_path):
    body = """
    import sys, time
    for line in sys.stdin:
        time.sleep(30)
    """
    with ExternalAdapter(AdapterConfig(script(tmp_path, body), timeout=0.5)) as ad:
        with pytest.raises(AdapterTimeoutError, match="0.5"):
            ad.markers(ImageRef("a", "a.png", 4, 4))


def test_adapter_nonzero_exit_reports_stderr(tmp_path):
    body = """
    import sys
    sys.stdin.readline()
    sys.stderr.write("CUDA out of memory\\n")
    sys.exit(3)
    """
    with ExternalAdapter(AdapterConfig(script(tmp_path, body), timeout=30)) as ad:
        with pytest.raises(AdapterError, match="code 3.*CUDA out of memory"):
            ad.markers(ImageRef("a", "a.png", 4, 4))


def test_adapter_missing_executable():
    with pytest.raises(AdapterError, match="cannot start"):
        ExternalAdapter(AdapterConfig(["/nonexistent/model-server"])).start()


def test_serve_oracle_matches_in_process_oracle(synth):
    dataset = load_annotations(synth)
    oracle = OracleBackend(dataset)
    cmd = [sys.executable, "-m", "beetscan.backends.serve", "--oracle", str(synth)]
    with ExternalAdapter(AdapterConfig(cmd, timeout=60)) as ad:
        for im in dataset:
            ref = ImageRef(im.image_id, str(synth.parent / im.path), im.width, im.height)
            direct = oracle.instances(ref)
            remote = ad.instances(ref)
            assert len(direct) == len(remote)
            for a, b in zip(direct, remote):
                assert np.array_equal(a.mask, b.mask) and a.box == b.box and a.score == b.score
            for a, b in zip(oracle.markers(ref), ad.markers(ref)):
                assert a.cls == b.cls and obb_iou(a.obb, b.obb) == pytest.approx(1.0, abs=1e-9)
            if direct:
                t = plan_patch((im.width, im.height), direct[0].box, (64, 48))
                patch = np.zeros((48, 64, 3), np.uint8)
                assert np.array_equal(ad.segment(patch, ref, t), oracle.segment(patch, ref, t))
