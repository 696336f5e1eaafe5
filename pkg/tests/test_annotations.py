from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beetscan.annotations import (
    AnnotatedImage,
    AnnotatedRegion,
    AnnotationError,
    AnnotationParseError,
    MetaParams,
    Polygon,
    SplitError,
    StageStatsTable,
    dataset_stats,
    dump_annotations,
    label_pixel_distribution,
    load_annotations,
    make_split,
    parse_annotations,
    serialize_annotations,
)
from beetscan.classes import NUM_CLASSES, Lighting, MarkerClass, Moisture, SemanticClass, Stage
from beetscan.synthetic import session_mirror_dataset
from oracles import brute_rasterize

DATA = Path(__file__).parent / "data"


def test_semantic_class_indices_are_fixed():
    assert [c.name for c in SemanticClass] == ["Bg", "Beet", "Cut", "Leaf", "Soil", "Dmg", "Rot"]
    assert [int(c) for c in SemanticClass] == list(range(7)) and NUM_CLASSES == 7
    assert [m.value for m in MarkerClass] == ["Ruler", "Sign"]
    with pytest.raises(ValueError, match="Stem"):
        SemanticClass.parse("Stem")


def image_doc(regions=(), markers=(), **over):
    doc = {
        "id": "im",
        "path": "im.png",
        "width": 50,
        "height": 40,
        "group_id": "g",
        "meta": {"stage": "Storage", "lighting": "Diffuse", "moisture": "Wet", "location": "E", "session": 8},
        "regions": list(regions),
        "markers": list(markers),
    }
    doc.update(over)
    return doc


def square(x, y, s):
    return [[x, y], [x + s, y], [x + s, y + s], [x, y + s]]


def test_load_two_images_six_regions(tmp_path):
    regs = [{"class": "Beet", "instance": i, "polygon": square(2 * i, 2, 5)} for i in range(3)]
    doc = {"version": 1, "images": [image_doc(regs), image_doc(regs, id="im2")]}
    p = tmp_path / "d.json"
    p.write_text(json.dumps(doc))
    ds = load_annotations(p)
    assert len(ds) == 2
    assert sum(len(im.regions) for im in ds) == 6
    assert ds.dropped_regions == 0


def test_two_vertex_polygon_is_dropped_with_warning():
    regs = [
        {"class": "Beet", "instance": 1, "polygon": square(0, 0, 10)},
        {"class": "Soil", "instance": 1, "polygon": [[0, 0], [5, 5]]},
    ]
    ds = parse_annotations(json.dumps({"version": 1, "images": [image_doc(regs)]}))
    assert ds.dropped_regions == 1 and len(ds.warnings) == 1
    assert len(ds[0].regions) == 1


def test_collinear_polygon_is_dropped():
    regs = [{"class": "Beet", "instance": 1, "polygon": [[0, 0], [5, 5], [10, 10]]}]
    ds = parse_annotations(json.dumps({"version": 1, "images": [image_doc(regs)]}))
    assert ds.dropped_regions == 1


def test_storage_fixture_round_trip():
    regs = [
        {"class": "Beet", "instance": 1, "polygon": square(5, 5, 20)},
        {"class": "Soil", "instance": 1, "polygon": square(6, 6, 4)},
        {"class": "Rot", "instance": 1, "polygon": square(15, 15, 6)},
    ]
    marks = [{"class": "Sign", "corners": square(30, 5, 10)}]
    ds = parse_annotations(json.dumps({"version": 1, "images": [image_doc(regs, marks)]}))
    im = ds[0]
    assert {r.cls for r in im.regions} == {SemanticClass.Beet, SemanticClass.Soil, SemanticClass.Rot}
    assert im.meta == MetaParams(Stage.Storage, Lighting.Diffuse, Moisture.Wet, "E", 8)
    again = parse_annotations(json.dumps(serialize_annotations(ds.images)))
    assert again.images == ds.images


def test_malformed_json_reports_byte_offset():
    text = '{"version": 1, "images": [}'
    with pytest.raises(AnnotationParseError) as info:
        parse_annotations(text)
    assert info.value.offset == text.index("}")
    # offsets count bytes, not characters
    text2 = '{"version": 1, "x": "éé", "images": [}'
    with pytest.raises(AnnotationParseError) as info:
        parse_annotations(text2)
    assert info.value.offset == len(text2[: text2.index("[}") + 1].encode())


def test_unknown_label_named_in_error():
    regs = [{"class": "Stem", "instance": 1, "polygon": square(0, 0, 5)}]
    with pytest.raises(AnnotationError, match="Stem"):
        parse_annotations(json.dumps({"version": 1, "images": [image_doc(regs)]}))
    with pytest.raises(AnnotationError, match="Coin"):
        parse_annotations(json.dumps({"version": 1, "images": [image_doc(markers=[{"class": "Coin", "corners": square(0, 0, 5)}])]}))


def test_marker_needs_four_corners():
    bad = {"class": "Ruler", "corners": [[0, 0], [5, 0], [5, 5]]}
    with pytest.raises(AnnotationError, match="4 corners"):
        parse_annotations(json.dumps({"version": 1, "images": [image_doc(markers=[bad])]}))


def test_bg_and_missing_ids_rejected():
    with pytest.raises(AnnotationError, match="Bg"):
        parse_annotations(json.dumps({"version": 1, "images": [image_doc([{"class": "Bg", "instance": 1, "polygon": square(0, 0, 5)}])]}))
    with pytest.raises(AnnotationError, match="instance"):
        parse_annotations(json.dumps({"version": 1, "images": [image_doc([{"class": "Beet", "polygon": square(0, 0, 5)}])]}))
    doc = image_doc()
    del doc["group_id"]
    with pytest.raises(AnnotationError, match="group_id"):
        parse_annotations(json.dumps({"version": 1, "images": [doc]}))


def test_out_of_bounds_vertices_are_clamped():
    regs = [{"class": "Beet", "instance": 1, "polygon": [[-3, -2], [60, 0], [60, 50], [0, 45]]}]
    marks = [{"class": "Ruler", "corners": [[-1, 30], [55, 30], [55, 39], [-1, 39]]}]
    im = parse_annotations(json.dumps({"version": 1, "images": [image_doc(regs, marks)]}))[0]
    v = im.regions[0].polygon.array
    assert v[:, 0].min() >= 0 and v[:, 0].max() <= 50 and v[:, 1].min() >= 0 and v[:, 1].max() <= 40
    c = np.array(im.markers[0].corners)
    assert c[:, 0].min() == 0 and c[:, 0].max() == 50


def test_polygon_invariants():
    with pytest.raises(ValueError):
        Polygon(((0.0, 0.0), (1.0, 1.0)))
    with pytest.raises(ValueError):
        Polygon(((0.0, 0.0), (0.0, 0.0), (1.0, 1.0), (0.0, 1.0)))
    p = Polygon.from_points([(0, 0), (4, 0), (4, 0), (0, 3), (0, 0)])
    assert p.vertices == ((0.0, 0.0), (4.0, 0.0), (0.0, 3.0))
    assert p.area == 6.0


region_strategy = st.builds(
    lambda cls, inst, x, y, w, h: {"class": cls, "instance": inst, "polygon": [[x, y], [x + w, y], [x + w, y + h], [x, y + h]]},
    st.sampled_from(["Beet", "Cut", "Leaf", "Soil", "Dmg", "Rot"]),
    st.integers(0, 4),
    st.floats(0, 40, allow_nan=False).map(lambda v: round(v, 3)),
    st.floats(0, 30, allow_nan=False).map(lambda v: round(v, 3)),
    st.floats(0.5, 10, allow_nan=False).map(lambda v: round(v, 3)),
    st.floats(0.5, 10, allow_nan=False).map(lambda v: round(v, 3)),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(region_strategy, max_size=6), max_size=4))
def test_serialize_parse_round_trip(per_image):
    doc = {"version": 1, "images": [image_doc(r, id=f"im{i}") for i, r in enumerate(per_image)]}
    first = parse_annotations(json.dumps(doc))
    second = parse_annotations(json.dumps(serialize_annotations(first.images)))
    assert second.images == first.images


# --- splits -------------------------------------------------------------------


def make_images(group_sizes, prefix="im"):
    meta = MetaParams(Stage.Sample, Lighting.Sunny, Moisture.Dry, "A", 0)
    out = []
    for g, size in enumerate(group_sizes):
        for k in range(size):
            out.append(AnnotatedImage(f"{prefix}{g:03d}_{k}", "", 10, 10, f"grp{g:03d}", meta))
    return out


def check_split(images, split, ratios):
    group_of = {im.image_id: im.group_id for im in images}
    parts = {"train": split.train, "val": split.val, "test": split.test}
    all_ids = [i for p in parts.values() for i in p]
    assert sorted(all_ids) == sorted(group_of) and len(set(all_ids)) == len(all_ids)
    for gid in set(group_of.values()):
        homes = {name for name, ids in parts.items() if any(group_of[i] == gid for i in ids)}
        assert len(homes) == 1
    sizes = {}
    for im in images:
        sizes[im.group_id] = sizes.get(im.group_id, 0) + 1
    biggest = max(sizes.values())
    n = len(images)
    for (name, ids), r in zip(parts.items(), ratios):
        assert abs(len(ids) - r * n) <= biggest


def test_split_ten_singletons():
    images = make_images([1] * 10)
    split = make_split(images, (0.7, 0.15, 0.15), seed=0)
    assert (len(split.train), len(split.val), len(split.test)) == (8, 1, 1)
    assert make_split(images, (0.7, 0.15, 0.15), seed=0).to_json() == split.to_json()
    check_split(images, split, (0.7, 0.15, 0.15))


def test_split_keeps_groups_together():
    images = make_images([2] + [1] * 8)
    pair = {images[0].image_id, images[1].image_id}
    for seed in range(20):
        split = make_split(images, seed=seed)
        assert sum(pair <= set(getattr(split, p)) for p in ("train", "val", "test")) == 1


def test_split_hundred_groups_within_one_group_of_target():
    rng = np.random.default_rng(0)
    images = make_images(rng.integers(1, 5, size=100).tolist())
    split = make_split(images, (0.7, 0.15, 0.15), seed=42)
    check_split(images, split, (0.7, 0.15, 0.15))


def test_split_group_too_large():
    with pytest.raises(SplitError, match="grp000"):
        make_split(make_images([8, 1, 1]), (0.5, 0.25, 0.25))
    with pytest.raises(SplitError):
        make_split(make_images([1]), (0.5, 0.2, 0.2))


def test_split_empty():
    split = make_split([], seed=1)
    assert split.train == split.val == split.test == ()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=60), st.integers(0, 10**6))
def test_split_properties(group_sizes, seed):
    images = make_images(group_sizes)
    n = len(images)
    if max(group_sizes) > 0.7 * n:
        return
    split = make_split(images, (0.7, 0.15, 0.15), seed)
    check_split(images, split, (0.7, 0.15, 0.15))
    shuffled = list(reversed(images))
    assert make_split(shuffled, (0.7, 0.15, 0.15), seed).to_json() == split.to_json()


# --- statistics ---------------------------------------------------------------


def test_stats_empty():
    t = dataset_stats([])
    assert t.total.images == t.total.beets == 0
    assert all(r.images == 0 and r.beets_per_image == 0.0 for r in t.rows.values())


def test_stats_four_sample_images_two_instances_each():
    meta = MetaParams(Stage.Sample, Lighting.Sunny, Moisture.Dry, "A", 0)
    regions = tuple(
        AnnotatedRegion(SemanticClass.Beet, Polygon(((0.0, 0.0), (2.0, 0.0), (2.0, 2.0))), i) for i in (1, 2)
    )
    ims = [AnnotatedImage(f"i{k}", "", 10, 10, f"g{k}", meta, regions) for k in range(4)]
    row = dataset_stats(ims).rows[Stage.Sample]
    assert (row.images, row.beets, row.beets_per_image, row.ratio_percent) == (4, 8, 2.0, 100.0)


def test_stats_mini_fixture_hand_counted():
    t = dataset_stats(load_annotations(DATA / "mini_dataset.json").images)
    s, h, g = t.rows[Stage.Sample], t.rows[Stage.Harvest], t.rows[Stage.Storage]
    assert (s.images, s.beets, s.locations, s.sessions, s.beets_per_image) == (2, 4, 1, 2, 2.0)
    assert (h.images, h.beets, h.locations, h.sessions, h.beets_per_image) == (1, 3, 1, 1, 3.0)
    assert (g.images, g.beets, g.locations, g.sessions, g.beets_per_image) == (1, 1, 1, 1, 1.0)
    assert (s.ratio_percent, h.ratio_percent, g.ratio_percent) == (50.0, 37.5, 12.5)
    assert (t.total.images, t.total.beets, t.total.locations, t.total.sessions) == (4, 8, 3, 4)
    assert t.total.beets_per_image == 2.0


def test_stats_totals_equal_row_sums_and_round_trip():
    t = dataset_stats(session_mirror_dataset())
    assert t.total.images == sum(r.images for r in t.rows.values())
    assert t.total.beets == sum(r.beets for r in t.rows.values())
    assert StageStatsTable.from_dict(json.loads(json.dumps(t.to_dict()))) == t


def test_label_distribution_single_square():
    meta = MetaParams(Stage.Harvest, Lighting.Sunny, Moisture.Dry, "C", 6)
    reg = AnnotatedRegion(SemanticClass.Beet, Polygon(((10.0, 10.0), (20.0, 10.0), (20.0, 20.0), (10.0, 20.0))), 1)
    d = label_pixel_distribution([AnnotatedImage("x", "", 100, 100, "g", meta, (reg,))])
    assert d.totals[Stage.Harvest][SemanticClass.Beet] == 100
    assert d.totals[Stage.Harvest][SemanticClass.Bg] == 9900
    assert d.totals[Stage.Sample].sum() == 0


def test_label_distribution_matches_brute_force_on_mini_fixture():
    images = load_annotations(DATA / "mini_dataset.json").images[:3]
    d = label_pixel_distribution(images)
    for (image_id, _, counts), im in zip(d.per_image, images):
        raw = [(r.cls.name, r.polygon.vertices) for r in im.regions]
        brute = np.bincount(brute_rasterize(raw, im.width, im.height).ravel(), minlength=7)
        assert np.array_equal(counts, brute), image_id


def test_label_distribution_mini_fixture_hand_counted():
    d = label_pixel_distribution(load_annotations(DATA / "mini_dataset.json").images)
    assert d.totals[Stage.Sample].tolist() == [6400, 1120, 100, 320, 60, 0, 0]
    assert d.totals[Stage.Harvest].tolist() == [3550, 375, 0, 0, 50, 25, 0]
    assert d.totals[Stage.Storage].tolist() == [3500, 300, 0, 0, 0, 0, 200]


def test_label_distribution_missing_mask_names_image():
    images = load_annotations(DATA / "mini_dataset.json").images
    with pytest.raises(KeyError, match="img_b"):
        label_pixel_distribution(images, {"img_a": np.zeros((40, 100), np.uint8)})


def test_dump_and_load(tmp_path):
    images = load_annotations(DATA / "mini_dataset.json").images
    path = dump_annotations(images, tmp_path / "out" / "d.json")
    assert load_annotations(path).images == images
