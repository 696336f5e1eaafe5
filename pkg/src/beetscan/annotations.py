"""Annotation domain types, dataset file I/O, grouped splits and statistics.

Dataset files follow a small versioned JSON schema::

    {"version": 1, "images": [
        {"id", "path", "width", "height", "group_id",
         "meta": {"stage", "lighting", "moisture", "location", "session"},
         "regions": [{"class", "instance", "polygon": [[x, y], ...]}],
         "markers": [{"class", "corners": [[x, y] x 4]}]}]}

Background is never annotated; it is whatever no region covers.
"""

from __future__ import annotations

import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from beetscan.classes import (
    NUM_CLASSES,
    Lighting,
    MarkerClass,
    Moisture,
    SemanticClass,
    Stage,
)
from beetscan.geometry.boxes import is_convex_quad
from beetscan.geometry.polygon import rasterize, signed_area

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class AnnotationError(ValueError):
    """A dataset file violates the annotation schema."""


class AnnotationParseError(AnnotationError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DegeneratePolygonError(ValueError):
    pass


Point = tuple[float, float]


@dataclass(frozen=True)
class Polygon:
    """Closed contour in pixel coordinates; the last vertex connects back to the first."""

    vertices: tuple[Point, ...]

    def __post_init__(self):
        v = self.vertices
        if len(v) < 3:
            raise DegeneratePolygonError(f"polygon needs at least 3 vertices, got {len(v)}")
        for i in range(len(v)):
            if v[i] == v[(i + 1) % len(v)]:
                raise DegeneratePolygonError("polygon has repeated consecutive vertices")
        if signed_area(v) == 0.0:
            raise DegeneratePolygonError("polygon has zero area")

    @classmethod
    def from_points(cls, points, clamp: tuple[float, float] | None = None) -> "Polygon":
        """Build a polygon, optionally clamping into ``[0, w] x [0, h]``.

        Consecutive duplicates (including an explicit closing vertex) are dropped.
        """
        pts: list[Point] = []
        for x, y in points:
            x, y = float(x), float(y)
            if clamp is not None:
                x = min(max(x, 0.0), clamp[0])
                y = min(max(y, 0.0), clamp[1])
            if not pts or pts[-1] != (x, y):
                pts.append((x, y))
        while len(pts) > 1 and pts[0] == pts[-1]:
            pts.pop()
        return cls(tuple(pts))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def area(self) -> float:
        return abs(signed_area(self.vertices))

    def bounds(self) -> tuple[float, float, float, float]:
        a = self.array
        return (*a.min(axis=0), *a.max(axis=0))


@dataclass(frozen=True)
class MarkerAnnotation:
    cls: MarkerClass
    corners: tuple[Point, Point, Point, Point]

    def __post_init__(self):
        if len(self.corners) != 4:
            raise AnnotationError(f"marker needs exactly 4 corners, got {len(self.corners)}")
        if not is_convex_quad(self.corners):
            raise AnnotationError("marker corners do not form a convex, non-degenerate quadrilateral")


@dataclass(frozen=True)
class AnnotatedRegion:
    cls: SemanticClass
    polygon: Polygon
    instance_id: int

    def __post_init__(self):
        if self.cls == SemanticClass.Bg:
            raise AnnotationError("regions cannot carry the Bg class")


@dataclass(frozen=True)
class MetaParams:
    stage: Stage
    lighting: Lighting
    moisture: Moisture
    location: str
    session_id: int


@dataclass(frozen=True)
class AnnotatedImage:
    image_id: str
    path: str
    width: int
    height: int
    group_id: str
    meta: MetaParams
    regions: tuple[AnnotatedRegion, ...] = ()
    markers: tuple[MarkerAnnotation, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise AnnotationError(f"image {self.image_id}: width and height must be positive")

    @property
    def instance_ids(self) -> list[int]:
        return sorted({r.instance_id for r in self.regions})

    def regions_of(self, instance_id: int) -> list[AnnotatedRegion]:
        return [r for r in self.regions if r.instance_id == instance_id]


@dataclass(frozen=True)
class Dataset:
    """Images loaded from one annotation file, plus ingest diagnostics."""

    images: tuple[AnnotatedImage, ...]
    dropped_regions: int = 0
    warnings: tuple[str, ...] = ()

    def __iter__(self) -> Iterator[AnnotatedImage]:
        return iter(self.images)

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i):
        return self.images[i]

    def by_id(self) -> dict[str, AnnotatedImage]:
        return {im.image_id: im for im in self.images}


# --- ingest -------------------------------------------------------------------


def _require(obj: Mapping, key: str, where: str):
    if not isinstance(obj, Mapping) or key not in obj:
        raise AnnotationError(f"{where}: missing required field {key!r}")
    return obj[key]


def _vocab(enum_cls, value, what: str, where: str):
    try:
        return enum_cls(value)
    except ValueError:
        raise AnnotationError(f"{where}: unknown {what} {value!r}") from None


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise AnnotationError(f"{where}: expected an integer, got {value!r}")
    return value


def _points(value, where: str) -> list[Point]:
    if not isinstance(value, list):
        raise AnnotationError(f"{where}: expected a list of [x, y] points")
    pts = []
    for p in value:
        if (
            not isinstance(p, (list, tuple))
            or len(p) != 2
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in p)
        ):
            raise AnnotationError(f"{where}: malformed point {p!r}")
        pts.append((float(p[0]), float(p[1])))
    return pts


def _parse_image(raw: Mapping, idx: int, warnings: list[str]) -> tuple[AnnotatedImage, int]:
    where = f"images[{idx}]"
    image_id = str(_require(raw, "id", where))
    where = f"image {image_id!r}"
    width = _int(_require(raw, "width", where), where + ".width")
    height = _int(_require(raw, "height", where), where + ".height")
    if width <= 0 or height <= 0:
        raise AnnotationError(f"{where}: width and height must be positive")
    group_id = _require(raw, "group_id", where)
    if group_id is None:
        raise AnnotationError(f"{where}: group_id must not be null")

    m = _require(raw, "meta", where)
    meta = MetaParams(
        stage=_vocab(Stage, _require(m, "stage", where + ".meta"), "stage", where),
        lighting=_vocab(Lighting, _require(m, "lighting", where + ".meta"), "lighting", where),
        moisture=_vocab(Moisture, _require(m, "moisture", where + ".meta"), "moisture", where),
        location=str(_require(m, "location", where + ".meta")),
        session_id=_int(_require(m, "session", where + ".meta"), where + ".meta.session"),
    )

    dropped = 0
    regions = []
    for j, r in enumerate(raw.get("regions", [])):
        rwhere = f"{where}.regions[{j}]"
        label = _require(r, "class", rwhere)
        try:
            cls = SemanticClass.parse(label)
        except ValueError:
            raise AnnotationError(f"{rwhere}: unknown class label {label!r}") from None
        if cls == SemanticClass.Bg:
            raise AnnotationError(f"{rwhere}: class label 'Bg' is implicit and cannot be annotated")
        instance = _int(_require(r, "instance", rwhere), rwhere + ".instance")
        pts = _points(_require(r, "polygon", rwhere), rwhere + ".polygon")
        try:
            poly = Polygon.from_points(pts, clamp=(float(width), float(height)))
        except DegeneratePolygonError as exc:
            dropped += 1
            warnings.append(f"{rwhere}: dropped degenerate polygon ({exc})")
            continue
        regions.append(AnnotatedRegion(cls, poly, instance))

    markers = []
    for j, mk in enumerate(raw.get("markers", [])):
        mwhere = f"{where}.markers[{j}]"
        label = _require(mk, "class", mwhere)
        try:
            mcls = MarkerClass.parse(label)
        except ValueError:
            raise AnnotationError(f"{mwhere}: unknown marker class label {label!r}") from None
        corners = _points(_require(mk, "corners", mwhere), mwhere + ".corners")
        if len(corners) != 4:
            raise AnnotationError(f"{mwhere}: marker needs exactly 4 corners, got {len(corners)}")
        clamped = tuple(
            (min(max(x, 0.0), float(width)), min(max(y, 0.0), float(height))) for x, y in corners
        )
        try:
            markers.append(MarkerAnnotation(mcls, clamped))
        except AnnotationError as exc:
            raise AnnotationError(f"{mwhere}: {exc}") from None

    image = AnnotatedImage(
        image_id=image_id,
        path=str(raw.get("path", "")),
        width=width,
        height=height,
        group_id=str(group_id),
        meta=meta,
        regions=tuple(regions),
        markers=tuple(markers),
    )
    return image, dropped


def parse_annotations(text: str | bytes) -> Dataset:
    raw_bytes = text if isinstance(text, bytes) else text.encode("utf-8")
    try:
        decoded = raw_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise AnnotationParseError("file is not valid UTF-8", exc.start) from None
    try:
        doc = json.loads(decoded)
    except json.JSONDecodeError as exc:
        offset = len(decoded[: exc.pos].encode("utf-8"))
        raise AnnotationParseError(f"malformed JSON: {exc.msg}", offset) from None

    if not isinstance(doc, dict):
        raise AnnotationError("top level must be a JSON object")
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise AnnotationError(f"unsupported schema version {version!r}")
    raw_images = _require(doc, "images", "dataset")
    if not isinstance(raw_images, list):
        raise AnnotationError("dataset: 'images' must be a list")

    warnings: list[str] = []
    images = []
    dropped = 0
    seen: set[str] = set()
    for i, raw in enumerate(raw_images):
        image, n = _parse_image(raw, i, warnings)
        if image.image_id in seen:
            raise AnnotationError(f"duplicate image id {image.image_id!r}")
        seen.add(image.image_id)
        images.append(image)
        dropped += n
    if dropped:
        log.warning("dropped %d degenerate polygon(s) at ingest", dropped)
    return Dataset(tuple(images), dropped, tuple(warnings))


def load_annotations(path) -> Dataset:
    return parse_annotations(Path(path).read_bytes())


def serialize_annotations(images: Sequence[AnnotatedImage]) -> dict:
    out = []
    for im in images:
        out.append(
            {
                "id": im.image_id,
                "path": im.path,
                "width": im.width,
                "height": im.height,
                "group_id": im.group_id,
                "meta": {
                    "stage": im.meta.stage.value,
                    "lighting": im.meta.lighting.value,
                    "moisture": im.meta.moisture.value,
                    "location": im.meta.location,
                    "session": im.meta.session_id,
                },
                "regions": [
                    {
                        "class": r.cls.name,
                        "instance": r.instance_id,
                        "polygon": [list(p) for p in r.polygon.vertices],
                    }
                    for r in im.regions
                ],
                "markers": [
                    {"class": mk.cls.value, "corners": [list(c) for c in mk.corners]}
                    for mk in im.markers
                ],
            }
        )
    return {"version": SCHEMA_VERSION, "images": out}


def dump_annotations(images: Sequence[AnnotatedImage], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(serialize_annotations(list(images)), indent=1) + "\n", encoding="utf-8")
    return path


# --- splits -------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError("split partitions overlap")

    def to_dict(self) -> dict:
        return {"train": list(self.train), "val": list(self.val), "test": list(self.test)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetSplit":
        return cls(*(tuple(str(x) for x in d[k]) for k in ("train", "val", "test")))

    def partition_of(self, image_id: str) -> str:
        for name in ("train", "val", "test"):
            if image_id in getattr(self, name):
                return name
        raise KeyError(image_id)


class SplitError(ValueError):
    pass


def make_split(
    images: Sequence[AnnotatedImage],
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
) -> DatasetSplit:
    """Random train/val/test split that never separates images of one group.

    Groups are visited in a seeded shuffle of their sorted ids. A group joins
    val (then test) when that strictly reduces the partition's distance to its
    target size; everything else goes to train. Each achieved partition size
    lies within one group size of its target.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must be three non-negative fractions summing to 1, got {ratios}")
    groups: dict[str, list[str]] = defaultdict(list)
    for im in images:
        groups[im.group_id].append(im.image_id)
    n = sum(len(v) for v in groups.values())
    if n == 0:
        return DatasetSplit((), (), ())

    targets = [r * n for r in ratios]
    largest = max(targets)
    for gid in sorted(groups):
        if len(groups[gid]) > largest:
            raise SplitError(
                f"group {gid!r} has {len(groups[gid])} images, more than the largest target partition ({largest:g})"
            )

    order = sorted(groups)
    random.Random(seed).shuffle(order)
    parts: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    for gid in order:
        size = len(groups[gid])
        for name, target in (("val", targets[1]), ("test", targets[2])):
            deficit = target - len(parts[name])
            if size < 2 * deficit:
                parts[name].extend(groups[gid])
                break
        else:
            parts["train"].extend(groups[gid])
    return DatasetSplit(*(tuple(sorted(parts[k])) for k in ("train", "val", "test")))


# --- statistics ---------------------------------------------------------------


@dataclass(frozen=True)
class StageRow:
    images: int
    beets: int
    locations: int
    sessions: int
    beets_per_image: float
    ratio_percent: float


@dataclass(frozen=True)
class StageStatsTable:
    rows: dict[Stage, StageRow]
    total: StageRow

    def to_dict(self) -> dict:
        def row(r: StageRow) -> dict:
            return {
                "images": r.images,
                "beets": r.beets,
                "locations": r.locations,
                "sessions": r.sessions,
                "beets_per_image": r.beets_per_image,
                "ratio_percent": r.ratio_percent,
            }

        return {"stages": {s.value: row(r) for s, r in self.rows.items()}, "total": row(self.total)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "StageStatsTable":
        return cls(
            {Stage(k): StageRow(**v) for k, v in d["stages"].items()},
            StageRow(**d["total"]),
        )

    def format(self) -> str:
        lines = [f"{'Stage':<8} {'Loc':>3} {'Rec':>3} {'Img':>6} {'Beets':>6} {'B/I':>5} {'Ratio':>6}"]
        for stage, r in self.rows.items():
            lines.append(
                f"{stage.value:<8} {r.locations:>3} {r.sessions:>3} {r.images:>6} {r.beets:>6}"
                f" {r.beets_per_image:>5.1f} {r.ratio_percent:>6.1f}"
            )
        t = self.total
        lines.append(
            f"{'Total':<8} {t.locations:>3} {t.sessions:>3} {t.images:>6} {t.beets:>6}"
            f" {t.beets_per_image:>5.1f} {t.ratio_percent:>6.1f}"
        )
        return "\n".join(lines)


def dataset_stats(images: Sequence[AnnotatedImage]) -> StageStatsTable:
    """Per-stage image, beet-instance, location and session counts.

    Session ids are global across the dataset, so one session may span
    several locations.
    """
    per_stage: dict[Stage, list[AnnotatedImage]] = {s: [] for s in Stage}
    for im in images:
        per_stage[im.meta.stage].append(im)
    total_beets = sum(len(im.instance_ids) for im in images)

    def row(ims: Sequence[AnnotatedImage]) -> StageRow:
        n_img = len(ims)
        n_beets = sum(len(im.instance_ids) for im in ims)
        return StageRow(
            images=n_img,
            beets=n_beets,
            locations=len({im.meta.location for im in ims}),
            sessions=len({im.meta.session_id for im in ims}),
            beets_per_image=n_beets / n_img if n_img else 0.0,
            ratio_percent=100.0 * n_beets / total_beets if total_beets else 0.0,
        )

    return StageStatsTable({s: row(per_stage[s]) for s in Stage}, row(list(images)))


@dataclass
class LabelDistribution:
    """Pixel counts per class, totalled per stage and listed per image."""

    totals: dict[Stage, np.ndarray] = field(default_factory=dict)
    per_image: list[tuple[str, Stage, np.ndarray]] = field(default_factory=list)

    def rows(self) -> list[dict]:
        out = []
        for image_id, stage, counts in self.per_image:
            row = {"image_id": image_id, "stage": stage.value}
            row.update({c.name: int(counts[c]) for c in SemanticClass})
            out.append(row)
        return out


MaskSource = Callable[[AnnotatedImage], np.ndarray] | Mapping[str, np.ndarray] | None


def label_pixel_distribution(images: Sequence[AnnotatedImage], masks_source: MaskSource = None) -> LabelDistribution:
    """Tally class pixels per image and per stage.

    ``masks_source`` maps image ids to semantic masks, or is a callable
    producing one per image; by default annotations are rasterized.
    """
    dist = LabelDistribution({s: np.zeros(NUM_CLASSES, dtype=np.int64) for s in Stage})
    for im in images:
        if masks_source is None:
            mask = rasterize(im.regions, im.width, im.height)
        elif callable(masks_source):
            mask = masks_source(im)
        else:
            if im.image_id not in masks_source:
                raise KeyError(f"no mask available for image {im.image_id!r}")
            mask = masks_source[im.image_id]
        if mask is None:
            raise KeyError(f"no mask available for image {im.image_id!r}")
        counts = np.bincount(np.asarray(mask, dtype=np.int64).ravel(), minlength=NUM_CLASSES)
        if counts.size > NUM_CLASSES:
            raise ValueError(f"mask for image {im.image_id!r} holds values outside the class range")
        dist.totals[im.meta.stage] += counts
        dist.per_image.append((im.image_id, im.meta.stage, counts))
    return dist
