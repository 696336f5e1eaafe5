"""Command-line entry point: ``beetscan <command> ...``.

Commands: stats, convert, split, evaluate, calibrate-mass, inspect. Every
command accepts ``--config`` (a JSON :class:`~beetscan.config.ToolConfig`)
and ``--out``; flags override config values. Exit status is 0 iff the
command finished without errors; warnings go to stderr and never change it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from beetscan.annotations import (
    AnnotatedImage,
    AnnotationError,
    Dataset,
    DatasetSplit,
    dataset_stats,
    label_pixel_distribution,
    load_annotations,
    make_split,
)
from beetscan.backends import (
    AdapterConfig,
    Backends,
    ExternalAdapter,
    ImageRef,
    OracleBackend,
)
from beetscan.classes import MarkerClass, SemanticClass
from beetscan.config import ADAPTER_ROLES, ConfigError, ToolConfig
from beetscan.geometry.boxes import AxisAlignedBox, OrientedBox, obb_from_corners
from beetscan.geometry.maskio import load_binary_mask, load_mask, save_binary_mask
from beetscan.geometry.polygon import polygon_mask, rasterize
from beetscan.metrics import (
    Detection,
    GroundTruth,
    confusion,
    evaluate_detections,
    meta_breakdown,
    miou,
)
from beetscan.pipeline import (
    InspectConfig,
    MassModel,
    calibrate_mass,
    inspect_image,
    load_mass_samples,
)
from beetscan.synthesis import SynthesisReport, synthesize_instances, write_instance_dataset

log = logging.getLogger("beetscan")


class CommandError(RuntimeError):
    """A user-facing failure; the message is printed without a traceback."""


# --- helpers ------------------------------------------------------------------


def _load_config(args) -> ToolConfig:
    return ToolConfig.load(args.config) if getattr(args, "config", None) else ToolConfig()


def _load_dataset(path) -> Dataset:
    ds = load_annotations(path)
    for w in ds.warnings:
        log.warning("%s: %s", path, w)
    return ds


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n", encoding="utf-8")
    return path


def _write_csv(path: Path, rows: list[dict], fields: list[str] | None = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = fields or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def _json_float(v: float):
    return None if math.isnan(v) else v


def _resolve(base: Path, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


def _read_jsonl(path: Path) -> list[dict]:
    out = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CommandError(f"{path}:{n}: not valid JSON ({exc.msg})") from None
        if not isinstance(rec, dict) or "image_id" not in rec:
            raise CommandError(f"{path}:{n}: each line must be an object with an 'image_id'")
        out.append(rec)
    return out


# --- stats --------------------------------------------------------------------


def cmd_stats(args) -> int:
    ds = _load_dataset(args.dataset)
    table = dataset_stats(ds.images)
    print(table.format())
    if args.out:
        out = Path(args.out)
        _write_json(out / "stats.json", table.to_dict())
        rows = []
        for name, r in [*((s.value, r) for s, r in table.rows.items()), ("Total", table.total)]:
            rows.append({"stage": name, **_row_dict(r)})
        _write_csv(out / "stats.csv", rows)
        if not args.no_labels:
            dist = label_pixel_distribution(ds.images)
            names = [c.name for c in SemanticClass]
            _write_csv(out / "label_distribution.csv", dist.rows(), ["image_id", "stage", *names])
            totals = [{"stage": s.value, **{c.name: int(v[c]) for c in SemanticClass}} for s, v in dist.totals.items()]
            _write_csv(out / "label_totals.csv", totals, ["stage", *names])
    return 0


def _row_dict(r) -> dict:
    return {
        "images": r.images,
        "beets": r.beets,
        "locations": r.locations,
        "sessions": r.sessions,
        "beets_per_image": r.beets_per_image,
        "ratio_percent": r.ratio_percent,
    }


# --- convert ------------------------------------------------------------------


def cmd_convert(args) -> int:
    ds = _load_dataset(args.dataset)
    report = SynthesisReport()
    out = write_instance_dataset(ds.images, args.out, report)
    skip = {
        "skipped_instances": [{"image_id": i, "instance": k} for i, k in report.skipped],
        "dropped_regions": [{"image_id": i, "instance": k, "class": c.name} for i, k, c in report.dropped],
    }
    skip_path = _write_json(out.with_name(out.stem + ".skipped.json"), skip)
    n_inst = sum(len(im.instance_ids) for im in load_annotations(out).images)
    print(f"wrote {n_inst} instance(s) from {len(ds)} image(s) to {out}")
    if report.skipped or report.dropped:
        log.warning(
            "%d leaf-only instance(s) skipped, %d stray region(s) dropped; see %s",
            len(report.skipped),
            len(report.dropped),
            skip_path,
        )
    return 0


# --- split --------------------------------------------------------------------


def cmd_split(args) -> int:
    cfg = _load_config(args)
    ratios = tuple(args.ratios) if args.ratios else cfg.split_ratios
    seed = cfg.seed if args.seed is None else args.seed
    ds = _load_dataset(args.dataset)
    split = make_split(ds.images, ratios, seed)
    text = split.to_json()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    n = len(ds)
    if n:
        log.info(
            "split %d images: train %d, val %d, test %d", n, len(split.train), len(split.val), len(split.test)
        )
    return 0


# --- evaluate -----------------------------------------------------------------


def _subset(ds: Dataset, args) -> list[AnnotatedImage]:
    images = list(ds.images)
    if args.split:
        split = DatasetSplit.from_dict(json.loads(Path(args.split).read_text(encoding="utf-8")))
        keep = set(getattr(split, args.subset))
        images = [im for im in images if im.image_id in keep]
    return images


def _check_ids(records: list[dict], known: dict, pred_path: Path):
    for rec in records:
        if rec["image_id"] not in known:
            raise CommandError(f"{pred_path}: prediction references unknown image_id {rec['image_id']!r}")


def _eval_seg(args, images, records, pred_dir: Path, out: Path | None) -> dict:
    by_id: dict[str, dict] = {}
    for rec in records:
        if "mask_path" not in rec:
            raise CommandError(f"segmentation prediction for {rec['image_id']!r} lacks 'mask_path'")
        by_id[rec["image_id"]] = rec
    totals, per_image = [], []
    for im in images:
        if im.image_id not in by_id:
            log.warning("no segmentation prediction for image %s; skipped", im.image_id)
            continue
        pred = load_mask(_resolve(pred_dir, by_id[im.image_id]["mask_path"]))
        gt = rasterize(im.regions, im.width, im.height)
        if pred.shape != gt.shape:
            raise CommandError(f"prediction mask for {im.image_id!r} has shape {pred.shape}, expected {gt.shape}")
        roi = None
        if args.roi == "instances":
            roi = np.zeros(gt.shape, dtype=bool)
            for inst in synthesize_instances(im):
                roi |= polygon_mask(inst.polygon, im.width, im.height)
        t = confusion(pred, gt, roi)
        totals.append(t)
        per_image.append((im.image_id, t, im.meta))
    if not totals:
        raise CommandError("no images with predictions to evaluate")
    result = miou(totals, args.miou_mode)
    row = {k: _json_float(v) for k, v in result.as_row().items()}
    summary = {"task": "seg", "mode": args.miou_mode, "images": len(totals), "iou": row}
    print(_table_line(["Bg", "Beet", "Cut", "Leaf", "Soil", "Dmg", "Rot", "Mean"], result.as_row()))

    breakdown = None
    if args.meta:
        scored = []
        for image_id, t, meta in per_image:
            try:
                scored.append((image_id, miou(t).miou, meta))
            except ValueError:
                log.warning("image %s has no evaluable classes; left out of the breakdown", image_id)
        breakdown = meta_breakdown(scored)
        summary["meta"] = [
            {**r, "miou": _json_float(r["miou"])} for r in breakdown.rows()
        ]
    if out:
        _write_json(out / "iou_table.json", summary)
        _write_csv(out / "iou_table.csv", [result.as_row()], [*(c.name for c in SemanticClass), "Mean"])
        if breakdown is not None:
            _write_csv(out / "meta_breakdown.csv", breakdown.rows(), ["category", "value", "miou", "images"])
    return summary


def _table_line(cols, row) -> str:
    head = " ".join(f"{c:>6}" for c in cols)
    vals = " ".join(f"{100 * row[c]:>6.1f}" if not math.isnan(row[c]) else f"{'-':>6}" for c in cols)
    return head + "\n" + vals


def _det_inputs(images, records, pred_dir: Path, task: str):
    gts: dict[str, list[GroundTruth]] = {"box": [], "mask": [], "obb": []}
    dets: dict[str, list[Detection]] = {"box": [], "mask": [], "obb": []}
    known = {im.image_id: im for im in images}
    for im in images:
        if task == "det":
            for inst in synthesize_instances(im):
                mask = polygon_mask(inst.polygon, im.width, im.height)
                if not mask.any():
                    continue
                gts["box"].append(GroundTruth(AxisAlignedBox.from_mask(mask), "Beet", im.image_id))
                gts["mask"].append(GroundTruth(mask, "Beet", im.image_id))
        else:
            for m in im.markers:
                gts["obb"].append(GroundTruth(obb_from_corners(m.corners), m.cls.value, im.image_id))
    for rec in records:
        if rec["image_id"] not in known:
            continue
        im = known[rec["image_id"]]
        score = float(rec.get("score", 1.0))
        try:
            if task == "det":
                label = str(rec.get("class", "Beet"))
                if "box" in rec:
                    dets["box"].append(Detection(AxisAlignedBox(*map(float, rec["box"])), label, score, im.image_id))
                if "mask_path" in rec:
                    mask = load_binary_mask(_resolve(pred_dir, rec["mask_path"]))
                    if mask.shape != (im.height, im.width):
                        raise CommandError(f"instance mask for {im.image_id!r} has shape {mask.shape}")
                    dets["mask"].append(Detection(mask, label, score, im.image_id))
                if "box" not in rec and "mask_path" not in rec:
                    raise CommandError(f"detection for {im.image_id!r} has neither 'box' nor 'mask_path'")
            else:
                label = MarkerClass.parse(rec["class"]).value
                dets["obb"].append(Detection(OrientedBox.from_dict(rec["obb"]), label, score, im.image_id))
        except (KeyError, TypeError, ValueError) as exc:
            raise CommandError(f"malformed {task} prediction for {im.image_id!r}: {exc}") from None
    return gts, dets


def _eval_det(args, images, records, pred_dir: Path, out: Path | None) -> dict:
    gts, dets = _det_inputs(images, records, pred_dir, args.task)
    kinds = ["box", "mask"] if args.task == "det" else ["obb"]
    summary: dict = {"task": args.task, "images": len(images), "ap": {}}
    curve_rows = []
    for kind in kinds:
        if args.task == "det" and not dets[kind]:
            continue
        ev = evaluate_detections(dets[kind], gts[kind])
        table = {}
        for label in sorted(ev.ap):
            table[label] = {"AP50": ev.ap[label][0.5], "AP50-95": ev.class_map(label)}
        table["Mean"] = {
            "AP50": float(np.mean([v["AP50"] for v in table.values()])) if table else 1.0,
            "AP50-95": ev.map_50_95,
        }
        summary["ap"][kind] = table
        for label, per_t in ev.curves.items():
            for t, curve in per_t.items():
                for i, p in enumerate(curve.interpolated):
                    curve_rows.append({"kind": kind, "class": label, "iou": t, "recall": i / 100, "precision": float(p)})
        print(f"{kind}: " + ", ".join(f"{k} {100 * v['AP50-95']:.1f}" for k, v in table.items()))
    if out:
        _write_json(out / "ap_table.json", summary)
        rows = [
            {"kind": kind, "class": label, "AP50": v["AP50"], "AP50-95": v["AP50-95"]}
            for kind, table in summary["ap"].items()
            for label, v in table.items()
        ]
        _write_csv(out / "ap_table.csv", rows, ["kind", "class", "AP50", "AP50-95"])
        _write_csv(out / "pr_curves.csv", curve_rows, ["kind", "class", "iou", "recall", "precision"])
    return summary


def cmd_evaluate(args) -> int:
    ds = _load_dataset(args.dataset)
    images = _subset(ds, args)
    pred_path = Path(args.predictions)
    records = _read_jsonl(pred_path)
    _check_ids(records, ds.by_id(), pred_path)
    out = Path(args.out) if args.out else None
    if args.task == "seg":
        _eval_seg(args, images, records, pred_path.resolve().parent, out)
    else:
        _eval_det(args, images, records, pred_path.resolve().parent, out)
    return 0


# --- calibrate-mass -----------------------------------------------------------


def cmd_calibrate_mass(args) -> int:
    model = calibrate_mass(load_mass_samples(args.samples))
    if args.out:
        model.save(args.out)
    print(
        f"m_bar = {model.m_bar:.6g} g/mm^2 from {model.samples} sample(s); "
        f"relative error mean {100 * model.mean_rel_error:.2f}%, max {100 * model.max_rel_error:.2f}%"
    )
    return 0


# --- inspect ------------------------------------------------------------------


class _AdapterPool:
    """One adapter process per distinct command line and worker thread."""

    def __init__(self, commands: dict[str, str], timeout: float):
        self.commands = commands
        self.timeout = timeout
        self._local = threading.local()
        self._all: list[ExternalAdapter] = []
        self._lock = threading.Lock()

    def backends(self) -> Backends:
        cached = getattr(self._local, "backends", None)
        if cached is not None:
            return cached
        procs: dict[str, ExternalAdapter] = {}
        for role in ADAPTER_ROLES:
            cmd = self.commands[role]
            if cmd not in procs:
                procs[cmd] = ExternalAdapter(AdapterConfig(cmd, self.timeout)).start()
                with self._lock:
                    self._all.append(procs[cmd])
        b = Backends(*(procs[self.commands[r]] for r in ADAPTER_ROLES))
        self._local.backends = b
        return b

    def close(self):
        for a in self._all:
            a.close()


def _inspect_targets(args, dataset: Dataset | None, base: Path | None) -> list[tuple[ImageRef, Path]]:
    if not args.images:
        if dataset is None:
            raise CommandError("inspect needs image paths or --dataset")
        return [
            (ImageRef(im.image_id, str(_resolve(base, im.path)), im.width, im.height), _resolve(base, im.path))
            for im in dataset.images
        ]
    oracle = OracleBackend(dataset.images) if dataset is not None else None
    targets = []
    for p in args.images:
        path = Path(p)
        if oracle is None:
            with Image.open(path) as img:
                w, h = img.size
            targets.append((ImageRef(path.stem, str(path), w, h), path))
            continue
        for key in (path.name, path.stem):
            try:
                im = oracle.lookup(key)
                break
            except KeyError:
                continue
        else:
            raise CommandError(f"image {p} is not in the dataset")
        targets.append((ImageRef(im.image_id, str(path), im.width, im.height), path))
    return targets


def _read_raster(path: Path, ref: ImageRef) -> np.ndarray:
    try:
        with Image.open(path) as img:
            raster = np.asarray(img.convert("RGB"))
    except OSError as exc:
        raise CommandError(f"cannot read image {path}: {exc}") from None
    if raster.shape[:2] != (ref.height, ref.width):
        raise CommandError(f"image {path} is {raster.shape[1]}x{raster.shape[0]}, annotated as {ref.width}x{ref.height}")
    return raster


def cmd_inspect(args) -> int:
    cfg = _load_config(args).override(
        tier=args.tier, workers=args.workers, margin_frac=args.margin, adapter=args.adapter
    )
    if args.oracle == bool(cfg.adapter_commands):
        raise CommandError("choose exactly one backend: --oracle or an adapter (--adapter or config)")
    if args.oracle and not args.dataset:
        raise CommandError("--oracle needs --dataset with the ground-truth annotations")
    dataset = _load_dataset(args.dataset) if args.dataset else None
    base = Path(args.dataset).resolve().parent if args.dataset else None
    targets = _inspect_targets(args, dataset, base)

    mass_model = MassModel.load(cfg.mass_model) if cfg.mass_model else None
    if args.mass_model:
        mass_model = MassModel.load(args.mass_model)
    icfg = InspectConfig(cfg.patch_size, cfg.margin_frac, dict(cfg.marker_dims), cfg.scale_residual_bound, mass_model)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pool = None
    if args.oracle:
        oracle_backends = Backends.from_one(OracleBackend(dataset.images))
    else:
        pool = _AdapterPool(dict(cfg.adapter_commands), cfg.adapter_timeout)

    def run(target):
        ref, path = target
        try:
            backends = oracle_backends if pool is None else pool.backends()
            report = inspect_image(ref, _read_raster(path, ref), backends, icfg)
            report.write(out)
            return ref.image_id, report, _prediction_lines(report, out), None
        except Exception as exc:  # one bad image must not stop the batch
            return ref.image_id, None, None, f"{type(exc).__name__}: {exc}"

    try:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(run, targets))
    finally:
        if pool is not None:
            pool.close()

    errors = {}
    preds = {"seg": [], "det": [], "obb": []}
    totals_px = np.zeros(len(SemanticClass), dtype=np.int64)
    totals_mm2 = np.zeros(len(SemanticClass))
    n_beets = n_scaled = 0
    mass = 0.0
    n_mass = 0
    for image_id, report, lines, err in results:
        if err is not None:
            errors[image_id] = err
            print(f"error: {image_id}: {err}", file=sys.stderr)
            continue
        for k in preds:
            preds[k].extend(lines[k])
        n_scaled += report.scale is not None
        for b in report.beets:
            n_beets += 1
            totals_px += b.areas_px
            if b.areas_mm2 is not None:
                totals_mm2 += b.areas_mm2
            if b.mass_g is not None:
                mass += b.mass_g
                n_mass += 1
        if report.scale is None:
            log.warning("image %s: no usable reference marker; metric fields omitted", image_id)

    for k, lines in preds.items():
        (out / f"predictions_{k}.jsonl").write_text("".join(json.dumps(x) + "\n" for x in lines), encoding="utf-8")
    summary = {
        "images": len(targets),
        "inspected": len(targets) - len(errors),
        "images_with_scale": n_scaled,
        "beets": n_beets,
        "areas_px": {c.name: int(totals_px[c]) for c in SemanticClass},
        "areas_mm2": {c.name: float(totals_mm2[c]) for c in SemanticClass},
        "beets_with_mass": n_mass,
        "mass_g": mass,
        "config": cfg.to_dict(),
        "errors": errors,
    }
    _write_json(out / "summary.json", summary)
    print(f"inspected {summary['inspected']}/{len(targets)} image(s), {n_beets} beet(s); reports in {out}")
    return 1 if errors else 0


def _prediction_lines(report, out: Path) -> dict[str, list[dict]]:
    lines = {"seg": [{"image_id": report.image_id, "mask_path": f"{report.image_id}_mask.png"}], "det": [], "obb": []}
    for k, inst in enumerate(report.instances):
        name = f"{report.image_id}_inst{k}.png"
        save_binary_mask(inst.mask, out / name)
        lines["det"].append(
            {"image_id": report.image_id, "class": "Beet", "score": inst.score, "box": inst.box.as_list(), "mask_path": name}
        )
    for m in report.markers:
        lines["obb"].append({"image_id": report.image_id, "class": m.cls.value, "score": m.score, "obb": m.obb.to_dict()})
    return lines


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beetscan", description="Sugar-beet image inspection toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress messages")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON tool configuration")

    p = sub.add_parser("stats", parents=[common], help="per-stage dataset statistics and label distributions")
    p.add_argument("dataset")
    p.add_argument("--out", metavar="DIR", help="write stats.json/csv and label distribution CSVs here")
    p.add_argument("--no-labels", action="store_true", help="skip the pixel label distribution")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("convert", parents=[common], help="synthesize the one-class instance dataset")
    p.add_argument("dataset")
    p.add_argument("--out", metavar="PATH", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("split", parents=[common], help="grouped train/val/test split")
    p.add_argument("dataset")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--ratios", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against annotations")
    p.add_argument("predictions", help="JSON-lines prediction file")
    p.add_argument("dataset")
    p.add_argument("--task", choices=["seg", "det", "obb"], required=True)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--miou-mode", choices=["aggregate", "per_sample"], default="aggregate")
    p.add_argument("--roi", choices=["image", "instances"], default="image", help="pixels scored for seg")
    p.add_argument("--meta", action="store_true", help="add the per-meta-parameter mIoU breakdown")
    p.add_argument("--split", metavar="PATH", help="restrict to one partition of this split file")
    p.add_argument("--subset", choices=["train", "val", "test"], default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate-mass", parents=[common], help="fit mass per unit area from weighed beets")
    p.add_argument("samples", help="CSV with area_mm2,mass_g columns, or JSON")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_calibrate_mass)

    p = sub.add_parser("inspect", parents=[common], help="run the two-stage pipeline and write reports")
    p.add_argument("images", nargs="*", help="image files (default: every image of --dataset)")
    p.add_argument("--dataset", metavar="PATH", help="annotation file listing the images")
    p.add_argument("--out", metavar="DIR", required=True)
    p.add_argument("--oracle", action="store_true", help="use ground-truth backends from --dataset")
    p.add_argument("--adapter", metavar="COMMAND", help="model adapter command line")
    p.add_argument("--tier", choices=["small", "medium", "large"])
    p.add_argument("--margin", type=float, metavar="FRAC", help="crop margin per side, as a box fraction")
    p.add_argument("--workers", type=int, metavar="N")
    p.add_argument("--mass-model", metavar="PATH", help="calibrated mass model JSON")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    log.propagate = False
    try:
        return args.func(args)
    except (CommandError, ConfigError, AnnotationError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
