"""Corpus-scale runs of the per-image operations and their file writers.

All tables are sorted by image id and floats are written with 9 significant
digits, so rerunning a step on unchanged inputs reproduces its files byte
for byte whatever the thread count.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TypeVar

import numpy as np

from . import aggregate, metrics
from .geolabel import LabeledPoint, build_spatial_index, label_points
from .hazard import band, image_hazard
from .ingest import (
    ACCIDENT_TYPES,
    N_CATEGORIES,
    AccidentType,
    CorpusManifest,
    ImageRecord,
    load_activation_raster,
    load_label_raster,
)
from .mirror import ConstraintMode, MirrorCorpus, MirrorError, MirrorQuery, MirrorResult, find_mirrors, improvement_ratios
from .scene import SceneError, area_vector, fixation_profile, scene_disorder, surrogate_vector

T = TypeVar("T")
R = TypeVar("R")


def fmt(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), ".9g")


def round9(x: Optional[float]) -> Optional[float]:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return float(format(float(x), ".9g"))


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """Order-preserving map over a worker pool."""
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def progress(msg: str) -> None:
    print(msg, file=sys.stderr)


def sorted_images(manifest: CorpusManifest) -> list[ImageRecord]:
    return sorted(manifest.images, key=lambda im: im.image_id)


def in_bbox(image: ImageRecord, bbox: Optional[tuple]) -> bool:
    if bbox is None:
        return True
    min_lat, min_lon, max_lat, max_lon = bbox
    return min_lat <= image.location.latitude <= max_lat and min_lon <= image.location.longitude <= max_lon


# ---------------------------------------------------------------------------
# labels and scores


def run_labels(manifest: CorpusManifest, radius_m: float) -> list[LabeledPoint]:
    index = build_spatial_index(manifest.accidents, radius_m)
    return label_points(sorted_images(manifest), index, radius_m)


def write_labels(path: Path, labels: Iterable[LabeledPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "count_p", "count_v", "binary_p", "binary_v", "ordinal_p"])
        for lp in labels:
            b = lp.binary
            w.writerow([lp.image_id, lp.counts[AccidentType.P], lp.counts[AccidentType.V],
                        b[AccidentType.P].value, b[AccidentType.V].value, int(lp.ordinal_p)])


def hazard_table(manifest: CorpusManifest) -> dict:
    """image_id -> (h_p, h_v), None where neither logits nor score exist."""
    return {im.image_id: tuple(image_hazard(im, t) for t in ACCIDENT_TYPES) for im in sorted_images(manifest)}


def write_scores(path: Path, hazards: dict, lo: float, hi: float) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "h_p", "h_v", "band_p", "band_v"])
        for iid in sorted(hazards):
            hp, hv = hazards[iid]
            w.writerow([iid, fmt(hp), fmt(hv),
                        band(hp, lo, hi).value if hp is not None else "",
                        band(hv, lo, hi).value if hv is not None else ""])


# ---------------------------------------------------------------------------
# scene statistics


@dataclass
class ImageScene:
    image_id: str
    sd: Optional[float] = None
    area: Optional[np.ndarray] = None
    fixation: dict = field(default_factory=dict)
    surrogate: Optional[np.ndarray] = None
    retained: Optional[float] = None
    notes: list = field(default_factory=list)


def compute_scene(manifest: CorpusManifest, image: ImageRecord, threshold: float,
                  mask_type: AccidentType = AccidentType.P, fixation_types=ACCIDENT_TYPES) -> ImageScene:
    out = ImageScene(image.image_id)
    if image.seg_path is None:
        out.notes.append("no segmentation raster")
        return out
    seg = load_label_raster(manifest.resolve(image.seg_path))
    try:
        out.sd = scene_disorder(seg).value
    except SceneError as exc:
        out.notes.append(str(exc))
    try:
        out.area = area_vector(seg).v
    except SceneError as exc:
        out.notes.append(str(exc))
    wanted = set(fixation_types) | {mask_type}
    for t in ACCIDENT_TYPES:
        if t not in wanted or image.cam_path(t) is None:
            continue
        cam = load_activation_raster(manifest.resolve(image.cam_path(t)))
        if t in fixation_types:
            try:
                out.fixation[t] = fixation_profile(seg, cam).f
            except SceneError as exc:
                out.notes.append(f"fixation {t.value}: {exc}")
        if t is mask_type:
            try:
                sv = surrogate_vector(seg, cam, threshold)
                out.surrogate, out.retained = sv.v_tilde, sv.retained_fraction
            except SceneError as exc:
                out.notes.append(f"surrogate {t.value}: {exc}")
    return out


def compute_scenes(manifest: CorpusManifest, threshold: float, mask_type: AccidentType = AccidentType.P,
                   threads: int = 1, images: Optional[Sequence[ImageRecord]] = None,
                   fixation_types=ACCIDENT_TYPES) -> list[ImageScene]:
    images = sorted_images(manifest) if images is None else sorted(images, key=lambda im: im.image_id)
    return parallel_map(lambda im: compute_scene(manifest, im, threshold, mask_type, fixation_types), images, threads)


def write_scene(path: Path, scenes: Sequence[ImageScene], mask_type: AccidentType = AccidentType.P) -> None:
    n = N_CATEGORIES
    m = mask_type.value.lower()
    groups = [("v", lambda s: s.area)]
    for t in ACCIDENT_TYPES:
        if any(t in s.fixation for s in scenes):
            groups.append((f"f_{t.value.lower()}", lambda s, t=t: s.fixation.get(t)))
    has_surrogate = any(s.surrogate is not None for s in scenes)
    if has_surrogate:
        groups.append((f"vt_{m}", lambda s: s.surrogate))
    header = ["image_id", "sd"]
    for prefix, _ in groups:
        header += [f"{prefix}_{c}" for c in range(n)]
    if has_surrogate:
        header.append(f"retained_{m}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s in scenes:
            row = [s.image_id, fmt(s.sd)]
            for _, get in groups:
                vec = get(s)
                row += [fmt(x) for x in vec] if vec is not None else [""] * n
            if has_surrogate:
                row.append(fmt(s.retained))
            w.writerow(row)


# ---------------------------------------------------------------------------
# radar / hexbin / landscape


def radar_document(scenes: Sequence[ImageScene], hazards: dict, categories: Sequence[str],
                   lo: float, hi: float, grouping=None) -> dict:
    names, member = aggregate.group_index(categories, grouping)
    doc = {}
    for k, t in enumerate(ACCIDENT_TYPES):
        rows = [(s.fixation[t], hazards[s.image_id][k]) for s in scenes
                if t in s.fixation and hazards.get(s.image_id, (None, None))[k] is not None]
        if not rows:
            raise aggregate.AggregateError(f"no images with fixation profile and score for type {t.value}")
        profiles = np.array([r[0] for r in rows]) @ member
        table = aggregate.radar_ratios(profiles, [r[1] for r in rows], names, lo, hi)
        doc[t.value] = {
            "n_images": table.n_total,
            "n_safe": table.n_safe,
            "n_dangerous": table.n_dangerous,
            "categories": {
                name: {"ratio_safe": round9(rs), "ratio_dangerous": round9(rd)}
                for name, rs, rd in zip(table.categories, table.ratio_safe, table.ratio_dangerous)
            },
        }
    return doc


def hexbin_from(scenes: Sequence[ImageScene], hazards: dict, grid_n: int) -> aggregate.DisorderHazardBins:
    hp, hv, sd = [], [], []
    for s in scenes:
        h = hazards.get(s.image_id)
        if s.sd is None or h is None or None in h:
            continue
        hp.append(h[0])
        hv.append(h[1])
        sd.append(s.sd)
    return aggregate.disorder_hexbin(hp, hv, sd, grid_n)


def write_hexbin(path: Path, bins: aggregate.DisorderHazardBins) -> None:
    mean = bins.mean_sd
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_v", "cell_p", "count", "mean_sd"])
        for a in range(bins.grid_n):
            for b in range(bins.grid_n):
                c = int(bins.count[a, b])
                w.writerow([a, b, c, fmt(mean[a, b]) if c else ""])


def landscape_features(manifest: CorpusManifest, hazards: dict, bbox=None) -> list:
    feats = []
    for im in sorted_images(manifest):
        hp, hv = hazards.get(im.image_id, (None, None))
        if hp is None or hv is None or not in_bbox(im, bbox):
            continue
        feats.append(aggregate.LandscapeFeature(im.image_id, im.location, hp, hv))
    return feats


# ---------------------------------------------------------------------------
# mirrors and chord flows


def build_mirror_corpus(scenes: Sequence[ImageScene], hazards: dict) -> MirrorCorpus:
    """Search space of images having an area vector and both scores."""
    rows, surrogates = [], {}
    for s in scenes:
        h = hazards.get(s.image_id)
        if s.area is None or h is None or None in h:
            continue
        rows.append((s.image_id, s.area, h[0], h[1]))
        if s.surrogate is not None:
            surrogates[s.image_id] = s.surrogate
    if not rows:
        raise MirrorError("no image has both an area vector and hazard scores")
    return MirrorCorpus.from_rows(rows, surrogates)


def run_mirrors(corpus: MirrorCorpus, k: int, mode: ConstraintMode, mask_type: AccidentType,
                threads: int = 1, targets: Optional[Sequence[str]] = None) -> tuple[list[MirrorResult], dict]:
    targets = sorted(corpus.ids if targets is None else targets)
    skipped = {}

    def one(iid: str):
        try:
            return find_mirrors(MirrorQuery(iid, k, mask_type, mode), corpus)
        except MirrorError as exc:
            return exc

    results = []
    for iid, res in zip(targets, parallel_map(one, targets, threads)):
        if isinstance(res, MirrorError):
            skipped[iid] = str(res)
        else:
            results.append(res)
    return results, skipped


def mirrors_document(results: Sequence[MirrorResult], skipped: dict, mask_type: AccidentType,
                     threshold: float) -> dict:
    targets = []
    for r in results:
        try:
            ratios = improvement_ratios(r)
        except MirrorError:
            ratios = [(None, None)] * len(r.candidates)
        targets.append({
            "target": r.target_image_id,
            "h_p": round9(r.target_h_p),
            "h_v": round9(r.target_h_v),
            "shortfall": r.shortfall,
            "candidates": [
                {
                    "image_id": c.image_id,
                    "distance": round9(c.distance),
                    "h_p": round9(c.h_p),
                    "h_v": round9(c.h_v),
                    "ratio_p": round9(rp),
                    "ratio_v": round9(rv),
                }
                for c, (rp, rv) in zip(r.candidates, ratios)
            ],
        })
    mode = results[0].mode.value if results else None
    k = results[0].k if results else None
    return {
        "mode": mode,
        "k": k,
        "mask_type": mask_type.value,
        "cam_threshold": threshold,
        "targets": targets,
        "skipped": [{"target": t, "reason": skipped[t]} for t in sorted(skipped)],
    }


def chord_pairs(mirrors_doc: dict, scenes: Sequence[ImageScene], per_target: int = 1) -> list:
    """(target area vector, mirror area vector) for the top mirrors of each target."""
    area = {s.image_id: s.area for s in scenes if s.area is not None}
    pairs = []
    for entry in mirrors_doc["targets"]:
        v_i = area.get(entry["target"])
        if v_i is None:
            continue
        for cand in entry["candidates"][:per_target]:
            v_j = area.get(cand["image_id"])
            if v_j is not None:
                pairs.append((v_i, v_j))
    return pairs


def write_chord(path: Path, flow: np.ndarray, names: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source"] + list(names))
        for name, row in zip(names, flow):
            w.writerow([name] + [fmt(x) for x in row])


# ---------------------------------------------------------------------------
# evaluation


def _curve_json(points) -> list:
    return [{"threshold": None if math.isinf(p.threshold) else round9(p.threshold),
             "x": round9(p.x), "y": round9(p.y)} for p in points]


def _safe(fn, *args):
    try:
        return round9(fn(*args))
    except metrics.MetricError:
        return None


def metrics_document(labels: Sequence[LabeledPoint], hazards: dict, threshold: float) -> dict:
    doc = {"threshold": threshold}
    for k, t in enumerate(ACCIDENT_TYPES):
        pairs = [(1 if lp.counts[t] >= 1 else 0, hazards[lp.image_id][k]) for lp in labels
                 if hazards.get(lp.image_id, (None, None))[k] is not None]
        entry: dict = {"n": len(pairs)}
        if pairs:
            c = metrics.confusion_from_pairs(pairs, threshold)
            entry.update(tp=c.tp, fp=c.fp, tn=c.tn, fn=c.fn,
                         recall=_safe(metrics.recall, c), precision=_safe(metrics.precision, c),
                         accuracy=_safe(metrics.accuracy, c), f1=_safe(metrics.f1, c))
            try:
                roc = metrics.roc_curve(pairs)
                pr = metrics.pr_curve(pairs)
                entry.update(roc_auc=round9(metrics.auc(roc)), pr_auc=round9(metrics.auc(pr)),
                             roc_curve=_curve_json(roc), pr_curve=_curve_json(pr))
            except metrics.MetricError as exc:
                entry["curve_error"] = str(exc)
        doc[t.value] = entry
    return doc


def read_ordinal_probs(path: Path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "image_id" or len(header) < 2:
            raise ValueError(f"{path}: expected header image_id,p_gt_1,...")
        out = {}
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: expected {len(header)} columns, line {reader.line_num}")
            out[row[0]] = [float(x) for x in row[1:]]
    return out


def ordinal_document(labels: Sequence[LabeledPoint], probs: dict) -> dict:
    truths, preds, rows = [], [], []
    for lp in labels:
        p = probs.get(lp.image_id)
        if p is None:
            continue
        composed = metrics.frank_hall_compose(p)
        pred = metrics.ordinal_predict(composed)
        truths.append(int(lp.ordinal_p))
        preds.append(pred)
        rows.append({"image_id": lp.image_id, "truth": int(lp.ordinal_p), "predicted": pred,
                     "class_probs": [round9(x) for x in composed]})
    n_classes = len(next(iter(probs.values()))) + 1 if probs else 4
    present = sorted(set(truths))
    bacc = None
    if truths:
        bacc = round9(metrics.balanced_accuracy(truths, preds, present))
    return {
        "n": len(rows),
        "n_classes": n_classes,
        "classes_present": present,
        "balanced_accuracy": bacc,
        "dummy_balanced_accuracy": round9(1 / len(present)) if present else None,
        "images": rows,
    }


def write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")
