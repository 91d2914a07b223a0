"""``streethazard`` command line.

Exit codes: 0 success, 1 validation failure or invalid data, 2 I/O error,
64 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import aggregate, pipeline
from .aggregate import AggregateError
from .config import ConfigError, RunConfig, resolve_config
from .ingest import AccidentType, AnalysisFlags, CorpusError, load_corpus, validate_corpus
from .metrics import MetricError
from .mirror import ConstraintMode, MirrorError
from .scene import SceneError
from .synth import SynthSpec, generate_corpus

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_USAGE = 64

COMMANDS = ("validate", "label", "score", "scene", "radar", "hexbin", "mirror",
            "chord", "landscape", "metrics", "ordinal", "synth")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--corpus", help="directory holding images.csv and accidents.csv")
    p.add_argument("--images", help="image manifest CSV")
    p.add_argument("--accidents", help="accident records CSV")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--categories", help="JSON list of 19 category names")
    p.add_argument("--threads", type=int, help="worker threads for per-image work")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streethazard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _common(p)
        return p

    p = cmd("validate", "report missing or inconsistent corpus artifacts")
    p.add_argument("--analyses", default="hazard,scene,fixation,mirror",
                   help="comma list from hazard,scene,fixation,mirror")
    p.add_argument("--mask-type", choices=["P", "V", "p", "v"])

    p = cmd("label", "count accidents around each image -> labels.csv")
    p.add_argument("--radius-m", type=float)

    p = cmd("score", "hazard index per image -> scores.csv")
    p.add_argument("--band-lo", type=float)
    p.add_argument("--band-hi", type=float)

    p = cmd("scene", "disorder, area, fixation and surrogate vectors -> scene.csv")
    p.add_argument("--cam-threshold", type=float)
    p.add_argument("--mask-type", choices=["P", "V", "p", "v"])

    p = cmd("radar", "fixation ratios of safe/dangerous scenes -> radar.json")
    p.add_argument("--band-lo", type=float)
    p.add_argument("--band-hi", type=float)
    p.add_argument("--grouping", help="JSON map of display group -> category names")
    p.add_argument("--bbox", help="min_lat,min_lon,max_lat,max_lon")

    p = cmd("hexbin", "mean disorder over a (H_V, H_P) grid -> hexbin.csv")
    p.add_argument("--grid-n", type=int)
    p.add_argument("--bbox", help="min_lat,min_lon,max_lat,max_lon")

    p = cmd("mirror", "lower-hazard nearest scenes per target -> mirrors.json")
    p.add_argument("--k", type=int)
    p.add_argument("--cam-threshold", type=float)
    p.add_argument("--mode", choices=["both", "dummy"])
    p.add_argument("--mask-type", choices=["P", "V", "p", "v"])
    p.add_argument("--targets", help="comma list of target image ids (default: all)")

    p = cmd("chord", "aggregate category flows target -> mirror -> chord.csv")
    p.add_argument("--mirrors", help="mirrors.json (default: OUT/mirrors.json)")
    p.add_argument("--per-target", type=int, help="mirrors per target to aggregate (default 1)")
    p.add_argument("--grouping", help="JSON map of display group -> category names")

    p = cmd("landscape", "hazard points as GeoJSON -> landscape.geojson")
    p.add_argument("--only", help="comma list of selectors: HighPOnly,HighVOnly,Both,Neither")
    p.add_argument("--band-lo", type=float)
    p.add_argument("--band-hi", type=float)
    p.add_argument("--bbox", help="min_lat,min_lon,max_lat,max_lon")

    p = cmd("metrics", "binary classification metrics -> metrics.json")
    p.add_argument("--threshold", type=float)
    p.add_argument("--radius-m", type=float)

    p = cmd("ordinal", "ordinal composition and balanced accuracy -> ordinal.json")
    p.add_argument("--probs", help="CSV image_id,p_gt_1,p_gt_2,p_gt_3 (default: CORPUS/ordinal_probs.csv)")
    p.add_argument("--radius-m", type=float)

    p = sub.add_parser("synth", help="write a deterministic synthetic corpus")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-images", type=int)
    p.add_argument("--out", help="corpus directory to create")
    p.add_argument("--sd-coupling", type=float, default=1.0)
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "corpus", "analyses", "targets")}
    if getattr(args, "corpus", None):
        corpus = Path(args.corpus)
        if flags.get("images") is None:
            flags["images"] = str(corpus / "images.csv")
        if flags.get("accidents") is None and (corpus / "accidents.csv").exists():
            flags["accidents"] = str(corpus / "accidents.csv")
        if args.command == "ordinal" and flags.get("probs") is None:
            flags["probs"] = str(corpus / "ordinal_probs.csv")
    return resolve_config(flags, args.config)


def _manifest(cfg: RunConfig, need_accidents: bool = False):
    if cfg.images is None:
        raise UsageError("missing required input: --images or --corpus")
    if need_accidents and cfg.accidents is None:
        raise UsageError("missing required input: --accidents or --corpus with accidents.csv")
    return load_corpus(cfg.images, cfg.accidents, cfg.categories)


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _mask(cfg: RunConfig) -> AccidentType:
    return AccidentType(cfg.mask_type.upper())


def _filtered(manifest, cfg: RunConfig):
    return [im for im in pipeline.sorted_images(manifest) if pipeline.in_bbox(im, cfg.bbox)]


def cmd_validate(args, cfg: RunConfig) -> int:
    names = {a.strip() for a in args.analyses.split(",") if a.strip()}
    unknown = names - {"hazard", "scene", "fixation", "mirror"}
    if unknown:
        raise UsageError(f"unknown analyses {sorted(unknown)}")
    flags = AnalysisFlags(**{n: n in names for n in ("hazard", "scene", "fixation", "mirror")})
    manifest = _manifest(cfg)
    report = validate_corpus(manifest, flags, _mask(cfg))
    doc = {
        "n_images": len(manifest.images),
        "n_accidents": len(manifest.accidents),
        "analyses": sorted(names),
        "issues": [{"image_id": i.image_id, "kind": i.kind, "detail": i.detail} for i in report.issues],
    }
    out = _out(cfg)
    pipeline.write_json(out / "validation.json", doc)
    for issue in report.issues:
        print(f"{issue.image_id}: {issue.kind}: {issue.detail}", file=sys.stderr)
    status = "ok" if report.ok else f"{len(report)} issue(s)"
    print(f"validate: {len(manifest.images)} images, {status} -> {out / 'validation.json'}")
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_label(args, cfg: RunConfig) -> int:
    manifest = _manifest(cfg, need_accidents=True)
    labels = pipeline.run_labels(manifest, cfg.radius_m)
    out = _out(cfg)
    pipeline.write_labels(out / "labels.csv", labels)
    n_p = sum(1 for lp in labels if lp.counts[AccidentType.P] >= 1)
    n_v = sum(1 for lp in labels if lp.counts[AccidentType.V] >= 1)
    print(f"label: {len(labels)} images, dangerous P={n_p} V={n_v} at {cfg.radius_m:g} m -> {out / 'labels.csv'}")
    return EXIT_OK


def cmd_score(args, cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    hazards = pipeline.hazard_table(manifest)
    out = _out(cfg)
    pipeline.write_scores(out / "scores.csv", hazards, cfg.band_lo, cfg.band_hi)
    missing = sum(1 for h in hazards.values() if None in h)
    print(f"score: {len(hazards)} images, {missing} with a missing score -> {out / 'scores.csv'}")
    return EXIT_OK


def cmd_scene(args, cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    scenes = pipeline.compute_scenes(manifest, cfg.cam_threshold, _mask(cfg), cfg.threads)
    out = _out(cfg)
    pipeline.write_scene(out / "scene.csv", scenes, _mask(cfg))
    for s in scenes:
        for note in s.notes:
            print(f"{s.image_id}: {note}", file=sys.stderr)
    print(f"scene: {len(scenes)} images -> {out / 'scene.csv'}")
    return EXIT_OK


def cmd_radar(args, cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    images = _filtered(manifest, cfg)
    scenes = pipeline.compute_scenes(manifest, cfg.cam_threshold, _mask(cfg), cfg.threads, images)
    hazards = pipeline.hazard_table(manifest)
    doc = pipeline.radar_document(scenes, hazards, manifest.category_names, cfg.band_lo, cfg.band_hi,
                                  aggregate.load_grouping(cfg.grouping))
    out = _out(cfg)
    pipeline.write_json(out / "radar.json", doc)
    print(f"radar: {len(scenes)} images -> {out / 'radar.json'}")
    return EXIT_OK


def cmd_hexbin(args, cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    images = _filtered(manifest, cfg)
    scenes = pipeline.compute_scenes(manifest, cfg.cam_threshold, _mask(cfg), cfg.threads, images,
                                     fixation_types=())
    bins = pipeline.hexbin_from(scenes, pipeline.hazard_table(manifest), cfg.grid_n)
    out = _out(cfg)
    pipeline.write_hexbin(out / "hexbin.csv", bins)
    print(f"hexbin: {int(bins.count.sum())} images in {int((bins.count > 0).sum())} cells -> {out / 'hexbin.csv'}")
    return EXIT_OK


def cmd_mirror(args, cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    mask = _mask(cfg)
    scenes = pipeline.compute_scenes(manifest, cfg.cam_threshold, mask, cfg.threads, fixation_types=())
    corpus = pipeline.build_mirror_corpus(scenes, pipeline.hazard_table(manifest))
    targets = None
    if args.targets:
        targets = [t.strip() for t in args.targets.split(",") if t.strip()]
    results, skipped = pipeline.run_mirrors(corpus, cfg.k, ConstraintMode(cfg.mode), mask, cfg.threads, targets)
    doc = pipeline.mirrors_document(results, skipped, mask, cfg.cam_threshold)
    doc["mode"], doc["k"] = cfg.mode, cfg.k
    out = _out(cfg)
    pipeline.write_json(out / "mirrors.json", doc)
    short = sum(1 for r in results if r.shortfall)
    print(f"mirror: {len(results)} targets ({short} shortfall, {len(skipped)} skipped), "
          f"mode={cfg.mode} k={cfg.k} -> {out / 'mirrors.json'}")
    return EXIT_OK


def cmd_chord(args, cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    out = _out(cfg)
    mirrors_path = Path(cfg.mirrors) if cfg.mirrors else out / "mirrors.json"
    with open(mirrors_path, encoding="utf-8") as fh:
        mirrors_doc = json.load(fh)
    scenes = pipeline.compute_scenes(manifest, cfg.cam_threshold, _mask(cfg), cfg.threads, fixation_types=())
    pairs = pipeline.chord_pairs(mirrors_doc, scenes, cfg.per_target)
    flow = aggregate.chord_flows(pairs, len(manifest.category_names))
    names, member = aggregate.group_index(manifest.category_names, aggregate.load_grouping(cfg.grouping))
    pipeline.write_chord(out / "chord.csv", aggregate.group_flows(flow, member), names)
    print(f"chord: {len(pairs)} interventions, total flow {float(np.sum(flow)):.6g} -> {out / 'chord.csv'}")
    return EXIT_OK


def cmd_landscape(args, cfg: RunConfig) -> int:
    manifest = _manifest(cfg)
    only = None
    if cfg.only:
        try:
            only = [aggregate.Selector(s.strip()) for s in cfg.only.split(",") if s.strip()]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    feats = pipeline.landscape_features(manifest, pipeline.hazard_table(manifest), cfg.bbox)
    doc = aggregate.landscape_export(feats, only, cfg.band_lo, cfg.band_hi)
    out = _out(cfg)
    pipeline.write_json(out / "landscape.geojson", doc)
    print(f"landscape: {len(doc['features'])} features -> {out / 'landscape.geojson'}")
    return EXIT_OK


def cmd_metrics(args, cfg: RunConfig) -> int:
    manifest = _manifest(cfg, need_accidents=True)
    labels = pipeline.run_labels(manifest, cfg.radius_m)
    doc = pipeline.metrics_document(labels, pipeline.hazard_table(manifest), cfg.threshold)
    out = _out(cfg)
    pipeline.write_json(out / "metrics.json", doc)
    parts = [f"{t}: acc={doc[t].get('accuracy')} roc_auc={doc[t].get('roc_auc')}" for t in ("P", "V")]
    print(f"metrics: {'; '.join(parts)} -> {out / 'metrics.json'}")
    return EXIT_OK


def cmd_ordinal(args, cfg: RunConfig) -> int:
    manifest = _manifest(cfg, need_accidents=True)
    if cfg.probs is None:
        raise UsageError("missing required input: --probs")
    labels = pipeline.run_labels(manifest, cfg.radius_m)
    doc = pipeline.ordinal_document(labels, pipeline.read_ordinal_probs(Path(cfg.probs)))
    out = _out(cfg)
    pipeline.write_json(out / "ordinal.json", doc)
    print(f"ordinal: {doc['n']} images, balanced accuracy {doc['balanced_accuracy']} "
          f"(dummy {doc['dummy_balanced_accuracy']}) -> {out / 'ordinal.json'}")
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    spec = SynthSpec(seed=cfg.seed, n_images=cfg.n_images, sd_coupling=args.sd_coupling)
    out = Path(cfg.out)
    manifest = generate_corpus(spec, out)
    print(f"synth: {len(manifest.images)} images, {len(manifest.accidents)} accidents, seed {spec.seed} -> {out}")
    return EXIT_OK


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        return HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        print(f"streethazard {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"streethazard {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, SceneError, MirrorError, MetricError, AggregateError, ValueError) as exc:
        print(f"streethazard {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"streethazard {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
