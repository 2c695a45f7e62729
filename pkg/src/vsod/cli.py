"""Command-line entry point: ``vsod <subcommand> [--config pipeline.json] ...``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .annotate import annotate_video, average_annotation_map, dataset_stats, write_annotation_tables, write_stats
from .config import ConfigError, PipelineConfig
from .dataset_io import DataError, _numbered_files, list_videos, load_fixations, load_object_masks, load_video, read_mask
from .encoder import NumericalError, StackedEncoder
from .evaluation import evaluate_dirs, write_report
from .pipeline import extract_dataset, infer_video, profile, run_pipeline, train_model, write_maps
from .synthetic import SuiteParams, generate_suite

log = logging.getLogger("vsod")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config)
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        cfg.set(key, _parse_value(value))
    if getattr(args, "seed", None) is not None:
        cfg.set("train.seed", args.seed)
    if getattr(args, "window", None) is not None:
        cfg.set("window.w", args.window)
    if getattr(args, "cues", None):
        cfg.set("cues.enabled", args.cues.split(","))
    return cfg


def cmd_extract(args) -> int:
    cfg = load_config(args)
    vcs = extract_dataset(Path(args.dataset), cfg, Path(args.cache), args.jobs)
    print(f"extracted cues for {len(vcs)} videos into {args.cache}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args)
    vcs = extract_dataset(Path(args.dataset), cfg, Path(args.cache) if args.cache else None, args.jobs)
    model = train_model(vcs, cfg)
    model.save(args.model)
    print(f"model written to {args.model} (corr_sign={model.corr_sign}, c={model.corr_value:.4f})")
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = load_config(args)
    model = StackedEncoder.load(args.model)
    cfg.set("window.w", model.window)
    cfg.set("cues.enabled", list(model.cues_enabled))
    out = Path(args.out)
    for vc in extract_dataset(Path(args.dataset), cfg, Path(args.cache) if args.cache else None, args.jobs):
        write_maps(out, vc, infer_video(model, vc, cfg))
    print(f"saliency maps written to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args)
    manifest = run_pipeline(cfg, args.dataset, args.out, args.model, args.jobs, args.cache)
    print(f"{manifest['n_frames']} maps written to {args.out} (config {manifest['config_hash'][:12]})")
    return EXIT_OK


def cmd_annotate(args) -> int:
    cfg = load_config(args)
    params = cfg.density_params()
    out = Path(args.out) if args.out else None
    rows_scores, rows_discards, per_video_masks = [], [], []
    for vdir in list_videos(args.dataset):
        seq = load_video(vdir)
        masks = load_object_masks(vdir / "objects")
        fix = load_fixations(vdir / "fixations.csv", seq.size)
        gt_dir = (out / seq.video_id / "gt") if out else vdir / "gt"
        scores, salient, kept, discards = annotate_video(seq, masks, fix, gt_dir, params)
        rows_scores += [(seq.video_id, s.label, s.video_score, len(s.per_keyframe_density), int(s.label in salient))
                        for s in scores]
        rows_discards += [(seq.video_id, n, r) for n, r in discards]
        per_video_masks.append([m for _, m in kept])
    root = out or Path(args.dataset)
    root.mkdir(parents=True, exist_ok=True)
    write_annotation_tables(root, rows_scores, rows_discards)
    if any(per_video_masks):
        aam = average_annotation_map(per_video_masks, (args.aam_size, args.aam_size))
        Image.fromarray(np.rint(aam * 255).astype(np.uint8)).save(root / "aam.png")
    write_stats(root / "stats.json", dataset_stats({"all": [m for ms in per_video_masks for m in ms]}))
    print(f"annotated {len(per_video_masks)} videos; {len(rows_discards)} keyframes discarded")
    return EXIT_OK


def cmd_eval(args) -> int:
    report = evaluate_dirs(args.gt, args.pred, curves=args.curves)
    for out in args.out:
        write_report(report, out)
    print(f"MAP={report.MAP:.4f} MAR={report.MAR:.4f} F_beta={report.F_beta:.4f} MAE={report.MAE:.4f}")
    return EXIT_OK


def cmd_stats(args) -> int:
    subsets = {}
    for vdir in list_videos(args.dataset):
        files = _numbered_files(vdir / "gt", (".png",)) if (vdir / "gt").is_dir() else []
        subsets.setdefault("all", []).extend(read_mask(f) for f in files)
    report = dataset_stats(subsets)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK


def cmd_profile(args) -> int:
    cfg = load_config(args)
    model = StackedEncoder.load(args.model) if args.model else None
    report = profile(args.dataset, cfg, model)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    p = SuiteParams(n_videos=args.videos, n_frames=args.frames, seed=args.seed)
    dirs = generate_suite(args.out, p)
    print(f"wrote {len(dirs)} synthetic videos to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vsod", description="Video salient object detection pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=True):
        p.add_argument("--config", help="pipeline JSON config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted config key")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for cue extraction")
        p.add_argument("--seed", type=int, help="override train.seed")
        p.add_argument("--window", type=int, help="override window.w")
        p.add_argument("--cues", help="comma-separated cues.enabled, e.g. pixel,superpixel")
        if dataset:
            p.add_argument("dataset", help="dataset root with <video>/frames/")

    p = sub.add_parser("extract", help="compute and cache per-frame cue maps")
    common(p)
    p.add_argument("--cache", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the stacked encoder")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--cache")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="saliency maps from a trained model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cache")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("run", help="extract, train if needed, infer, post-process")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--model", help="model path; trained and written here when missing")
    p.add_argument("--cache")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("annotate", help="ground-truth masks from fixations and object labels")
    common(p)
    p.add_argument("--out", help="output root (default: write into the dataset)")
    p.add_argument("--aam-size", type=int, default=256)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("eval", help="score saliency maps against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", nargs="+", default=[], help="report.json and/or report.csv")
    p.add_argument("--curves", action="store_true", help="add 256-threshold PR curves per video")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="object count and area statistics of ground-truth masks")
    p.add_argument("dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("profile", help="seconds per frame for each stage")
    common(p)
    p.add_argument("--model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("synth", help="generate the synthetic test suite")
    p.add_argument("out")
    p.add_argument("--videos", type=int, default=5)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
