"""Command-line front end.

Every subcommand exits 0 on success; failures print one machine-readable
JSON line to stderr ({"error": <class>, "message": ...}) and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import HistosegError
from .evaluation import render_json, render_overlay, render_table
from .histogram import compute_histogram, drift_score, load_reference, save_reference, to_pmf
from .imaging import load_gray, load_mask, load_prob, save_mask, save_rgb
from .losses import LOSS_FUNCTIONS, LossConfig, finite_diff_gradient
from .pipeline import (
    Manifest,
    RunConfig,
    SplitSpec,
    build_reference,
    evaluate_run,
    load_manifest,
    manifest_to_text,
    match_batch,
    save_manifest,
    split_manifest,
    synth_dataset,
)
from .segmenter import SegmenterConfig, predict


def _threshold(value: str):
    if value == "otsu":
        return None
    try:
        level = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"threshold must be 'otsu' or an integer, got {value!r}")
    if not 0 <= level <= 255:
        raise argparse.ArgumentTypeError("threshold level must lie in [0, 255]")
    return level


def _fractions(value: str) -> tuple[float, float, float]:
    parts = value.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("fractions must be three comma-separated numbers")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse fractions {value!r}")


def _split_arg(value: str) -> str | None:
    return None if value == "all" else value


def _segmenter_from_args(args) -> SegmenterConfig:
    if args.apply_spec and args.ref is None:
        raise ValueError("--apply-spec requires --ref")
    return SegmenterConfig(
        fixed_level=args.threshold,
        min_component_size=args.min_size,
        keep_largest_k=args.keep_largest,
        apply_specification=args.apply_spec,
        reference=load_reference(args.ref) if args.apply_spec else None,
    )


def _add_segmenter_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--threshold", type=_threshold, default=None,
                        help="'otsu' (default) or a fixed level in [0, 255]")
    parser.add_argument("--min-size", type=int, default=0,
                        help="drop components smaller than this many pixels")
    parser.add_argument("--keep-largest", type=int, default=None,
                        help="keep only the k largest components")
    parser.add_argument("--apply-spec", action="store_true",
                        help="harmonize each image to --ref before thresholding")
    parser.add_argument("--ref", default=None, help="reference histogram file")


def cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    fracs = args.fractions
    spec = SplitSpec(train_fraction=fracs[0], val_fraction=fracs[1], test_fraction=fracs[2],
                     seed=args.seed)
    tagged = split_manifest(manifest, spec)
    if args.out == "-":
        sys.stdout.write(manifest_to_text(tagged))
    else:
        save_manifest(tagged, args.out)
    counts = tagged.split_counts()
    print(f"split {len(tagged)} entries: train={counts['train']} val={counts['val']} "
          f"test={counts['test']}", file=sys.stderr)
    return 0


def cmd_build_ref(args) -> int:
    manifest = load_manifest(args.manifest)
    reference = build_reference(manifest, split=args.split)
    save_reference(reference, args.out)
    print(f"reference over {reference.source_images} image(s) written to {args.out}")
    return 0


def cmd_match(args) -> int:
    manifest = load_manifest(args.manifest)
    reference = load_reference(args.ref)
    written = match_batch(manifest, reference, args.out_dir,
                          split=_split_arg(args.split), workers=args.workers)
    for path in written:
        print(path)
    return 0


def cmd_predict(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _segmenter_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for entry in manifest.select(_split_arg(args.split)):
        mask = predict(load_gray(entry.image_path), cfg)
        path = out_dir / f"{entry.image_id}.png"
        save_mask(mask, path)
        print(path)
    return 0


def cmd_evaluate(args) -> int:
    if args.pred_dir is not None:
        segmenter = None
        reference_path = None
    else:
        if args.apply_spec and args.ref is None:
            raise ValueError("--apply-spec requires --ref")
        # harmonization goes through reference_path so the file loads once
        segmenter = SegmenterConfig(
            fixed_level=args.threshold,
            min_component_size=args.min_size,
            keep_largest_k=args.keep_largest,
        )
        reference_path = args.ref if args.apply_spec else None
    cfg = RunConfig(
        manifest_path=args.manifest,
        output_dir=args.out_dir,
        segmenter=segmenter,
        predictions_dir=args.pred_dir,
        reference_path=reference_path,
        split=_split_arg(args.split),
        report_format=args.report,
        workers=args.workers,
    )
    report = evaluate_run(cfg)
    if args.report == "json":
        sys.stdout.write(render_json(report))
    else:
        sys.stdout.write(render_table(report))
    return 0


def cmd_overlay(args) -> int:
    pred = load_mask(args.pred)
    gt = load_mask(args.gt)
    save_rgb(render_overlay(pred, gt), args.out)
    print(args.out)
    return 0


def cmd_drift(args) -> int:
    reference = load_reference(args.ref)
    target = Path(args.path)
    paths = sorted(target.glob("*.png")) if target.is_dir() else [target]
    if not paths:
        raise FileNotFoundError(f"no .png files under {target}")
    scores = []
    for path in paths:
        pmf = to_pmf(compute_histogram(load_gray(path)))
        score = drift_score(pmf, reference.pmf)
        scores.append(score)
        print(f"{path}\t{score:.6f}")
    if len(scores) > 1:
        print(f"mean\t{sum(scores) / len(scores):.6f}")
    return 0


def cmd_synth(args) -> int:
    manifest = synth_dataset(
        args.out_dir,
        args.count,
        gamma=args.gamma,
        noise_level=args.noise,
        seed=args.seed,
        size=args.size,
        fg_level=args.fg_level,
        bg_level=args.bg_level,
        prefix=args.prefix,
        split=args.split,
    )
    print(f"wrote {len(manifest)} image/mask pairs under {args.out_dir}")
    return 0


def cmd_loss_check(args) -> int:
    pred = load_prob(args.pred)
    gt = load_mask(args.mask)
    cfg = LossConfig(epsilon_smooth=args.eps_smooth, epsilon_clamp=args.eps_clamp,
                     w_bce=args.w_bce, w_iou=args.w_iou)
    result = LOSS_FUNCTIONS[args.loss](pred, gt, cfg)
    numeric = finite_diff_gradient(args.loss, pred, gt, cfg, step=args.step)
    denom = np.maximum(np.abs(numeric), 1e-12)
    max_rel = float(np.max(np.abs(result.gradient - numeric) / denom))
    print(json.dumps({
        "loss": args.loss,
        "value": result.value,
        "max_rel_gradient_error": max_rel,
        "step": args.step,
    }))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="histoseg",
        description="Histogram harmonization and segmentation scoring for 8-bit rasters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="assign train/val/test tags to a manifest")
    p.add_argument("manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fractions", type=_fractions, default=(0.7, 0.1, 0.2),
                   help="train,val,test fractions (default 0.7,0.1,0.2)")
    p.add_argument("--out", default="-", help="output manifest path, '-' for stdout")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("build-ref", help="average a split's histograms into a reference")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")
    p.set_defaults(func=cmd_build_ref)

    p = sub.add_parser("match", help="harmonize images to a reference histogram")
    p.add_argument("manifest")
    p.add_argument("--ref", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default="test", help="split tag or 'all'")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("predict", help="run the baseline segmenter over a manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default="test", help="split tag or 'all'")
    _add_segmenter_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("manifest")
    p.add_argument("--pred-dir", default=None,
                   help="directory of external prediction masks (<image_id>.png)")
    p.add_argument("--out-dir", default="histoseg-eval")
    p.add_argument("--split", default="test", help="split tag or 'all'")
    p.add_argument("--report", choices=("table", "json"), default="table")
    p.add_argument("--workers", type=int, default=1)
    _add_segmenter_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("overlay", help="render a color-coded agreement overlay")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("drift", help="total variation distance to a reference")
    p.add_argument("path", help="an image file or a directory of .png files")
    p.add_argument("--ref", required=True)
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("synth", help="generate a synthetic ellipse dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=25.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--fg-level", type=int, default=180)
    p.add_argument("--bg-level", type=int, default=40)
    p.add_argument("--prefix", default="synth")
    p.add_argument("--split", default="unassigned")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("loss-check", help="loss value and gradient check for one pair")
    p.add_argument("--pred", required=True, help="8-bit raster read as probabilities /255")
    p.add_argument("--mask", required=True)
    p.add_argument("--loss", choices=sorted(LOSS_FUNCTIONS), default="bce-iou")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--eps-smooth", type=float, default=1.0)
    p.add_argument("--eps-clamp", type=float, default=1e-6)
    p.add_argument("--w-bce", type=float, default=1.0)
    p.add_argument("--w-iou", type=float, default=1.0)
    p.set_defaults(func=cmd_loss_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (HistosegError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
