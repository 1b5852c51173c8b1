"""Dataset manifest, split, batch harmonization, evaluation runs, synthetic data.

The manifest is line-oriented text (tab-separated: id, image path, mask
path or "-", split tag), with a JSON variant accepted on input. Shuffling
uses numpy's seeded PCG64 generator so splits are reproducible anywhere.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import json

import numpy as np

from .errors import (
    BatchWriteError,
    DimensionMismatchError,
    EmptySplitError,
    HistosegError,
    ManifestError,
    MissingMaskError,
    TooFewEntriesError,
)
from .evaluation import EvalReport, ImageResult, evaluate_pair, make_report, render_json, render_table
from .histogram import (
    ReferenceHistogram,
    average_reference,
    compute_histogram,
    load_reference,
    specify,
)
from .imaging import BinaryMask, GrayImage, load_gray, load_mask, save_gray, save_mask
from .segmenter import SegmenterConfig, load_external_predictions, predict

SPLIT_TAGS = ("train", "val", "test", "unassigned")


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: str
    mask_path: str | None = None
    split: str = "unassigned"

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ManifestError("image id must be non-empty")
        if any(c in self.image_id for c in "\t\n/"):
            raise ManifestError(f"image id {self.image_id!r} contains reserved characters")
        if not self.image_path:
            raise ManifestError(f"entry {self.image_id!r} has an empty image path")
        if self.split not in SPLIT_TAGS:
            raise ManifestError(f"unknown split tag {self.split!r} for {self.image_id!r}")


@dataclass(frozen=True)
class Manifest:
    """Ordered collection of dataset entries with unique ids."""

    entries: tuple[ManifestEntry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            if e.image_id in seen:
                raise ManifestError(f"duplicate image id {e.image_id!r}")
            seen.add(e.image_id)

    def __len__(self) -> int:
        return len(self.entries)

    def select(self, split: str | None) -> tuple[ManifestEntry, ...]:
        """Entries carrying the given split tag; None selects everything."""
        if split is None:
            return self.entries
        if split not in SPLIT_TAGS:
            raise ManifestError(f"unknown split tag {split!r}")
        return tuple(e for e in self.entries if e.split == split)

    def split_counts(self) -> dict[str, int]:
        counts = {tag: 0 for tag in SPLIT_TAGS}
        for e in self.entries:
            counts[e.split] += 1
        return counts


@dataclass(frozen=True)
class SplitSpec:
    """Fractions for train/val/test plus the shuffle seed.

    Counts follow floor / half-up-round / remainder:
    train = floor(train_fraction * n), val = round(val_fraction * n),
    test = the rest. Fractions must sum to one.
    """

    train_fraction: float = 0.7
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f < 0 for f in fracs):
            raise ValueError("split fractions must be non-negative")
        if sum(self._exact()) != 1:
            raise ValueError(f"split fractions must sum to 1, got {fracs}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    def _exact(self) -> tuple[Fraction, Fraction, Fraction]:
        # Fractions given as decimals ("0.7") are treated exactly, so count
        # arithmetic never suffers binary float artifacts.
        return (
            Fraction(str(self.train_fraction)),
            Fraction(str(self.val_fraction)),
            Fraction(str(self.test_fraction)),
        )

    def counts(self, n: int) -> tuple[int, int, int]:
        train_f, val_f, _ = self._exact()
        train_n = math.floor(train_f * n)
        val_n = math.floor(val_f * n + Fraction(1, 2))
        test_n = n - train_n - val_n
        return train_n, val_n, test_n


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """Write the line-oriented form: id, image path, mask path or '-', split."""
    lines = []
    for e in manifest.entries:
        mask = e.mask_path if e.mask_path else "-"
        lines.append(f"{e.image_id}\t{e.image_path}\t{mask}\t{e.split}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def manifest_to_text(manifest: Manifest) -> str:
    lines = []
    for e in manifest.entries:
        mask = e.mask_path if e.mask_path else "-"
        lines.append(f"{e.image_id}\t{e.image_path}\t{mask}\t{e.split}")
    return "\n".join(lines) + "\n"


def _entry_from_obj(obj: dict) -> ManifestEntry:
    try:
        image_id = obj["image_id"]
        image_path = obj["image_path"]
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"manifest record missing required field: {exc}") from exc
    mask_path = obj.get("mask_path") or None
    split = obj.get("split", "unassigned")
    return ManifestEntry(image_id=image_id, image_path=image_path, mask_path=mask_path, split=split)


def load_manifest(path: str | Path) -> Manifest:
    """Read a manifest; accepts the line form and a JSON document variant.

    Raises:
        FileNotFoundError: path does not exist.
        ManifestError: malformed rows, unknown tags or duplicate ids.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such manifest: {path}")
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
        records = doc.get("entries") if isinstance(doc, dict) else doc
        if not isinstance(records, list):
            raise ManifestError(f"manifest {path} must hold a list of records")
        return Manifest(tuple(_entry_from_obj(r) for r in records))
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ManifestError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(fields)}")
        image_id, image_path, mask_path, split = fields
        entries.append(
            ManifestEntry(
                image_id=image_id,
                image_path=image_path,
                mask_path=None if mask_path == "-" else mask_path,
                split=split,
            )
        )
    return Manifest(tuple(entries))


def split_manifest(manifest: Manifest, spec: SplitSpec) -> Manifest:
    """Assign train/val/test tags by seeded shuffle.

    The permutation comes from numpy's PCG64 generator seeded with
    spec.seed; the first train-count entries of the shuffled order become
    train, then val, then test. Entry order in the returned manifest is
    unchanged.

    Raises:
        TooFewEntriesError: fewer than 3 entries.
        ManifestError: some entry already carries a split tag.
    """
    n = len(manifest)
    if n < 3:
        raise TooFewEntriesError(f"need at least 3 entries to split, got {n}")
    if any(e.split != "unassigned" for e in manifest.entries):
        raise ManifestError("manifest already carries split tags")
    train_n, val_n, _ = spec.counts(n)
    order = np.random.default_rng(spec.seed).permutation(n)
    tags = [""] * n
    for rank, idx in enumerate(order):
        if rank < train_n:
            tags[idx] = "train"
        elif rank < train_n + val_n:
            tags[idx] = "val"
        else:
            tags[idx] = "test"
    return Manifest(tuple(replace(e, split=tags[i]) for i, e in enumerate(manifest.entries)))


def build_reference(manifest: Manifest, split: str = "train") -> ReferenceHistogram:
    """Average the normalized histograms of every image in a split.

    Raises:
        EmptySplitError: the split has no entries.
    """
    entries = sorted(manifest.select(split), key=lambda e: e.image_id)
    if not entries:
        raise EmptySplitError(f"no entries tagged {split!r} to build a reference from")
    histograms = [compute_histogram(load_gray(e.image_path)) for e in entries]
    return average_reference(histograms)


def _run_indexed(entries, fn, workers: int):
    """Apply fn to entries, optionally fanning out; results keyed by id."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return dict(zip((e.image_id for e in entries), pool.map(fn, entries)))
    return {e.image_id: fn(e) for e in entries}


def match_batch(
    manifest: Manifest,
    reference: ReferenceHistogram,
    out_dir: str | Path,
    split: str | None = None,
    workers: int = 1,
) -> list[Path]:
    """Harmonize every selected image to the reference and write the results.

    Output files are named <image_id>.png. Re-running overwrites them.
    Per-file failures are collected and raised together with their ids.

    Returns:
        Written paths, sorted by image id.
    """
    entries = manifest.select(split)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures: list[tuple[str, Exception]] = []

    def one(entry: ManifestEntry) -> Path | None:
        try:
            img = load_gray(entry.image_path)
            save_gray(specify(img, reference), out_dir / f"{entry.image_id}.png")
            return out_dir / f"{entry.image_id}.png"
        except (HistosegError, OSError) as exc:
            failures.append((entry.image_id, exc))
            return None

    results = _run_indexed(entries, one, workers)
    if failures:
        raise BatchWriteError(sorted(failures, key=lambda f: f[0]))
    return [results[image_id] for image_id in sorted(results)]


@dataclass(frozen=True)
class RunConfig:
    """One evaluation run over a manifest split.

    Predictions come either from the baseline segmenter (`segmenter` set)
    or from a directory of externally produced masks (`predictions_dir`
    set); exactly one of the two must be given. Setting `reference_path`
    switches harmonization on: the file is loaded and every image is
    matched to it before thresholding, overriding any reference already
    attached to the segmenter.
    """

    manifest_path: str | Path
    output_dir: str | Path
    segmenter: SegmenterConfig | None = None
    predictions_dir: str | Path | None = None
    reference_path: str | Path | None = None
    split: str | None = "test"
    report_format: str = "table"
    workers: int = 1

    def __post_init__(self) -> None:
        if (self.segmenter is None) == (self.predictions_dir is None):
            raise ValueError("exactly one of segmenter or predictions_dir must be set")
        if self.reference_path is not None and self.segmenter is None:
            raise ValueError("reference_path applies to the baseline segmenter route only")
        if self.report_format not in ("table", "json"):
            raise ValueError("report_format must be 'table' or 'json'")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


def evaluate_run(cfg: RunConfig) -> EvalReport:
    """Score predictions against ground truth for a manifest split.

    Writes report.json and report.txt under cfg.output_dir and returns the
    report. Per-image rows are sorted by image id, so results do not depend
    on worker count.

    Raises:
        EmptySplitError: the selected split has no entries.
        MissingMaskError: an entry lacks a ground-truth mask.
        MissingPredictionError / DimensionMismatchError: bad external predictions.
    """
    manifest = load_manifest(cfg.manifest_path)
    entries = manifest.select(cfg.split)
    if not entries:
        raise EmptySplitError(f"no entries selected for split {cfg.split!r}")
    selection = Manifest(entries)

    if cfg.predictions_dir is not None:
        pred_dir = Path(cfg.predictions_dir)
        if not pred_dir.is_dir():
            raise FileNotFoundError(f"no such predictions directory: {pred_dir}")
        predictions = load_external_predictions(pred_dir, selection)
    else:
        seg = cfg.segmenter
        if cfg.reference_path is not None:
            seg = replace(seg, apply_specification=True,
                          reference=load_reference(cfg.reference_path))

        def one(entry: ManifestEntry):
            return predict(load_gray(entry.image_path), seg)

        predictions = _run_indexed(entries, one, cfg.workers)

    results = []
    for entry in entries:
        if entry.mask_path is None:
            raise MissingMaskError(entry.image_id)
        mask_path = Path(entry.mask_path)
        if not mask_path.is_file():
            raise MissingMaskError(entry.image_id)
        gt = load_mask(mask_path)
        pred = predictions[entry.image_id]
        if pred.labels.shape != gt.labels.shape:
            raise DimensionMismatchError(
                f"prediction for {entry.image_id!r} is {pred.width}x{pred.height}, "
                f"mask is {gt.width}x{gt.height}"
            )
        d, j, counts = evaluate_pair(pred, gt)
        results.append(ImageResult(image_id=entry.image_id, dice=d, iou=j, counts=counts))

    report = make_report(results)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(render_json(report), encoding="utf-8")
    (out_dir / "report.txt").write_text(render_table(report), encoding="utf-8")
    return report


def _gamma_table(gamma: float) -> np.ndarray:
    levels = np.arange(256, dtype=np.float64)
    return np.floor(255.0 * (levels / 255.0) ** gamma + 0.5).astype(np.uint8)


def synth_dataset(
    out_dir: str | Path,
    count: int,
    gamma: float = 1.0,
    noise_level: float = 0.0,
    seed: int = 0,
    *,
    size: int = 96,
    fg_level: int = 180,
    bg_level: int = 40,
    prefix: str = "synth",
    split: str = "unassigned",
) -> Manifest:
    """Generate a synthetic bright-ellipse dataset with exact masks.

    Each image has a single elliptical foreground region at fg_level on a
    bg_level background, plus additive uniform noise in
    [-noise_level, +noise_level], clamped to [0, 255]. The ellipse size is
    fixed (only its center varies with the seed) so every image carries the
    same foreground area. The gamma shift v -> round(255 * (v/255)**gamma)
    is applied after quantization; gamma 1 leaves levels untouched.

    Images land in out_dir/images, masks in out_dir/masks, and the manifest
    is written to out_dir/manifest.tsv as well as returned. Identical
    arguments produce byte-identical files.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    if noise_level < 0.0:
        raise ValueError("noise_level must be non-negative")
    if size < 16:
        raise ValueError("size must be at least 16")
    for name, level in (("fg_level", fg_level), ("bg_level", bg_level)):
        if not 0 <= level <= 255:
            raise ValueError(f"{name} must lie in [0, 255]")

    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    mask_dir = out_dir / "masks"
    image_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    # Fixed radii: constant foreground area keeps per-image tonal mass stable.
    rx = max(2, round(size * 0.26))
    ry = max(2, round(size * 0.18))
    yy, xx = np.mgrid[0:size, 0:size]
    table = _gamma_table(gamma) if gamma != 1.0 else None

    entries = []
    for i in range(count):
        cx = int(rng.integers(rx, size - rx))
        cy = int(rng.integers(ry, size - ry))
        noise = rng.uniform(-noise_level, noise_level, (size, size))
        ellipse = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        base = np.where(ellipse, float(fg_level), float(bg_level))
        quantized = np.clip(np.floor(base + noise + 0.5), 0.0, 255.0).astype(np.uint8)
        if table is not None:
            quantized = table[quantized]
        image_id = f"{prefix}_{i:04d}"
        image_path = image_dir / f"{image_id}.png"
        mask_path = mask_dir / f"{image_id}.png"
        save_gray(GrayImage(quantized), image_path)
        save_mask(BinaryMask(ellipse), mask_path)
        entries.append(
            ManifestEntry(
                image_id=image_id,
                image_path=str(image_path),
                mask_path=str(mask_path),
                split=split,
            )
        )
    manifest = Manifest(tuple(entries))
    save_manifest(manifest, out_dir / "manifest.tsv")
    return manifest
