"""Overlap metrics, confidence intervals, confusion overlays and reports.

Dice and IoU are set-reduced per image from a pixel confusion tally; batch
summaries are the mean over per-image scores with a 95% normal-approximation
confidence interval (1.96 * s / sqrt(n), sample standard deviation).
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .imaging import BinaryMask, RgbImage

# Overlay colors, index = 2 * pred + gt.
#   true positive  -> yellow, true negative -> black,
#   false positive -> green,  false negative -> red.
OVERLAY_PALETTE = np.array(
    [
        [0, 0, 0],        # pred 0, gt 0: TN
        [255, 0, 0],      # pred 0, gt 1: FN
        [0, 255, 0],      # pred 1, gt 0: FP
        [255, 255, 0],    # pred 1, gt 1: TP
    ],
    dtype=np.uint8,
)

CI_Z = 1.96  # two-sided 95% normal quantile used for the half-width


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel tally of a prediction against ground truth."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MeanCI:
    """Mean of per-image scores with a 95% half-width; zero width for n <= 1."""

    mean: float
    half_width: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("summary needs at least one value")
        if self.half_width < 0.0:
            raise ValueError("half width must be non-negative")
        if self.n <= 1 and self.half_width != 0.0:
            raise ValueError("half width must be zero for a single value")


@dataclass(frozen=True)
class ImageResult:
    """Scores for a single image."""

    image_id: str
    dice: float
    iou: float
    counts: ConfusionCounts


@dataclass(frozen=True)
class EvalReport:
    """Per-image records (sorted by id) plus batch summaries."""

    per_image: tuple[ImageResult, ...]
    dice_summary: MeanCI
    iou_summary: MeanCI

    def __post_init__(self) -> None:
        if self.dice_summary.n != len(self.per_image) or self.iou_summary.n != len(self.per_image):
            raise ValueError("summary n must equal the number of per-image records")
        ids = [r.image_id for r in self.per_image]
        if ids != sorted(ids):
            raise ValueError("per-image records must be sorted by image id")


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    """Per-pixel confusion tally.

    Raises:
        DimensionMismatchError: masks differ in shape.
    """
    if pred.labels.shape != gt.labels.shape:
        raise DimensionMismatchError(
            f"prediction {pred.labels.shape} and ground truth {gt.labels.shape} differ in shape"
        )
    idx = 2 * pred.labels.astype(np.int64) + gt.labels
    tally = np.bincount(idx.ravel(), minlength=4)
    return ConfusionCounts(tp=int(tally[3]), tn=int(tally[0]), fp=int(tally[2]), fn=int(tally[1]))


def dice(counts: ConfusionCounts) -> float:
    """2 tp / (2 tp + fp + fn); defined as 1.0 when both masks are empty."""
    if counts.tp + counts.fp + counts.fn == 0:
        return 1.0
    return 2.0 * counts.tp / float(2 * counts.tp + counts.fp + counts.fn)


def iou(counts: ConfusionCounts) -> float:
    """tp / (tp + fp + fn); defined as 1.0 when both masks are empty."""
    if counts.tp + counts.fp + counts.fn == 0:
        return 1.0
    return counts.tp / float(counts.tp + counts.fp + counts.fn)


def aggregate(values: list[float]) -> MeanCI:
    """Mean with 95% normal-approximation half-width over a score list.

    Uses the sample standard deviation (n - 1 denominator). A single value
    has zero half-width.

    Raises:
        ValueError: empty list.
    """
    if not values:
        raise ValueError("cannot aggregate an empty list of scores")
    n = len(values)
    mean = statistics.fmean(values)
    if n == 1:
        return MeanCI(mean=mean, half_width=0.0, n=1)
    s = statistics.stdev(values)
    return MeanCI(mean=mean, half_width=CI_Z * s / math.sqrt(n), n=n)


def evaluate_pair(pred: BinaryMask, gt: BinaryMask) -> tuple[float, float, ConfusionCounts]:
    """Dice, IoU and the underlying confusion tally for one mask pair."""
    counts = confusion(pred, gt)
    return dice(counts), iou(counts), counts


def render_overlay(pred: BinaryMask, gt: BinaryMask) -> RgbImage:
    """Color-code agreement per pixel.

    Yellow marks true positives, black true negatives, green false
    positives and red false negatives.
    """
    if pred.labels.shape != gt.labels.shape:
        raise DimensionMismatchError(
            f"prediction {pred.labels.shape} and ground truth {gt.labels.shape} differ in shape"
        )
    idx = 2 * pred.labels.astype(np.intp) + gt.labels
    return RgbImage(OVERLAY_PALETTE[idx])


def make_report(results: list[ImageResult]) -> EvalReport:
    """Sort per-image results by id and attach batch summaries."""
    ordered = tuple(sorted(results, key=lambda r: r.image_id))
    return EvalReport(
        per_image=ordered,
        dice_summary=aggregate([r.dice for r in ordered]),
        iou_summary=aggregate([r.iou for r in ordered]),
    )


def render_json(report: EvalReport) -> str:
    """Structured text form of a report; deterministic for identical inputs."""
    doc = {
        "n_images": len(report.per_image),
        "ci": "95% normal approximation (1.96 * s / sqrt(n)) over per-image scores",
        "per_image": [
            {
                "image_id": r.image_id,
                "dice": r.dice,
                "iou": r.iou,
                "tp": r.counts.tp,
                "tn": r.counts.tn,
                "fp": r.counts.fp,
                "fn": r.counts.fn,
            }
            for r in report.per_image
        ],
        "aggregates": {
            "dice": {
                "mean": report.dice_summary.mean,
                "half_width": report.dice_summary.half_width,
                "n": report.dice_summary.n,
            },
            "iou": {
                "mean": report.iou_summary.mean,
                "half_width": report.iou_summary.half_width,
                "n": report.iou_summary.n,
            },
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def format_mean_ci(summary: MeanCI) -> str:
    """Three-decimal 'mean ± half-width' cell."""
    return f"{summary.mean:.3f} ± {summary.half_width:.3f}"


def render_table(report: EvalReport) -> str:
    """Fixed-width table: one row per image, summary block at the bottom."""
    id_width = max([len("image_id")] + [len(r.image_id) for r in report.per_image])
    lines = [
        f"{'image_id':<{id_width}}  {'dice':>8}  {'iou':>8}  {'tp':>10}  {'tn':>10}  {'fp':>8}  {'fn':>8}"
    ]
    for r in report.per_image:
        lines.append(
            f"{r.image_id:<{id_width}}  {r.dice:>8.4f}  {r.iou:>8.4f}"
            f"  {r.counts.tp:>10d}  {r.counts.tn:>10d}  {r.counts.fp:>8d}  {r.counts.fn:>8d}"
        )
    lines.append("-" * len(lines[0]))
    lines.append(f"{'dice':<{id_width}}  {format_mean_ci(report.dice_summary)}  (n={report.dice_summary.n})")
    lines.append(f"{'iou':<{id_width}}  {format_mean_ci(report.iou_summary)}  (n={report.iou_summary.n})")
    return "\n".join(lines) + "\n"
