"""Classical threshold-based baseline segmenter.

Otsu's method picks the level maximizing between-class variance; the
comparison is done in exact integer arithmetic so ties are broken by the
smallest level without floating-point ambiguity. Component cleanup uses
8-connectivity.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError, MissingPredictionError
from .histogram import ReferenceHistogram, specify
from .imaging import BinaryMask, GrayImage, load_mask, read_size

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SegmenterConfig:
    """Baseline segmenter behavior.

    Attributes:
        fixed_level: threshold level; None selects Otsu's method per image.
        min_component_size: components smaller than this are removed.
        keep_largest_k: if set, keep only the k largest components
            (ties broken by the smaller first pixel index in row-major order).
        apply_specification: harmonize the image to `reference` before
            thresholding.
        reference: required when apply_specification is true.
    """

    fixed_level: int | None = None
    min_component_size: int = 0
    keep_largest_k: int | None = None
    apply_specification: bool = False
    reference: ReferenceHistogram | None = None

    def __post_init__(self) -> None:
        if self.fixed_level is not None and not 0 <= self.fixed_level <= 255:
            raise ValueError("fixed_level must lie in [0, 255]")
        if self.min_component_size < 0:
            raise ValueError("min_component_size must be non-negative")
        if self.keep_largest_k is not None and self.keep_largest_k < 1:
            raise ValueError("keep_largest_k must be at least 1")
        if self.apply_specification and self.reference is None:
            raise ValueError("apply_specification requires a reference histogram")


def otsu_threshold(img: GrayImage) -> int:
    """Level maximizing between-class variance over all 256 candidate splits.

    A candidate level t splits pixels into {<= t} and {> t}. The
    between-class variance comparison is carried out on the exact integer
    form (s0 n1 - s1 n0)^2 / (n0 n1), so equal-variance candidates resolve
    to the smallest level. A constant image returns its constant level.
    """
    counts = np.bincount(img.pixels.ravel(), minlength=256).tolist()
    total = img.pixels.size
    sum_all = sum(level * c for level, c in enumerate(counts))
    best_level = None
    best_num = 0
    best_den = 1
    n0 = 0
    s0 = 0
    for level in range(256):
        n0 += counts[level]
        s0 += level * counts[level]
        if n0 == 0:
            continue
        n1 = total - n0
        if n1 == 0:
            break
        s1 = sum_all - s0
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        # num / den > best_num / best_den, cross-multiplied to stay exact
        if best_level is None or num * best_den > best_num * den:
            best_level, best_num, best_den = level, num, den
    if best_level is None:
        return int(img.pixels.flat[0])
    return best_level


def apply_threshold(img: GrayImage, level: int) -> BinaryMask:
    """Pixels strictly above the level become foreground."""
    if not 0 <= level <= 255:
        raise ValueError("threshold level must lie in [0, 255]")
    return BinaryMask(img.pixels > level)


def clean_mask(
    mask: BinaryMask,
    min_size: int = 0,
    keep_largest_k: int | None = None,
) -> BinaryMask:
    """Drop small or surplus connected components (8-connectivity).

    Components with fewer than min_size pixels are removed; if
    keep_largest_k is set, only the k largest surviving components remain,
    ties resolved toward the component whose first row-major pixel comes
    earlier. The output foreground is always a subset of the input.
    """
    if min_size < 0:
        raise ValueError("min_size must be non-negative")
    if keep_largest_k is not None and keep_largest_k < 1:
        raise ValueError("keep_largest_k must be at least 1")
    fg = mask.labels.astype(bool)
    labeled, count = ndimage.label(fg, structure=_EIGHT_CONNECTED)
    if count == 0:
        return mask
    sizes = np.bincount(labeled.ravel(), minlength=count + 1)
    kept = [i for i in range(1, count + 1) if sizes[i] >= min_size]
    if keep_largest_k is not None and len(kept) > keep_largest_k:
        flat = labeled.ravel()
        first = np.full(count + 1, flat.size, dtype=np.int64)
        np.minimum.at(first, flat, np.arange(flat.size))
        kept = sorted(kept, key=lambda i: (-int(sizes[i]), int(first[i])))[:keep_largest_k]
    out = np.isin(labeled, kept)
    return BinaryMask(out)


def predict(img: GrayImage, cfg: SegmenterConfig) -> BinaryMask:
    """Baseline prediction: optional harmonization, threshold, cleanup."""
    work = specify(img, cfg.reference) if cfg.apply_specification else img
    level = cfg.fixed_level if cfg.fixed_level is not None else otsu_threshold(work)
    mask = apply_threshold(work, level)
    if cfg.min_component_size > 0 or cfg.keep_largest_k is not None:
        mask = clean_mask(mask, cfg.min_component_size, cfg.keep_largest_k)
    return mask


def load_external_predictions(pred_dir: str | Path, manifest) -> dict[str, BinaryMask]:
    """Read externally produced prediction masks, one <image_id>.png per entry.

    Each mask must match the dimensions of the entry's image.

    Raises:
        MissingPredictionError: an entry has no prediction file.
        DimensionMismatchError: a prediction disagrees with its image size.
    """
    pred_dir = Path(pred_dir)
    out: dict[str, BinaryMask] = {}
    for entry in manifest.entries:
        path = pred_dir / f"{entry.image_id}.png"
        if not path.is_file():
            raise MissingPredictionError(entry.image_id)
        mask = load_mask(path)
        width, height = read_size(entry.image_path)
        if (mask.width, mask.height) != (width, height):
            raise DimensionMismatchError(
                f"prediction for {entry.image_id!r} is {mask.width}x{mask.height}, "
                f"image is {width}x{height}"
            )
        out[entry.image_id] = mask
    return out
