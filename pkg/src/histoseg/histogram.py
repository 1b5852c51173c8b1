"""Gray-level histograms, CDFs, level maps, and histogram specification.

The tonal pipeline is: count 256-bin histograms per image, normalize to
probability mass, average the per-image masses into a reference, and remap
each input gray level to the reference level whose cumulative mass is
nearest. All CDF arithmetic is double precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import EmptyHistogramError, ReferenceFormatError
from .imaging import GrayImage

LEVELS = 256

# Shared tolerance for "mass sums to one" checks.
MASS_TOL = 1e-9


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Histogram:
    """Raw per-level pixel counts for the 256 gray levels."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts)
        if arr.shape != (LEVELS,):
            raise ValueError(f"histogram must have {LEVELS} bins, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"histogram counts must be integers, got dtype {arr.dtype}")
        if arr.size and arr.min() < 0:
            raise ValueError("histogram counts must be non-negative")
        object.__setattr__(self, "counts", _freeze(arr.astype(np.int64)))

    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Histogram) and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True, eq=False)
class Pmf:
    """Normalized histogram: 256 non-negative masses summing to one."""

    mass: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.mass, dtype=np.float64)
        if arr.shape != (LEVELS,):
            raise ValueError(f"pmf must have {LEVELS} bins, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0:
            raise ValueError("pmf masses must be finite and non-negative")
        if abs(float(arr.sum()) - 1.0) > MASS_TOL:
            raise ValueError(f"pmf mass must sum to 1 within {MASS_TOL}, got {arr.sum()!r}")
        object.__setattr__(self, "mass", _freeze(arr))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Pmf) and np.array_equal(self.mass, other.mass)


@dataclass(frozen=True, eq=False)
class Cdf:
    """Cumulative mass per gray level; non-decreasing, ends at one."""

    cum: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.cum, dtype=np.float64)
        if arr.shape != (LEVELS,):
            raise ValueError(f"cdf must have {LEVELS} entries, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("cdf entries must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0 + MASS_TOL:
            raise ValueError("cdf entries must lie in [0, 1]")
        if np.any(np.diff(arr) < 0.0):
            raise ValueError("cdf must be non-decreasing")
        if abs(float(arr[-1]) - 1.0) > MASS_TOL:
            raise ValueError(f"cdf must end at 1 within {MASS_TOL}, got {arr[-1]!r}")
        object.__setattr__(self, "cum", _freeze(arr))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Cdf) and np.array_equal(self.cum, other.cum)


@dataclass(frozen=True, eq=False)
class LevelMap:
    """256-entry lookup table sending input gray levels to output levels.

    Maps produced by build_level_map are always non-decreasing, which the
    constructor enforces.
    """

    table: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.table)
        if arr.shape != (LEVELS,):
            raise ValueError(f"level map must have {LEVELS} entries, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("level map entries must be integers")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("level map entries must lie in [0, 255]")
        if np.any(np.diff(arr.astype(np.int64)) < 0):
            raise ValueError("level map must be non-decreasing")
        object.__setattr__(self, "table", _freeze(arr.astype(np.uint8)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LevelMap) and np.array_equal(self.table, other.table)


@dataclass(frozen=True)
class ReferenceHistogram:
    """A Pmf plus provenance: how many images were averaged, and when."""

    pmf: Pmf
    source_images: int
    created: str

    def __post_init__(self) -> None:
        if self.source_images < 1:
            raise ValueError("reference must come from at least one image")
        if not isinstance(self.created, str) or not self.created:
            raise ValueError("created must be a non-empty timestamp string")


def compute_histogram(img: GrayImage) -> Histogram:
    """Count occurrences of each of the 256 gray levels."""
    counts = np.bincount(img.pixels.ravel(), minlength=LEVELS)
    return Histogram(counts.astype(np.int64))


def to_pmf(hist: Histogram) -> Pmf:
    """Normalize counts to probability mass.

    Raises:
        EmptyHistogramError: all counts are zero.
    """
    total = hist.total()
    if total == 0:
        raise EmptyHistogramError("cannot normalize a histogram with zero total count")
    return Pmf(hist.counts.astype(np.float64) / float(total))


def to_cdf(pmf: Pmf) -> Cdf:
    """Running sum of the mass; double precision throughout."""
    return Cdf(np.cumsum(pmf.mass))


def average_reference(histograms: list[Histogram], created: str | None = None) -> ReferenceHistogram:
    """Average per-image histograms into a reference distribution.

    Each histogram is normalized to a Pmf first so that every image
    contributes equal weight regardless of its pixel count, then the
    masses are averaged bin-wise.

    Args:
        histograms: non-empty list of per-image histograms.
        created: timestamp recorded in the reference; defaults to now (UTC).

    Raises:
        ValueError: empty input list.
        EmptyHistogramError: some histogram has zero total count.
    """
    if not histograms:
        raise ValueError("cannot average an empty list of histograms")
    stack = np.stack([to_pmf(h).mass for h in histograms])
    mean = stack.mean(axis=0)
    if created is None:
        created = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return ReferenceHistogram(pmf=Pmf(mean), source_images=len(histograms), created=created)


def build_level_map(target: Cdf, reference: Cdf) -> LevelMap:
    """Nearest-cumulative-mass gray level remapping.

    For every input level g the output level is the smallest g' minimizing
    |reference.cum[g'] - target.cum[g]|. Ties therefore resolve to the
    smaller output level. Because both CDFs are non-decreasing the
    resulting table is non-decreasing as well.
    """
    distance = np.abs(reference.cum[np.newaxis, :] - target.cum[:, np.newaxis])
    # argmin returns the first occurrence of the minimum, i.e. the smallest level.
    table = np.argmin(distance, axis=1)
    return LevelMap(table.astype(np.uint8))


def apply_level_map(img: GrayImage, level_map: LevelMap) -> GrayImage:
    """Pure per-pixel relabeling through the lookup table."""
    return GrayImage(level_map.table[img.pixels])


def specify(img: GrayImage, reference: ReferenceHistogram) -> GrayImage:
    """Match an image's tonal distribution to the reference.

    Composition of compute_histogram, to_pmf, to_cdf, build_level_map and
    apply_level_map. Deterministic: identical inputs give identical outputs.
    """
    target = to_cdf(to_pmf(compute_histogram(img)))
    level_map = build_level_map(target, to_cdf(reference.pmf))
    return apply_level_map(img, level_map)


def drift_score(a: Pmf, b: Pmf) -> float:
    """Total variation distance between two pmfs: 0.5 * sum |a - b|, in [0, 1]."""
    return 0.5 * float(np.abs(a.mass - b.mass).sum())


def save_reference(reference: ReferenceHistogram, path: str | Path) -> None:
    """Write a reference histogram as a JSON document.

    Floats are serialized with full round-trip precision, so a load
    followed by a save reproduces the bins exactly.
    """
    doc = {
        "bins": [float(x) for x in reference.pmf.mass],
        "source_images": reference.source_images,
        "created": reference.created,
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_reference(path: str | Path) -> ReferenceHistogram:
    """Read a reference histogram document, validating shape and mass.

    Raises:
        FileNotFoundError: path does not exist.
        ReferenceFormatError: not JSON, wrong bin count, negative or
            non-normalized mass, or missing fields.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such reference file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReferenceFormatError(f"reference file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ReferenceFormatError(f"reference file {path} must hold a JSON object")
    try:
        bins = doc["bins"]
        source_images = doc["source_images"]
        created = doc["created"]
    except KeyError as exc:
        raise ReferenceFormatError(f"reference file {path} is missing field {exc}") from exc
    if not isinstance(bins, list) or len(bins) != LEVELS:
        raise ReferenceFormatError(f"reference file {path} must hold exactly {LEVELS} bins")
    arr = np.asarray(bins, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0:
        raise ReferenceFormatError(f"reference bins in {path} must be finite and non-negative")
    if abs(float(arr.sum()) - 1.0) > MASS_TOL:
        raise ReferenceFormatError(
            f"reference bins in {path} must sum to 1 within {MASS_TOL}, got {arr.sum()!r}"
        )
    if not isinstance(source_images, int) or isinstance(source_images, bool) or source_images < 1:
        raise ReferenceFormatError(f"reference file {path} has invalid source_images")
    if not isinstance(created, str):
        raise ReferenceFormatError(f"reference file {path} has invalid created timestamp")
    return ReferenceHistogram(pmf=Pmf(arr), source_images=source_images, created=created)
