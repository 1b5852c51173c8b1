"""Exception types shared across the package.

Plain I/O failures keep their builtin classes (FileNotFoundError, OSError);
everything domain-specific derives from HistosegError so callers and the CLI
can catch one base class.
"""

from __future__ import annotations


class HistosegError(Exception):
    """Base class for all errors raised by this package."""


class DecodeError(HistosegError):
    """Raster file exists but cannot be decoded."""


class UnsupportedDepthError(HistosegError):
    """Raster decodes to something other than an 8-bit gray or RGB image."""


class EmptyHistogramError(HistosegError):
    """Histogram has zero total count and cannot be normalized."""


class DimensionMismatchError(HistosegError):
    """Two rasters that must share dimensions do not."""


class MissingPredictionError(HistosegError):
    """No prediction file exists for a manifest entry."""

    def __init__(self, image_id: str):
        super().__init__(f"no prediction file for image id {image_id!r}")
        self.image_id = image_id


class MissingMaskError(HistosegError):
    """A manifest entry selected for evaluation has no ground-truth mask."""

    def __init__(self, image_id: str):
        super().__init__(f"no ground-truth mask for image id {image_id!r}")
        self.image_id = image_id


class TooFewEntriesError(HistosegError):
    """Manifest is too small to be split."""


class EmptySplitError(HistosegError):
    """A pipeline stage selected a split with no entries."""


class ManifestError(HistosegError):
    """Manifest text is malformed or violates an invariant (duplicate ids, bad tags)."""


class ReferenceFormatError(HistosegError):
    """Reference histogram document is malformed or not normalized."""


class BatchWriteError(HistosegError):
    """One or more files in a batch stage failed; failures carry image ids."""

    def __init__(self, failures: list[tuple[str, Exception]]):
        detail = "; ".join(f"{image_id}: {exc}" for image_id, exc in failures)
        super().__init__(f"{len(failures)} file(s) failed: {detail}")
        self.failures = failures
