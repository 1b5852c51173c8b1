"""Image, mask and probability-map value types plus lossless 8-bit raster I/O.

All array-backed types are immutable after construction: the wrapped numpy
array is copied and marked read-only. Files are written as 8-bit PNG (or any
other lossless format Pillow infers from the extension).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, UnsupportedDepthError

# Rec.601 luma weights; RGB inputs are reduced to round(0.299 R + 0.587 G + 0.114 B),
# rounded half up.
_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = arr.copy()
    out.setflags(write=False)
    return out


def _check_2d(arr: np.ndarray, what: str) -> None:
    if arr.ndim != 2:
        raise ValueError(f"{what} must be 2-d, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{what} must have at least one row and one column")


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit single-channel raster; the unit of all tonal processing.

    Attributes:
        pixels: (height, width) uint8 array, read-only.
    """

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        _check_2d(arr, "gray image")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValueError(f"gray levels must be integers, got dtype {arr.dtype}")
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("gray levels must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "pixels", _freeze(arr))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel foreground labels: 1 is foreground, 0 is background."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels)
        _check_2d(arr, "mask")
        if arr.dtype == np.bool_:
            arr = arr.astype(np.uint8)
        else:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValueError(f"mask labels must be integers, got dtype {arr.dtype}")
            if arr.size and (arr.min() < 0 or arr.max() > 1):
                raise ValueError("mask labels must be 0 or 1")
            if arr.dtype != np.uint8:
                arr = arr.astype(np.uint8)
        object.__setattr__(self, "labels", _freeze(arr))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.labels))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-pixel foreground probabilities in [0, 1], float64."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.probs, dtype=np.float64)
        _check_2d(arr, "probability map")
        if not np.all(np.isfinite(arr)):
            raise ValueError("probabilities must be finite")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "probs", _freeze(arr))

    @property
    def width(self) -> int:
        return self.probs.shape[1]

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ProbMap) and np.array_equal(self.probs, other.probs)


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit three-channel raster, used for confusion overlays."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"rgb image must have shape (h, w, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("rgb image must have at least one row and one column")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValueError(f"rgb values must be integers, got dtype {arr.dtype}")
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("rgb values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "pixels", _freeze(arr))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RgbImage) and np.array_equal(self.pixels, other.pixels)


def _open_raster(path: str | Path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            return im
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    except OSError as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc


def load_gray(path: str | Path) -> GrayImage:
    """Load an 8-bit grayscale or RGB raster as a GrayImage.

    RGB inputs are reduced with integer-rounded Rec.601 luma. Any other
    mode (palette, 16-bit, float, alpha) is rejected rather than silently
    rescaled.

    Raises:
        FileNotFoundError: path does not exist.
        DecodeError: file exists but is not a decodable raster.
        UnsupportedDepthError: raster is not 8-bit gray or RGB.
    """
    im = _open_raster(path)
    if im.mode == "L":
        return GrayImage(np.asarray(im, dtype=np.uint8))
    if im.mode == "RGB":
        rgb = np.asarray(im, dtype=np.float64)
        luma = np.floor(rgb @ _LUMA_WEIGHTS + 0.5).astype(np.uint8)
        return GrayImage(luma)
    raise UnsupportedDepthError(
        f"unsupported raster mode {im.mode!r} in {path}; expected 8-bit gray or RGB"
    )


def load_mask(path: str | Path) -> BinaryMask:
    """Load a raster as a binary mask: gray level > 127 is foreground."""
    gray = load_gray(path)
    return BinaryMask(gray.pixels > 127)


def load_prob(path: str | Path) -> ProbMap:
    """Load an 8-bit raster as a probability map (level / 255)."""
    gray = load_gray(path)
    return ProbMap(gray.pixels.astype(np.float64) / 255.0)


def read_size(path: str | Path) -> tuple[int, int]:
    """Read (width, height) from a raster header without decoding pixel data."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            return im.size
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc


def save_gray(img: GrayImage, path: str | Path) -> None:
    """Write a GrayImage losslessly; byte-identical output for identical input."""
    Image.fromarray(np.asarray(img.pixels), mode="L").save(path)


def save_mask(mask: BinaryMask, path: str | Path) -> None:
    """Write a mask as an 8-bit raster with foreground 255 and background 0."""
    save_gray(GrayImage(mask.labels * np.uint8(255)), path)


def save_rgb(img: RgbImage, path: str | Path) -> None:
    Image.fromarray(np.asarray(img.pixels), mode="RGB").save(path)
