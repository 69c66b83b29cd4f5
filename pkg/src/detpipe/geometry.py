"""Axis-aligned box arithmetic and run-length-encoded binary mask rasters.

Everything else in the toolkit builds on these primitives. All operations are
pure functions on immutable values and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "Box",
    "BinaryMask",
    "SoftMask",
    "box_area",
    "box_iou",
    "mask_area",
    "mask_binarize",
    "mask_decode",
    "mask_encode",
    "mask_iou",
]


@dataclass(frozen=True, slots=True)
class Box:
    """Axis-aligned rectangle in absolute, real-valued pixel coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        for name in ("x_min", "y_min", "x_max", "y_max"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"box coordinate {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValidationError(
                f"box corners are inverted: "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )


def _check_dimension(name: str, value: int) -> int:
    if isinstance(value, bool) or value != int(value):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < 1:
        raise ValidationError(f"{name} must be positive, got {value}")
    return value


@dataclass(frozen=True, slots=True)
class BinaryMask:
    """Full-image binary raster stored as row-major run lengths.

    Runs alternate between 0-pixels and 1-pixels, starting with 0-pixels; a
    leading zero-length run lets a mask start with a 1-pixel.  Only the first
    run may be zero-length, so every valid mask is in canonical form.
    """

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "width", _check_dimension("mask width", self.width))
        object.__setattr__(self, "height", _check_dimension("mask height", self.height))
        runs = tuple(int(r) for r in self.runs)
        if not runs:
            raise ValidationError("mask runs must not be empty")
        if runs[0] < 0 or any(r < 1 for r in runs[1:]):
            raise ValidationError(f"mask runs after the first must be >= 1, got {runs}")
        total = sum(runs)
        if total != self.width * self.height:
            raise ValidationError(
                f"mask runs sum to {total}, expected width*height = {self.width * self.height}"
            )
        object.__setattr__(self, "runs", runs)


@dataclass(frozen=True, eq=False, slots=True)
class SoftMask:
    """Row-major real-valued grid in [0, 1]; the pre-binarization mask average."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "width", _check_dimension("mask width", self.width))
        object.__setattr__(self, "height", _check_dimension("mask height", self.height))
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.shape != (self.height, self.width):
            raise ValidationError(
                f"soft mask values have shape {arr.shape}, expected "
                f"(height, width) = ({self.height}, {self.width})"
            )
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError("soft mask values must be finite and in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


def box_area(box: Box) -> float:
    """Area of a box; zero for degenerate boxes."""
    return (box.x_max - box.x_min) * (box.y_max - box.y_min)


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0.0 when the union is empty."""
    inter_w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    inter_h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = inter_w * inter_h if inter_w > 0.0 and inter_h > 0.0 else 0.0
    union = box_area(a) + box_area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def mask_area(mask: BinaryMask) -> int:
    """Number of 1-pixels: the sum of the odd-indexed runs."""
    return sum(mask.runs[1::2])


def mask_decode(mask: BinaryMask) -> np.ndarray:
    """Expand runs into a (height, width) uint8 grid."""
    values = np.zeros(len(mask.runs), dtype=np.uint8)
    values[1::2] = 1
    flat = np.repeat(values, np.asarray(mask.runs, dtype=np.int64))
    return flat.reshape(mask.height, mask.width)


def mask_encode(grid) -> BinaryMask:
    """Encode a rectangular bit grid into a canonical run-length mask."""
    arr = np.asarray(grid)
    if arr.ndim != 2:
        raise ValidationError(f"mask grid must be two-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError("mask grid must be non-empty")
    if arr.dtype != bool and not np.isin(arr, (0, 1)).all():
        raise ValidationError("mask grid entries must be 0 or 1")
    flat = arr.astype(np.uint8).ravel()
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    lengths = [int(n) for n in np.diff(bounds)]
    runs = [0, *lengths] if flat[0] else lengths
    return BinaryMask(arr.shape[1], arr.shape[0], tuple(runs))


def mask_binarize(soft: SoftMask, threshold: float) -> BinaryMask:
    """Binary mask with 1-pixels exactly where the soft value is >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"binarization threshold must be in (0, 1), got {threshold!r}")
    return mask_encode(soft.values >= threshold)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two same-size masks; 0.0 when both are empty."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValidationError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    ga = mask_decode(a).astype(bool)
    gb = mask_decode(b).astype(bool)
    inter = int(np.count_nonzero(ga & gb))
    union = int(np.count_nonzero(ga | gb))
    if union == 0:
        return 0.0
    return inter / union
