"""RoI pool utilities for head training and the learning-rate formulas.

Everything random in this module goes through SplitMix64, a portable 64-bit
generator defined below by its algorithm, so identical seeds reproduce
identical samples on every platform.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TypeVar

from .errors import ValidationError
from .geometry import Box, box_iou
from .records import GroundTruthInstance

__all__ = [
    "SplitMix64",
    "fnv1a64",
    "SamplerConfig",
    "Schedule",
    "sample_rois",
    "partition_pool",
    "base_lr",
    "cosine_lr",
]

_T = TypeVar("_T")

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 pseudo-random generator.

    The state advances by the 64-bit constant 0x9E3779B97F4A7C15 each draw and
    the output is the state mixed by two xor-shift-multiply rounds with the
    constants 0xBF58476D1CE4E5B9 (shift 30) and 0x94D049BB133111EB (shift 27),
    followed by a final shift of 31.  All arithmetic is modulo 2**64.  Bounded
    draws use rejection sampling on whole 64-bit words, so they are exactly
    uniform and identical across platforms.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) without modulo bias.

        Consumes no state when bound is 1; otherwise draws 64-bit words and
        rejects the tail that would make the modulus non-uniform.
        """
        if bound < 1:
            raise ValidationError(f"bound must be positive, got {bound}")
        if bound == 1:
            return 0
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            word = self.next_uint64()
            if word < limit:
                return word % bound

    def sample(self, items: Sequence[_T], k: int) -> list[_T]:
        """k distinct items drawn uniformly without replacement (partial
        Fisher-Yates over a copy; draw order is the output order)."""
        pool = list(items)
        if k > len(pool):
            raise ValidationError(f"cannot sample {k} of {len(pool)} items")
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 encoding; used to derive per-image seeds."""
    value = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        value = ((value ^ byte) * 0x100000001B3) & _MASK64
    return value


@dataclass(frozen=True, slots=True)
class SamplerConfig:
    """Per-image RoI sampling parameters for head-loss computation."""

    n_sample: int = 512
    fg_fraction: float = 0.25
    fg_iou_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_sample < 1:
            raise ValidationError(f"n_sample must be >= 1, got {self.n_sample}")
        if not 0.0 < self.fg_fraction < 1.0:
            raise ValidationError(f"fg_fraction must be in (0, 1), got {self.fg_fraction}")
        if not 0.0 < self.fg_iou_threshold <= 1.0:
            raise ValidationError(
                f"fg_iou_threshold must be in (0, 1], got {self.fg_iou_threshold}"
            )


@dataclass(frozen=True, slots=True)
class Schedule:
    """Cosine learning-rate schedule anchored at an initial rate."""

    eta0: float
    batch_size: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.eta0) or self.eta0 <= 0.0:
            raise ValidationError(f"eta0 must be positive, got {self.eta0!r}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")

    @classmethod
    def from_batch_size(cls, batch_size: int) -> "Schedule":
        return cls(eta0=base_lr(batch_size), batch_size=batch_size)

    def at(self, progress: float) -> float:
        return cosine_lr(progress, self.eta0)


def sample_rois(
    rois: Sequence[Box],
    gt_boxes: Sequence[Box],
    config: SamplerConfig,
) -> list[int]:
    """Sample distinct RoI indices for one image, stratified into foreground
    (max IoU to any ground truth >= fg_iou_threshold) and background.

    Foreground fills up to ceil(fg_fraction * n_sample) slots when available;
    background fills the rest; a shortfall on either side is topped up from
    the other.  Output lists the foreground draws first, then background, each
    in draw order.  Deterministic given the seed.
    """
    if not rois:
        raise ValidationError("RoI pool for the image is empty")
    n_take = min(config.n_sample, len(rois))
    foreground: list[int] = []
    background: list[int] = []
    for index, roi in enumerate(rois):
        best = max((box_iou(roi, gt) for gt in gt_boxes), default=0.0)
        if best >= config.fg_iou_threshold:
            foreground.append(index)
        else:
            background.append(index)
    fg_quota = math.ceil(config.fg_fraction * config.n_sample)
    fg_take = min(len(foreground), fg_quota, n_take)
    bg_take = min(len(background), n_take - fg_take)
    fg_take = min(len(foreground), n_take - bg_take)
    rng = SplitMix64(config.seed)
    return rng.sample(foreground, fg_take) + rng.sample(background, bg_take)


def gt_boxes_for_image(
    gts: Sequence[GroundTruthInstance], image_id: str
) -> list[Box]:
    """Convenience filter: boxes of the ground truths on one image."""
    return [gt.box for gt in gts if gt.image_id == image_id]


def partition_pool(pool: Sequence[_T], k: int) -> list[list[_T]]:
    """Split a per-image RoI list into k disjoint lists, round-robin by index:
    element j goes to partition j mod k.  Order is preserved within each
    partition and the partitions together cover the pool exactly."""
    if k < 1:
        raise ValidationError(f"number of partitions must be >= 1, got {k}")
    partitions: list[list[_T]] = [[] for _ in range(k)]
    for index, item in enumerate(pool):
        partitions[index % k].append(item)
    return partitions


def base_lr(batch_size: int) -> float:
    """Initial learning rate: 0.00125 per example in the batch."""
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    return 0.00125 * batch_size


def cosine_lr(progress: float, eta0: float) -> float:
    """Learning rate at a training progress ratio: eta0 * (cos(progress*pi)+1)/2."""
    if not 0.0 <= progress <= 1.0:
        raise ValidationError(f"progress must be in [0, 1], got {progress!r}")
    if not math.isfinite(eta0) or eta0 <= 0.0:
        raise ValidationError(f"eta0 must be positive, got {eta0!r}")
    return eta0 * (math.cos(progress * math.pi) + 1.0) / 2.0
