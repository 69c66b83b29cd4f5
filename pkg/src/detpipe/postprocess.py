"""Submission-stage filters: small-mask removal and byte-budget trimming."""

from __future__ import annotations

import heapq
from collections.abc import Sequence
from dataclasses import dataclass, field

from .errors import ValidationError
from .fileio import empty_predictions_size, prediction_row_size
from .geometry import mask_area
from .records import Prediction

__all__ = [
    "DEFAULT_MIN_MASK_AREA",
    "DEFAULT_BYTE_BUDGET",
    "TrimReport",
    "drop_small_masks",
    "trim_to_budget",
]

# Annotated objects are larger than 40x80 px, so segmentations under 1600 px
# cannot be true positives.
DEFAULT_MIN_MASK_AREA = 1600

# Submission files are capped at 5 GB.
DEFAULT_BYTE_BUDGET = 5_000_000_000


@dataclass(frozen=True)
class TrimReport:
    """Removal counts per category plus the final size against the budget."""

    removed: dict[str, int] = field(default_factory=dict)
    final_bytes: int = 0
    budget: int = 0

    def __post_init__(self) -> None:
        if self.final_bytes > self.budget:
            raise ValidationError(
                f"final size {self.final_bytes} exceeds the budget {self.budget}"
            )
        if any(count < 0 for count in self.removed.values()):
            raise ValidationError("removal counts must be non-negative")
        object.__setattr__(self, "removed", dict(self.removed))

    @property
    def total_removed(self) -> int:
        return sum(self.removed.values())


def drop_small_masks(
    predictions: Sequence[Prediction], min_area: int = DEFAULT_MIN_MASK_AREA
) -> list[Prediction]:
    """Remove exactly the predictions whose mask covers fewer than min_area
    pixels; box-only predictions always pass.  Order is preserved."""
    return [
        p for p in predictions if p.mask is None or mask_area(p.mask) >= min_area
    ]


def trim_to_budget(
    predictions: Sequence[Prediction], max_bytes: int = DEFAULT_BYTE_BUDGET
) -> tuple[list[Prediction], TrimReport]:
    """Drop predictions until the serialized file fits in max_bytes.

    One prediction is removed per step: from the category with the most
    remaining predictions (ties: lexicographically smallest category id), its
    lowest-score prediction goes first (ties: latest in input order).
    Survivors keep their input order.
    """
    header_bytes = empty_predictions_size()
    if max_bytes < header_bytes:
        raise ValidationError(
            f"byte budget {max_bytes} is smaller than the header ({header_bytes} bytes)"
        )
    row_sizes = [prediction_row_size(p) for p in predictions]
    total = header_bytes + sum(row_sizes)
    removed_flags = [False] * len(predictions)
    removed_counts: dict[str, int] = {}
    remaining: dict[str, int] = {}
    removal_order: dict[str, list[int]] = {}
    for index, p in enumerate(predictions):
        removed_counts.setdefault(p.category_id, 0)
        remaining[p.category_id] = remaining.get(p.category_id, 0) + 1
        removal_order.setdefault(p.category_id, []).append(index)
    for category_id, indices in removal_order.items():
        # Pop-from-the-back order: lowest score first, latest input index first.
        indices.sort(key=lambda i: (-predictions[i].score, i))
    heap: list[tuple[int, str]] = [
        (-count, category_id) for category_id, count in remaining.items()
    ]
    heapq.heapify(heap)
    while total > max_bytes:
        while True:
            neg_count, category_id = heap[0]
            if remaining[category_id] == -neg_count:
                break
            heapq.heappop(heap)  # stale entry
        victim = removal_order[category_id].pop()
        removed_flags[victim] = True
        total -= row_sizes[victim]
        remaining[category_id] -= 1
        removed_counts[category_id] += 1
        heapq.heapreplace(heap, (-remaining[category_id], category_id))
    survivors = [p for i, p in enumerate(predictions) if not removed_flags[i]]
    report = TrimReport(removed=removed_counts, final_bytes=total, budget=max_bytes)
    return survivors, report
