"""Bit-exact file formats and their parsers/serializers.

All tabular formats are UTF-8, LF-terminated CSV with a fixed header row and
no quoting; identifiers therefore must not contain commas or newlines (the
record types enforce this).  Floats are rendered with the shortest decimal
representation that round-trips, so ``write(parse(f)) == f`` for any file this
module wrote and ``parse(write(records)) == records`` for any record list.

Formats
-------
predictions      ``image_id,category_id,score,x_min,y_min,x_max,y_max,mask_width,mask_height,mask_rle``
                 (the last three fields are empty for box-only predictions;
                 ``mask_rle`` is space-separated run lengths)
ground truth     ``image_id,category_id,x_min,y_min,x_max,y_max,mask_width,mask_height,mask_rle``
verification     ``image_id,category_id,verification`` with verification in {1, -1}
hierarchy        JSON list of ``{"child": ..., "parent": ...}`` objects
category stats   ``category_id,count``
RoI pool         ``image_id,x_min,y_min,x_max,y_max,objectness`` (objectness may be empty)
embeddings       ``category_id,v0,v1,...,v{d-1}``
category groups  ``group_index,category_id``
category list    ``category_id``
image list       ``image_id``
sampled indices  ``image_id,roi_index``
label matrix     ``roi_index,category_id,label`` with label in {-1, 0, 1}
logit matrix     ``roi_index,category_id,logit``
eval report      ``category_id,ap,gt_count,prediction_count,ignored_count``
trim report      ``kind,key,value``
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import BinaryMask, Box
from .records import (
    DEFAULT_POOL_LIMIT,
    CategoryStats,
    EmbeddingTable,
    GroundTruthInstance,
    Hierarchy,
    Prediction,
    Roi,
    RoiPool,
    VerificationTable,
)

__all__ = [
    "PREDICTIONS_HEADER",
    "GROUND_TRUTH_HEADER",
    "VERIFICATION_HEADER",
    "STATS_HEADER",
    "ROI_POOL_HEADER",
    "EMBEDDINGS_HEADER_PREFIX",
    "GROUPS_HEADER",
    "CATEGORY_LIST_HEADER",
    "IMAGE_LIST_HEADER",
    "SAMPLED_HEADER",
    "LABELS_HEADER",
    "LOGITS_HEADER",
    "EVAL_REPORT_HEADER",
    "TRIM_REPORT_HEADER",
    "parse_predictions",
    "write_predictions",
    "serialized_size",
    "prediction_row_size",
    "empty_predictions_size",
    "parse_ground_truth",
    "write_ground_truth",
    "parse_verification",
    "write_verification",
    "parse_hierarchy",
    "write_hierarchy",
    "parse_category_stats",
    "write_category_stats",
    "parse_roi_pool",
    "write_roi_pool",
    "parse_embeddings",
    "write_embeddings",
    "parse_category_list",
    "write_category_list",
    "parse_image_list",
    "write_image_list",
    "parse_category_groups",
    "write_category_groups",
    "parse_sampled_indices",
    "write_sampled_indices",
    "parse_label_matrix",
    "write_label_matrix",
    "parse_logit_matrix",
    "write_logit_matrix",
    "write_eval_report",
    "write_trim_report",
]

PREDICTIONS_HEADER = (
    "image_id,category_id,score,x_min,y_min,x_max,y_max,mask_width,mask_height,mask_rle"
)
GROUND_TRUTH_HEADER = (
    "image_id,category_id,x_min,y_min,x_max,y_max,mask_width,mask_height,mask_rle"
)
VERIFICATION_HEADER = "image_id,category_id,verification"
STATS_HEADER = "category_id,count"
ROI_POOL_HEADER = "image_id,x_min,y_min,x_max,y_max,objectness"
EMBEDDINGS_HEADER_PREFIX = "category_id"
GROUPS_HEADER = "group_index,category_id"
CATEGORY_LIST_HEADER = "category_id"
IMAGE_LIST_HEADER = "image_id"
SAMPLED_HEADER = "image_id,roi_index"
LABELS_HEADER = "roi_index,category_id,label"
LOGITS_HEADER = "roi_index,category_id,logit"
EVAL_REPORT_HEADER = "category_id,ap,gt_count,prediction_count,ignored_count"
TRIM_REPORT_HEADER = "kind,key,value"


def _fmt_float(value: float) -> str:
    # repr() of a Python float is the shortest string that round-trips.
    return repr(float(value))


def _decode(data: bytes | str) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(1, f"not valid UTF-8: {exc}") from exc
    return data


def _csv_lines(data: bytes | str, header: str):
    """Yield (line_number, line) for data rows after validating the header."""
    text = _decode(data)
    if "\r" in text:
        raise ParseError(1, "carriage returns are not allowed; files are LF-terminated")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(1, f"missing header; expected {header!r}")
    if lines[0] != header:
        raise ParseError(1, f"bad header {lines[0]!r}; expected {header!r}")
    for number, line in enumerate(lines[1:], start=2):
        if line == "":
            raise ParseError(number, "empty line")
        yield number, line


def _split(line: str, line_number: int, n_fields: int) -> list[str]:
    parts = line.split(",")
    if len(parts) != n_fields:
        raise ParseError(line_number, f"expected {n_fields} fields, got {len(parts)}")
    return parts


def _parse_float(text: str, line_number: int, name: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(line_number, f"bad {name} {text!r}") from exc


def _parse_int(text: str, line_number: int, name: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ParseError(line_number, f"bad {name} {text!r}") from exc


def _parse_mask_fields(
    parts: Sequence[str], line_number: int
) -> BinaryMask | None:
    width_s, height_s, rle_s = parts
    if width_s == "" and height_s == "" and rle_s == "":
        return None
    if width_s == "" or height_s == "":
        raise ParseError(line_number, "mask fields must be all empty or all present")
    width = _parse_int(width_s, line_number, "mask_width")
    height = _parse_int(height_s, line_number, "mask_height")
    if rle_s == "":
        raise ParseError(line_number, "mask_rle is empty but dimensions are present")
    runs = tuple(_parse_int(tok, line_number, "mask run") for tok in rle_s.split(" "))
    try:
        return BinaryMask(width, height, runs)
    except ValidationError as exc:
        raise ParseError(line_number, str(exc)) from exc


def _mask_fields(mask: BinaryMask | None) -> tuple[str, str, str]:
    if mask is None:
        return "", "", ""
    return str(mask.width), str(mask.height), " ".join(str(r) for r in mask.runs)


def _check_mask_dimensions(
    mask: BinaryMask | None,
    image_id: str,
    image_sizes: Mapping[str, tuple[int, int]] | None,
    line_number: int,
) -> None:
    if mask is None or image_sizes is None:
        return
    if image_id not in image_sizes:
        raise ParseError(line_number, f"no recorded dimensions for image {image_id!r}")
    expected = tuple(image_sizes[image_id])
    if (mask.width, mask.height) != expected:
        raise ParseError(
            line_number,
            f"mask is {mask.width}x{mask.height} but image {image_id!r} "
            f"is {expected[0]}x{expected[1]}",
        )


# -- predictions --------------------------------------------------------------


def parse_predictions(
    data: bytes | str,
    image_sizes: Mapping[str, tuple[int, int]] | None = None,
) -> list[Prediction]:
    """Parse a predictions file; mask dimensions are cross-checked against
    image_sizes when a table is supplied."""
    out: list[Prediction] = []
    for number, line in _csv_lines(data, PREDICTIONS_HEADER):
        parts = _split(line, number, 10)
        mask = _parse_mask_fields(parts[7:10], number)
        _check_mask_dimensions(mask, parts[0], image_sizes, number)
        try:
            box = Box(
                _parse_float(parts[3], number, "x_min"),
                _parse_float(parts[4], number, "y_min"),
                _parse_float(parts[5], number, "x_max"),
                _parse_float(parts[6], number, "y_max"),
            )
            record = Prediction(
                image_id=parts[0],
                category_id=parts[1],
                score=_parse_float(parts[2], number, "score"),
                box=box,
                mask=mask,
            )
        except ValidationError as exc:
            raise ParseError(number, str(exc)) from exc
        out.append(record)
    return out


def _prediction_row(p: Prediction) -> str:
    mask_w, mask_h, mask_rle = _mask_fields(p.mask)
    return ",".join(
        (
            p.image_id,
            p.category_id,
            _fmt_float(p.score),
            _fmt_float(p.box.x_min),
            _fmt_float(p.box.y_min),
            _fmt_float(p.box.x_max),
            _fmt_float(p.box.y_max),
            mask_w,
            mask_h,
            mask_rle,
        )
    )


def write_predictions(predictions: Sequence[Prediction]) -> bytes:
    lines = [PREDICTIONS_HEADER]
    lines.extend(_prediction_row(p) for p in predictions)
    return ("\n".join(lines) + "\n").encode("utf-8")


def empty_predictions_size() -> int:
    """Byte length of a predictions file with no rows."""
    return len(PREDICTIONS_HEADER.encode("utf-8")) + 1


def prediction_row_size(p: Prediction) -> int:
    """Byte length one prediction contributes to the serialized file."""
    return len(_prediction_row(p).encode("utf-8")) + 1


def serialized_size(predictions: Sequence[Prediction]) -> int:
    """Exact byte length write_predictions() would produce."""
    return empty_predictions_size() + sum(prediction_row_size(p) for p in predictions)


# -- ground truth --------------------------------------------------------------


def parse_ground_truth(
    data: bytes | str,
    image_sizes: Mapping[str, tuple[int, int]] | None = None,
) -> list[GroundTruthInstance]:
    out: list[GroundTruthInstance] = []
    for number, line in _csv_lines(data, GROUND_TRUTH_HEADER):
        parts = _split(line, number, 9)
        mask = _parse_mask_fields(parts[6:9], number)
        _check_mask_dimensions(mask, parts[0], image_sizes, number)
        try:
            box = Box(
                _parse_float(parts[2], number, "x_min"),
                _parse_float(parts[3], number, "y_min"),
                _parse_float(parts[4], number, "x_max"),
                _parse_float(parts[5], number, "y_max"),
            )
            record = GroundTruthInstance(
                image_id=parts[0], category_id=parts[1], box=box, mask=mask
            )
        except ValidationError as exc:
            raise ParseError(number, str(exc)) from exc
        out.append(record)
    return out


def write_ground_truth(instances: Sequence[GroundTruthInstance]) -> bytes:
    lines = [GROUND_TRUTH_HEADER]
    for g in instances:
        mask_w, mask_h, mask_rle = _mask_fields(g.mask)
        lines.append(
            ",".join(
                (
                    g.image_id,
                    g.category_id,
                    _fmt_float(g.box.x_min),
                    _fmt_float(g.box.y_min),
                    _fmt_float(g.box.x_max),
                    _fmt_float(g.box.y_max),
                    mask_w,
                    mask_h,
                    mask_rle,
                )
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- verification --------------------------------------------------------------


def parse_verification(data: bytes | str) -> VerificationTable:
    entries: dict[tuple[str, str], int] = {}
    for number, line in _csv_lines(data, VERIFICATION_HEADER):
        parts = _split(line, number, 3)
        if parts[2] not in ("1", "-1"):
            raise ParseError(number, f"verification must be 1 or -1, got {parts[2]!r}")
        key = (parts[0], parts[1])
        sign = int(parts[2])
        if key in entries and entries[key] != sign:
            raise ParseError(
                number,
                f"conflicting verification for image {key[0]!r}, category {key[1]!r}",
            )
        entries[key] = sign
    try:
        return VerificationTable(entries)
    except ValidationError as exc:
        raise ParseError(1, str(exc)) from exc


def write_verification(table: VerificationTable) -> bytes:
    lines = [VERIFICATION_HEADER]
    for (image_id, category_id), sign in sorted(table.items()):
        lines.append(f"{image_id},{category_id},{sign}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- hierarchy -----------------------------------------------------------------


def parse_hierarchy(
    data: bytes | str, categories: Sequence[str] | None = None
) -> Hierarchy:
    text = _decode(data)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(raw, list):
        raise ParseError(1, "hierarchy must be a JSON list of {child, parent} objects")
    edges = []
    for index, item in enumerate(raw):
        if (
            not isinstance(item, dict)
            or set(item) != {"child", "parent"}
            or not isinstance(item.get("child"), str)
            or not isinstance(item.get("parent"), str)
        ):
            raise ParseError(
                1, f"hierarchy entry {index} must be an object with child and parent strings"
            )
        edges.append((item["child"], item["parent"]))
    return Hierarchy(edges, categories=categories)


def write_hierarchy(hierarchy: Hierarchy) -> bytes:
    payload = [{"child": child, "parent": parent} for child, parent in hierarchy.edges]
    return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")


# -- category stats ------------------------------------------------------------


def parse_category_stats(data: bytes | str) -> CategoryStats:
    counts: dict[str, int] = {}
    for number, line in _csv_lines(data, STATS_HEADER):
        parts = _split(line, number, 2)
        if parts[0] in counts:
            raise ParseError(number, f"duplicate category {parts[0]!r}")
        count = _parse_int(parts[1], number, "count")
        if count < 0:
            raise ParseError(number, f"count must be non-negative, got {count}")
        counts[parts[0]] = count
    return CategoryStats(counts)


def write_category_stats(stats: CategoryStats) -> bytes:
    lines = [STATS_HEADER]
    for category_id, count in sorted(stats.items()):
        lines.append(f"{category_id},{count}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- RoI pool ------------------------------------------------------------------


def parse_roi_pool(
    data: bytes | str, max_per_image: int = DEFAULT_POOL_LIMIT
) -> RoiPool:
    images: dict[str, list[Roi]] = {}
    for number, line in _csv_lines(data, ROI_POOL_HEADER):
        parts = _split(line, number, 6)
        objectness = None
        if parts[5] != "":
            objectness = _parse_float(parts[5], number, "objectness")
        try:
            roi = Roi(
                box=Box(
                    _parse_float(parts[1], number, "x_min"),
                    _parse_float(parts[2], number, "y_min"),
                    _parse_float(parts[3], number, "x_max"),
                    _parse_float(parts[4], number, "y_max"),
                ),
                objectness=objectness,
            )
        except ValidationError as exc:
            raise ParseError(number, str(exc)) from exc
        per_image = images.setdefault(parts[0], [])
        if len(per_image) >= max_per_image:
            raise ParseError(
                number,
                f"image {parts[0]!r} exceeds the pool limit of {max_per_image} RoIs",
            )
        per_image.append(roi)
    return RoiPool(
        {image_id: tuple(rois) for image_id, rois in images.items()},
        max_per_image=max_per_image,
    )


def write_roi_pool(pool: RoiPool) -> bytes:
    lines = [ROI_POOL_HEADER]
    for image_id in sorted(pool.images):
        for roi in pool.images[image_id]:
            objectness = "" if roi.objectness is None else _fmt_float(roi.objectness)
            lines.append(
                ",".join(
                    (
                        image_id,
                        _fmt_float(roi.box.x_min),
                        _fmt_float(roi.box.y_min),
                        _fmt_float(roi.box.x_max),
                        _fmt_float(roi.box.y_max),
                        objectness,
                    )
                )
            )
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- embeddings ----------------------------------------------------------------


def parse_embeddings(data: bytes | str) -> EmbeddingTable:
    text = _decode(data)
    if "\r" in text:
        raise ParseError(1, "carriage returns are not allowed; files are LF-terminated")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(1, "missing embeddings header")
    header = lines[0].split(",")
    if header[0] != EMBEDDINGS_HEADER_PREFIX or len(header) < 2:
        raise ParseError(1, f"bad embeddings header {lines[0]!r}")
    dimension = len(header) - 1
    expected = [EMBEDDINGS_HEADER_PREFIX] + [f"v{i}" for i in range(dimension)]
    if header != expected:
        raise ParseError(1, f"bad embeddings header {lines[0]!r}")
    vectors: dict[str, list[float]] = {}
    for number, line in enumerate(lines[1:], start=2):
        if line == "":
            raise ParseError(number, "empty line")
        parts = line.split(",")
        if len(parts) != dimension + 1:
            raise ParseError(
                number,
                f"embedding dimension mismatch: expected {dimension} values, "
                f"got {len(parts) - 1}",
            )
        if parts[0] in vectors:
            raise ParseError(number, f"duplicate category {parts[0]!r}")
        vectors[parts[0]] = [
            _parse_float(tok, number, "embedding value") for tok in parts[1:]
        ]
    try:
        return EmbeddingTable(vectors)
    except ValidationError as exc:
        raise ParseError(1, str(exc)) from exc


def write_embeddings(table: EmbeddingTable) -> bytes:
    header = ",".join(
        [EMBEDDINGS_HEADER_PREFIX] + [f"v{i}" for i in range(table.dimension)]
    )
    lines = [header]
    for category_id in sorted(table):
        values = ",".join(_fmt_float(v) for v in table[category_id])
        lines.append(f"{category_id},{values}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- category lists and groups ---------------------------------------------------


def parse_image_list(data: bytes | str) -> list[str]:
    seen: list[str] = []
    for number, line in _csv_lines(data, IMAGE_LIST_HEADER):
        parts = _split(line, number, 1)
        if parts[0] in seen:
            raise ParseError(number, f"duplicate image {parts[0]!r}")
        if parts[0] == "":
            raise ParseError(number, "empty image id")
        seen.append(parts[0])
    return seen


def write_image_list(images: Sequence[str]) -> bytes:
    lines = [IMAGE_LIST_HEADER]
    lines.extend(images)
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_category_list(data: bytes | str) -> list[str]:
    seen: list[str] = []
    for number, line in _csv_lines(data, CATEGORY_LIST_HEADER):
        parts = _split(line, number, 1)
        if parts[0] in seen:
            raise ParseError(number, f"duplicate category {parts[0]!r}")
        if parts[0] == "":
            raise ParseError(number, "empty category id")
        seen.append(parts[0])
    return seen


def write_category_list(categories: Sequence[str]) -> bytes:
    lines = [CATEGORY_LIST_HEADER]
    lines.extend(categories)
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_category_groups(data: bytes | str):
    """Parse a group file into a list of CategoryGroup records.

    Group indices must start at 0 and be contiguous and non-decreasing.
    """
    from .experts import CategoryGroup

    groups: list[list[str]] = []
    for number, line in _csv_lines(data, GROUPS_HEADER):
        parts = _split(line, number, 2)
        index = _parse_int(parts[0], number, "group_index")
        if index == len(groups):
            groups.append([])
        elif index != len(groups) - 1:
            raise ParseError(
                number,
                f"group indices must be contiguous and non-decreasing, got {index}",
            )
        if parts[1] in groups[index]:
            raise ParseError(number, f"duplicate category {parts[1]!r} in group {index}")
        groups[index].append(parts[1])
    out = []
    for members in groups:
        try:
            out.append(CategoryGroup(tuple(members), provenance="file"))
        except ValidationError as exc:
            raise ParseError(1, str(exc)) from exc
    return out


def write_category_groups(groups) -> bytes:
    lines = [GROUPS_HEADER]
    for index, group in enumerate(groups):
        for category_id in group.categories:
            lines.append(f"{index},{category_id}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- sampled RoI indices ---------------------------------------------------------


def parse_sampled_indices(data: bytes | str) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for number, line in _csv_lines(data, SAMPLED_HEADER):
        parts = _split(line, number, 2)
        index = _parse_int(parts[1], number, "roi_index")
        if index < 0:
            raise ParseError(number, f"roi_index must be non-negative, got {index}")
        out.setdefault(parts[0], []).append(index)
    return out


def write_sampled_indices(samples: Mapping[str, Sequence[int]]) -> bytes:
    lines = [SAMPLED_HEADER]
    for image_id in sorted(samples):
        for index in samples[image_id]:
            lines.append(f"{image_id},{index}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- label and logit matrices ----------------------------------------------------


def _parse_matrix(data: bytes | str, header: str, parse_value, value_name: str):
    """Shared shape handling: rows are roi-major, categories repeat per RoI."""
    entries: list[tuple[int, str, object, int]] = []
    for number, line in _csv_lines(data, header):
        parts = _split(line, number, 3)
        roi_index = _parse_int(parts[0], number, "roi_index")
        value = parse_value(parts[2], number, value_name)
        entries.append((roi_index, parts[1], value, number))
    if not entries:
        return [], ()
    # The category order is defined by the rows of RoI 0.
    categories: list[str] = []
    for roi_index, category_id, _, number in entries:
        if roi_index != 0:
            break
        if category_id in categories:
            raise ParseError(number, f"duplicate category {category_id!r} for roi 0")
        categories.append(category_id)
    if not categories:
        raise ParseError(entries[0][3], "first roi_index must be 0")
    n_categories = len(categories)
    if len(entries) % n_categories != 0:
        raise ParseError(1, "matrix ends mid-row")
    rows: list[list] = []
    for r in range(len(entries) // n_categories):
        row = []
        for c in range(n_categories):
            roi_index, category_id, value, number = entries[r * n_categories + c]
            if roi_index != r:
                raise ParseError(number, f"expected roi_index {r}, got {roi_index}")
            if category_id != categories[c]:
                raise ParseError(
                    number, f"expected category {categories[c]!r}, got {category_id!r}"
                )
            row.append(value)
        rows.append(row)
    return rows, tuple(categories)


def parse_label_matrix(data: bytes | str):
    """Parse a label CSV into a LabelMatrix."""
    from .federated import LabelMatrix

    def parse_label(text: str, number: int, name: str) -> int:
        value = _parse_int(text, number, name)
        if value not in (-1, 0, 1):
            raise ParseError(number, f"label must be -1, 0 or 1, got {value}")
        return value

    rows, categories = _parse_matrix(data, LABELS_HEADER, parse_label, "label")
    if not rows:
        raise ParseError(1, "label matrix has no rows")
    try:
        return LabelMatrix(np.asarray(rows, dtype=np.int8), categories)
    except ValidationError as exc:
        raise ParseError(1, str(exc)) from exc


def write_label_matrix(matrix) -> bytes:
    lines = [LABELS_HEADER]
    for i in range(matrix.values.shape[0]):
        for j, category_id in enumerate(matrix.categories):
            lines.append(f"{i},{category_id},{int(matrix.values[i, j])}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_logit_matrix(data: bytes | str) -> tuple[np.ndarray, tuple[str, ...]]:
    rows, categories = _parse_matrix(data, LOGITS_HEADER, _parse_float, "logit")
    if not rows:
        raise ParseError(1, "logit matrix has no rows")
    return np.asarray(rows, dtype=np.float64), categories


def write_logit_matrix(logits: np.ndarray, categories: Sequence[str]) -> bytes:
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != len(categories):
        raise ValidationError("logit matrix shape does not match the category list")
    lines = [LOGITS_HEADER]
    for i in range(arr.shape[0]):
        for j, category_id in enumerate(categories):
            lines.append(f"{i},{category_id},{_fmt_float(arr[i, j])}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- reports ---------------------------------------------------------------------


def write_eval_report(report) -> bytes:
    lines = [EVAL_REPORT_HEADER]
    for row in report.results:
        ap = "" if row.ap is None else _fmt_float(row.ap)
        lines.append(
            f"{row.category_id},{ap},{row.gt_count},"
            f"{row.prediction_count},{row.ignored_count}"
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_trim_report(report) -> bytes:
    lines = [TRIM_REPORT_HEADER]
    lines.append(f"summary,final_bytes,{report.final_bytes}")
    lines.append(f"summary,budget,{report.budget}")
    for category_id in sorted(report.removed):
        lines.append(f"category,{category_id},{report.removed[category_id]}")
    return ("\n".join(lines) + "\n").encode("utf-8")
