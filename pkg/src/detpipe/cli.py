"""Command-line interface.

Every pipeline operation is a subcommand; ``pipeline`` chains them from a
plain-text configuration file.  Outputs are written atomically (to a
temporary file in the destination directory, then renamed).  Exit status: 0
on success, 1 on validation or I/O errors (one machine-parsable line on
stderr: ``error<TAB>type<TAB>message``), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

from . import fileio
from .ensemble import ensemble, nms
from .errors import ValidationError
from .evaluation import evaluate
from .experts import (
    filter_for_expert,
    rarity_ranking,
    restrict_predictions,
    split_by_embedding,
    split_by_rank,
)
from .federated import assign_rois, build_label_matrix, classification_loss, expand_verification
from .postprocess import (
    DEFAULT_BYTE_BUDGET,
    DEFAULT_MIN_MASK_AREA,
    drop_small_masks,
    trim_to_budget,
)
from .records import Roi, RoiPool
from .training import SamplerConfig, base_lr, cosine_lr, fnv1a64, partition_pool, sample_rois

__all__ = ["run", "main", "build_parser"]

PROG = "detpipe"


# -- small file helpers ---------------------------------------------------------


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write_bytes_atomic(path: str, data: bytes) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, target)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp_name)
        raise


# -- subcommand implementations ---------------------------------------------------


def _cmd_nms(args: argparse.Namespace) -> int:
    predictions = fileio.parse_predictions(_read_bytes(args.input))
    kept = nms(predictions, args.iou_threshold)
    _write_bytes_atomic(args.out, fileio.write_predictions(kept))
    return 0


def _cmd_ensemble(args: argparse.Namespace) -> int:
    prediction_sets = [fileio.parse_predictions(_read_bytes(p)) for p in args.inputs]
    fused = ensemble(prediction_sets, args.iou_threshold, threads=args.threads)
    _write_bytes_atomic(args.out, fileio.write_predictions(fused))
    return 0


def _cmd_assign(args: argparse.Namespace) -> int:
    pool = fileio.parse_roi_pool(_read_bytes(args.rois))
    gts = fileio.parse_ground_truth(_read_bytes(args.ground_truth))
    verification = fileio.parse_verification(_read_bytes(args.verification))
    hierarchy = fileio.parse_hierarchy(_read_bytes(args.hierarchy))
    categories = fileio.parse_category_list(_read_bytes(args.categories))
    if args.image_id not in pool.images:
        raise ValidationError(f"image {args.image_id!r} is not in the RoI pool")
    boxes = [roi.box for roi in pool.images[args.image_id]]
    image_gts = [g for g in gts if g.image_id == args.image_id]
    expanded = expand_verification(verification, hierarchy)
    assignment = assign_rois(boxes, image_gts, args.iou_threshold)
    matrix = build_label_matrix(assignment, image_gts, expanded, args.image_id, categories)
    _write_bytes_atomic(args.out, fileio.write_label_matrix(matrix))
    return 0


def _cmd_loss(args: argparse.Namespace) -> int:
    labels = fileio.parse_label_matrix(_read_bytes(args.labels))
    logits, categories = fileio.parse_logit_matrix(_read_bytes(args.logits))
    if categories != labels.categories:
        raise ValidationError(
            "logit matrix categories do not match the label matrix"
        )
    value = classification_loss(logits, labels)
    print(f"loss,{value!r}")
    return 0


def _cmd_sample_rois(args: argparse.Namespace) -> int:
    pool = fileio.parse_roi_pool(_read_bytes(args.rois))
    gts = fileio.parse_ground_truth(_read_bytes(args.ground_truth))
    config = SamplerConfig(
        n_sample=args.n_sample,
        fg_fraction=args.fg_fraction,
        fg_iou_threshold=args.fg_iou_threshold,
        seed=args.seed,
    )
    samples: dict[str, list[int]] = {}
    for image_id in sorted(pool.images):
        boxes = [roi.box for roi in pool.images[image_id]]
        gt_boxes = [g.box for g in gts if g.image_id == image_id]
        per_image = replace(config, seed=config.seed ^ fnv1a64(image_id))
        samples[image_id] = sample_rois(boxes, gt_boxes, per_image)
    _write_bytes_atomic(args.out, fileio.write_sampled_indices(samples))
    return 0


def _cmd_partition_pool(args: argparse.Namespace) -> int:
    pool = fileio.parse_roi_pool(_read_bytes(args.rois))
    if args.k < 1:
        raise ValidationError(f"number of partitions must be >= 1, got {args.k}")
    parts: list[dict[str, tuple[Roi, ...]]] = [{} for _ in range(args.k)]
    for image_id in sorted(pool.images):
        for index, chunk in enumerate(partition_pool(pool.images[image_id], args.k)):
            if chunk:
                parts[index][image_id] = tuple(chunk)
    for index, images in enumerate(parts):
        part_pool = RoiPool(images, max_per_image=pool.max_per_image)
        _write_bytes_atomic(f"{args.out_prefix}{index}.csv", fileio.write_roi_pool(part_pool))
    return 0


def _cmd_lr(args: argparse.Namespace) -> int:
    eta0 = args.eta0 if args.eta0 is not None else base_lr(args.batch_size)
    for progress in args.at:
        print(f"{progress!r},{cosine_lr(progress, eta0)!r}")
    return 0


def _cmd_split_experts(args: argparse.Namespace) -> int:
    if args.by == "rank":
        if args.stats is None:
            raise ValidationError("--stats is required with --by rank")
        if args.start_rank is None or args.end_rank is None or args.num_experts is None:
            raise ValidationError(
                "--start-rank, --end-rank and --num-experts are required with --by rank"
            )
        stats = fileio.parse_category_stats(_read_bytes(args.stats))
        ranking = rarity_ranking(stats)
        groups = split_by_rank(ranking, args.start_rank, args.end_rank, args.num_experts)
    else:
        if args.embeddings is None:
            raise ValidationError("--embeddings is required with --by embedding")
        if args.k is None:
            raise ValidationError("--k is required with --by embedding")
        table = fileio.parse_embeddings(_read_bytes(args.embeddings))
        groups = split_by_embedding(table, args.k, seed=args.seed)
    _write_bytes_atomic(args.out, fileio.write_category_groups(groups))
    return 0


def _select_group(path: str, group_index: int | None):
    groups = fileio.parse_category_groups(_read_bytes(path))
    if not groups:
        raise ValidationError(f"group file {path} contains no groups")
    if group_index is None:
        if len(groups) > 1:
            raise ValidationError(
                f"group file {path} has {len(groups)} groups; pass --group-index"
            )
        return groups[0]
    if not 0 <= group_index < len(groups):
        raise ValidationError(
            f"group index {group_index} out of range for {len(groups)} groups"
        )
    return groups[group_index]


def _cmd_filter_expert(args: argparse.Namespace) -> int:
    gts = fileio.parse_ground_truth(_read_bytes(args.ground_truth))
    verification = fileio.parse_verification(_read_bytes(args.verification))
    group = _select_group(args.group_file, args.group_index)
    kept_gts, kept_verification, kept_images = filter_for_expert(gts, verification, group)
    _write_bytes_atomic(args.out_ground_truth, fileio.write_ground_truth(kept_gts))
    _write_bytes_atomic(args.out_verification, fileio.write_verification(kept_verification))
    _write_bytes_atomic(args.out_images, fileio.write_image_list(kept_images))
    return 0


def _cmd_restrict(args: argparse.Namespace) -> int:
    predictions = fileio.parse_predictions(_read_bytes(args.input))
    group = _select_group(args.group_file, args.group_index)
    _write_bytes_atomic(
        args.out, fileio.write_predictions(restrict_predictions(predictions, group))
    )
    return 0


def _cmd_drop_small_masks(args: argparse.Namespace) -> int:
    predictions = fileio.parse_predictions(_read_bytes(args.input))
    kept = drop_small_masks(predictions, args.min_area)
    _write_bytes_atomic(args.out, fileio.write_predictions(kept))
    return 0


def _cmd_trim(args: argparse.Namespace) -> int:
    predictions = fileio.parse_predictions(_read_bytes(args.input))
    survivors, report = trim_to_budget(predictions, args.max_bytes)
    _write_bytes_atomic(args.out, fileio.write_predictions(survivors))
    _write_bytes_atomic(args.report, fileio.write_trim_report(report))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    predictions = fileio.parse_predictions(_read_bytes(args.predictions))
    gts = fileio.parse_ground_truth(_read_bytes(args.ground_truth))
    verification = fileio.parse_verification(_read_bytes(args.verification))
    hierarchy = fileio.parse_hierarchy(_read_bytes(args.hierarchy))
    report = evaluate(
        predictions, gts, verification, hierarchy, args.iou_threshold, args.mode
    )
    _write_bytes_atomic(args.out_report, fileio.write_eval_report(report))
    print(f"mAP,{report.mean_ap:.6f}")
    return 0


# -- pipeline ----------------------------------------------------------------------

# Flag names (config-key form) that hold input and output paths, per stage.
_STAGE_INPUTS: dict[str, tuple[str, ...]] = {
    "nms": ("in",),
    "ensemble": ("inputs",),
    "assign": ("rois", "ground-truth", "verification", "hierarchy", "categories"),
    "loss": ("labels", "logits"),
    "sample-rois": ("rois", "ground-truth"),
    "partition-pool": ("rois",),
    "lr": (),
    "split-experts": ("stats", "embeddings"),
    "filter-expert": ("ground-truth", "verification", "group-file"),
    "restrict": ("in", "group-file"),
    "drop-small-masks": ("in",),
    "trim": ("in",),
    "eval": ("predictions", "ground-truth", "verification", "hierarchy"),
}
_STAGE_OUTPUTS: dict[str, tuple[str, ...]] = {
    "nms": ("out",),
    "ensemble": ("out",),
    "assign": ("out",),
    "loss": (),
    "sample-rois": ("out",),
    "partition-pool": (),  # derived from out-prefix and k
    "lr": (),
    "split-experts": ("out",),
    "filter-expert": ("out-ground-truth", "out-verification", "out-images"),
    "restrict": ("out",),
    "drop-small-masks": ("out",),
    "trim": ("out", "report"),
    "eval": ("out-report",),
}


@dataclass
class _StagePlan:
    section: str
    stage: str
    argv: list[str]
    inputs: list[str]
    outputs: list[str]
    args: argparse.Namespace


def _parse_config_sections(text: str):
    """Parse the INI-like pipeline config into (label, stage, options) tuples.

    A section header names the stage to run; an optional ``.label`` suffix
    distinguishes repeated stages.  Keys use ``key = value``; values are
    taken verbatim after stripping whitespace.
    """
    sections: list[tuple[str, str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    for number, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            label = line[1:-1].strip()
            stage = label.split(".", 1)[0]
            if stage not in _STAGE_INPUTS:
                raise ValidationError(f"config line {number}: unknown stage {stage!r}")
            current = {}
            sections.append((label, stage, current))
            continue
        if current is None:
            raise ValidationError(f"config line {number}: key outside any [stage] section")
        if "=" not in line:
            raise ValidationError(f"config line {number}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().replace("_", "-")
        value = value.strip()
        if not key:
            raise ValidationError(f"config line {number}: empty key")
        if key in current:
            raise ValidationError(f"config line {number}: duplicate key {key!r}")
        current[key] = value
    if not sections:
        raise ValidationError("pipeline config defines no stages")
    return sections


def _resolve_stage_paths(
    stage: str,
    options: dict[str, str],
    config_dir: Path,
    run_dir: Path,
    produced: set[str],
) -> tuple[list[str], list[str]]:
    """Rewrite path options in place; relative outputs land in the run
    directory, relative inputs resolve to a prior stage's output when one
    matches and to the config directory otherwise."""

    def resolve_input(raw: str) -> str:
        candidate = raw if os.path.isabs(raw) else str(run_dir / raw)
        if candidate in produced:
            return candidate
        return raw if os.path.isabs(raw) else str(config_dir / raw)

    def resolve_output(raw: str) -> str:
        return raw if os.path.isabs(raw) else str(run_dir / raw)

    inputs: list[str] = []
    outputs: list[str] = []
    for key in _STAGE_INPUTS[stage]:
        if key not in options:
            continue
        if stage == "ensemble" and key == "inputs":
            resolved = [resolve_input(tok) for tok in options[key].split()]
            options[key] = " ".join(resolved)
            inputs.extend(resolved)
        else:
            options[key] = resolve_input(options[key])
            inputs.append(options[key])
    for key in _STAGE_OUTPUTS[stage]:
        if key not in options:
            continue
        options[key] = resolve_output(options[key])
        outputs.append(options[key])
    if stage == "partition-pool" and "out-prefix" in options:
        options["out-prefix"] = resolve_output(options["out-prefix"])
        k = int(options.get("k", "0") or 0)
        outputs.extend(f"{options['out-prefix']}{i}.csv" for i in range(k))
    return inputs, outputs


def _stage_argv(stage: str, options: dict[str, str]) -> list[str]:
    argv = [stage]
    for key, value in options.items():
        if stage == "ensemble" and key == "inputs":
            argv.extend(value.split())
        else:
            argv.extend((f"--{key}", value))
    return argv


def _plan_pipeline(args: argparse.Namespace, parser: argparse.ArgumentParser):
    config_path = Path(args.config)
    config_text = _read_bytes(str(config_path)).decode("utf-8")
    run_dir = Path(args.run_dir)
    config_dir = config_path.resolve().parent
    produced: set[str] = set()
    plans: list[_StagePlan] = []
    for label, stage, options in _parse_config_sections(config_text):
        if (
            stage == "ensemble"
            and args.threads is not None
            and "threads" not in options
        ):
            options["threads"] = str(args.threads)
        inputs, outputs = _resolve_stage_paths(
            stage, options, config_dir, run_dir.resolve(), produced
        )
        for path in inputs:
            if path not in produced and not os.path.exists(path):
                raise ValidationError(f"stage {label!r}: input file not found: {path}")
        argv = _stage_argv(stage, options)
        stderr_buffer = io.StringIO()
        try:
            with contextlib.redirect_stderr(stderr_buffer):
                stage_args = parser.parse_args(argv)
        except SystemExit as exc:
            detail = stderr_buffer.getvalue().strip().splitlines()
            raise ValidationError(
                f"stage {label!r}: invalid arguments"
                + (f": {detail[-1]}" if detail else "")
            ) from exc
        produced.update(outputs)
        plans.append(_StagePlan(label, stage, argv, inputs, outputs, stage_args))
    return plans, run_dir


def _cmd_pipeline(args: argparse.Namespace) -> int:
    parser = build_parser()
    plans, run_dir = _plan_pipeline(args, parser)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": str(Path(args.config).resolve()),
        "run_dir": str(run_dir.resolve()),
        "stages": [],
    }
    manifest_path = run_dir / "manifest.json"

    def flush_manifest() -> None:
        _write_bytes_atomic(
            str(manifest_path),
            (json.dumps(manifest, indent=2) + "\n").encode("utf-8"),
        )

    for plan in plans:
        entry = {
            "section": plan.section,
            "stage": plan.stage,
            "argv": plan.argv,
            "inputs": plan.inputs,
            "outputs": plan.outputs,
            "status": "ok",
        }
        try:
            plan.args.func(plan.args)
        except (ValidationError, OSError) as exc:
            entry["status"] = "failed"
            entry["error"] = str(exc)
            manifest["stages"].append(entry)
            flush_manifest()
            raise ValidationError(f"stage {plan.section!r} failed: {exc}") from exc
        manifest["stages"].append(entry)
        flush_manifest()
    return 0


# -- parser -------------------------------------------------------------------------


def _add_iou_threshold(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--iou-threshold",
        type=float,
        default=0.5,
        help="IoU threshold (default 0.5)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Detection prediction post-processing toolkit.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("nms", help="class-wise non-maximum suppression")
    p.add_argument("--in", dest="input", required=True, help="predictions CSV")
    p.add_argument("--out", required=True, help="output predictions CSV")
    _add_iou_threshold(p)
    p.set_defaults(func=_cmd_nms)

    p = subparsers.add_parser("ensemble", help="two-stage multi-model ensembling")
    p.add_argument("inputs", nargs="+", help="prediction CSVs, one per model, in order")
    p.add_argument("--out", required=True, help="output predictions CSV")
    _add_iou_threshold(p)
    p.add_argument("--threads", type=int, default=1, help="per-model NMS worker threads")
    p.set_defaults(func=_cmd_ensemble)

    p = subparsers.add_parser("assign", help="build one image's label matrix")
    p.add_argument("--image-id", required=True)
    p.add_argument("--rois", required=True, help="RoI pool CSV")
    p.add_argument("--ground-truth", required=True, help="ground truth CSV")
    p.add_argument("--verification", required=True, help="verification CSV")
    p.add_argument("--hierarchy", required=True, help="hierarchy JSON")
    p.add_argument("--categories", required=True, help="category list CSV")
    _add_iou_threshold(p)
    p.add_argument("--out", required=True, help="output label matrix CSV")
    p.set_defaults(func=_cmd_assign)

    p = subparsers.add_parser("loss", help="classification loss of logits vs labels")
    p.add_argument("--labels", required=True, help="label matrix CSV")
    p.add_argument("--logits", required=True, help="logit matrix CSV")
    p.set_defaults(func=_cmd_loss)

    p = subparsers.add_parser("sample-rois", help="sample head-training RoIs per image")
    p.add_argument("--rois", required=True, help="RoI pool CSV")
    p.add_argument("--ground-truth", required=True, help="ground truth CSV")
    p.add_argument("--n-sample", type=int, default=512)
    p.add_argument("--fg-fraction", type=float, default=0.25)
    p.add_argument("--fg-iou-threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output sampled-index CSV")
    p.set_defaults(func=_cmd_sample_rois)

    p = subparsers.add_parser("partition-pool", help="split an RoI pool into k disjoint pools")
    p.add_argument("--rois", required=True, help="RoI pool CSV")
    p.add_argument("--k", type=int, required=True)
    p.add_argument(
        "--out-prefix",
        required=True,
        help="output prefix; partition i goes to <prefix><i>.csv",
    )
    p.set_defaults(func=_cmd_partition_pool)

    p = subparsers.add_parser("lr", help="print the cosine schedule at given progress values")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--batch-size", type=int, help="derive eta0 as 0.00125 * batch size")
    group.add_argument("--eta0", type=float, help="explicit initial learning rate")
    p.add_argument(
        "--at",
        type=float,
        action="append",
        required=True,
        help="progress ratio in [0, 1]; repeatable",
    )
    p.set_defaults(func=_cmd_lr)

    p = subparsers.add_parser("split-experts", help="build expert category groups")
    p.add_argument("--by", choices=("rank", "embedding"), required=True)
    p.add_argument("--stats", help="category stats CSV (rank mode)")
    p.add_argument("--start-rank", type=int, help="window start, 0 = rarest (rank mode)")
    p.add_argument("--end-rank", type=int, help="window end, exclusive (rank mode)")
    p.add_argument("--num-experts", type=int, help="number of groups (rank mode)")
    p.add_argument("--embeddings", help="embeddings CSV (embedding mode)")
    p.add_argument("--k", type=int, help="number of clusters (embedding mode)")
    p.add_argument("--seed", type=int, default=0, help="clustering seed (embedding mode)")
    p.add_argument("--out", required=True, help="output group CSV")
    p.set_defaults(func=_cmd_split_experts)

    p = subparsers.add_parser("filter-expert", help="restrict a training set to one group")
    p.add_argument("--ground-truth", required=True, help="ground truth CSV")
    p.add_argument("--verification", required=True, help="verification CSV")
    p.add_argument("--group-file", required=True, help="group CSV")
    p.add_argument("--group-index", type=int, default=None)
    p.add_argument("--out-ground-truth", required=True)
    p.add_argument("--out-verification", required=True)
    p.add_argument("--out-images", required=True, help="kept image list CSV")
    p.set_defaults(func=_cmd_filter_expert)

    p = subparsers.add_parser("restrict", help="drop predictions outside a category group")
    p.add_argument("--in", dest="input", required=True, help="predictions CSV")
    p.add_argument("--group-file", required=True, help="group CSV")
    p.add_argument("--group-index", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_restrict)

    p = subparsers.add_parser("drop-small-masks", help="remove predictions with tiny masks")
    p.add_argument("--in", dest="input", required=True, help="predictions CSV")
    p.add_argument("--min-area", type=int, default=DEFAULT_MIN_MASK_AREA)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_drop_small_masks)

    p = subparsers.add_parser("trim", help="trim predictions to a byte budget")
    p.add_argument("--in", dest="input", required=True, help="predictions CSV")
    p.add_argument("--max-bytes", type=int, default=DEFAULT_BYTE_BUDGET)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True, help="trim report CSV")
    p.set_defaults(func=_cmd_trim)

    p = subparsers.add_parser("eval", help="federated mean average precision")
    p.add_argument("--predictions", required=True, help="predictions CSV")
    p.add_argument("--ground-truth", required=True, help="ground truth CSV")
    p.add_argument("--verification", required=True, help="verification CSV")
    p.add_argument("--hierarchy", required=True, help="hierarchy JSON")
    p.add_argument("--mode", choices=("box", "mask"), default="box")
    _add_iou_threshold(p)
    p.add_argument("--out-report", required=True, help="per-category report CSV")
    p.set_defaults(func=_cmd_eval)

    p = subparsers.add_parser("pipeline", help="run a multi-stage configuration")
    p.add_argument("--config", required=True, help="pipeline config file")
    p.add_argument("--run-dir", required=True, help="directory for outputs and manifest")
    p.add_argument("--threads", type=int, default=None, help="threads for ensemble stages")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def run(argv) -> int:
    """Parse argv and run the selected subcommand; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return int(args.func(args) or 0)
    except (ValidationError, OSError) as exc:
        message = " ".join(str(exc).split())
        print(f"error\t{type(exc).__name__}\t{message}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
