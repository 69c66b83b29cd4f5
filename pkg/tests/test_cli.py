import json
from pathlib import Path

import numpy as np
import pytest

from detpipe import (
    Box,
    EmbeddingTable,
    GroundTruthInstance,
    Hierarchy,
    Prediction,
    Roi,
    RoiPool,
    VerificationTable,
    classification_loss,
    drop_small_masks,
    ensemble,
    nms,
    trim_to_budget,
)
from detpipe import cli, fileio
from detpipe.fileio import serialized_size

FIXTURES = Path(__file__).parent / "fixtures"


def write(path: Path, data: bytes) -> Path:
    path.write_bytes(data)
    return path


def small_world(tmp_path: Path):
    predictions = [
        Prediction("im1", "c1", 0.9, Box(0, 0, 10, 10)),
        Prediction("im1", "c1", 0.8, Box(0, 0, 10, 10)),
        Prediction("im1", "c2", 0.7, Box(20, 20, 40, 40)),
        Prediction("im2", "c1", 0.6, Box(5, 5, 25, 25)),
    ]
    gts = [
        GroundTruthInstance("im1", "c1", Box(0, 0, 10, 10)),
        GroundTruthInstance("im1", "c2", Box(20, 20, 40, 40)),
        GroundTruthInstance("im2", "c1", Box(5, 5, 25, 25)),
    ]
    table = VerificationTable(
        {("im1", "c1"): 1, ("im1", "c2"): 1, ("im2", "c1"): 1, ("im2", "c2"): -1}
    )
    paths = {
        "preds": write(tmp_path / "preds.csv", fileio.write_predictions(predictions)),
        "gt": write(tmp_path / "gt.csv", fileio.write_ground_truth(gts)),
        "ver": write(tmp_path / "ver.csv", fileio.write_verification(table)),
        "hier": write(tmp_path / "hier.json", fileio.write_hierarchy(Hierarchy(()))),
    }
    return predictions, gts, table, paths


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert cli.run(["definitely-not-a-command"]) == 2
        capsys.readouterr()

    def test_missing_required_flag_is_usage_error(self, capsys):
        assert cli.run(["nms"]) == 2
        capsys.readouterr()

    def test_validation_error_is_exit_one(self, tmp_path, capsys):
        predictions, _, _, paths = small_world(tmp_path)
        code = cli.run(
            [
                "trim",
                "--in",
                str(paths["preds"]),
                "--max-bytes",
                "10",
                "--out",
                str(tmp_path / "out.csv"),
                "--report",
                str(tmp_path / "report.csv"),
            ]
        )
        assert code == 1
        err = capsys.readouterr().err
        assert err.count("\n") == 1
        assert err.startswith("error\tValidationError\t")

    def test_missing_input_file_is_exit_one(self, tmp_path, capsys):
        code = cli.run(
            ["nms", "--in", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o.csv")]
        )
        assert code == 1
        assert "nope.csv" in capsys.readouterr().err


class TestSubcommands:
    def test_nms_writes_suppressed_file(self, tmp_path, capsys):
        predictions, _, _, paths = small_world(tmp_path)
        out = tmp_path / "nmsed.csv"
        assert cli.run(["nms", "--in", str(paths["preds"]), "--out", str(out)]) == 0
        assert fileio.parse_predictions(out.read_bytes()) == nms(predictions, 0.5)
        capsys.readouterr()

    def test_inputs_are_never_mutated(self, tmp_path, capsys):
        predictions, _, _, paths = small_world(tmp_path)
        before = paths["preds"].read_bytes()
        cli.run(["nms", "--in", str(paths["preds"]), "--out", str(tmp_path / "o.csv")])
        assert paths["preds"].read_bytes() == before
        capsys.readouterr()

    def test_ensemble_matches_library(self, tmp_path, capsys):
        predictions, _, _, paths = small_world(tmp_path)
        other = [
            Prediction("im1", "c1", 0.85, Box(1, 1, 11, 11)),
            Prediction("im2", "c1", 0.55, Box(5, 5, 25, 25)),
        ]
        second = write(tmp_path / "preds_b.csv", fileio.write_predictions(other))
        out = tmp_path / "fused.csv"
        code = cli.run(
            ["ensemble", str(paths["preds"]), str(second), "--out", str(out)]
        )
        assert code == 0
        assert fileio.parse_predictions(out.read_bytes()) == ensemble(
            [predictions, other], 0.5
        )
        capsys.readouterr()

    def test_drop_small_masks_and_trim(self, tmp_path, capsys):
        masked = [
            Prediction("im1", "c1", 0.9, Box(0, 0, 10, 10), fileio.parse_predictions(
                fileio.PREDICTIONS_HEADER + "\nim1,c1,0.9,0.0,0.0,10.0,10.0,50,40,0 2000\n"
            )[0].mask),
            Prediction("im1", "c1", 0.5, Box(0, 0, 10, 10)),
        ]
        source = write(tmp_path / "masked.csv", fileio.write_predictions(masked))
        out = tmp_path / "filtered.csv"
        assert cli.run(
            ["drop-small-masks", "--in", str(source), "--min-area", "1600", "--out", str(out)]
        ) == 0
        assert fileio.parse_predictions(out.read_bytes()) == drop_small_masks(masked, 1600)

        trimmed = tmp_path / "trimmed.csv"
        report = tmp_path / "trim_report.csv"
        budget = serialized_size(masked[:1])
        assert cli.run(
            [
                "trim",
                "--in",
                str(source),
                "--max-bytes",
                str(budget),
                "--out",
                str(trimmed),
                "--report",
                str(report),
            ]
        ) == 0
        survivors, lib_report = trim_to_budget(masked, budget)
        assert fileio.parse_predictions(trimmed.read_bytes()) == survivors
        report_text = report.read_text()
        assert f"summary,final_bytes,{lib_report.final_bytes}" in report_text
        assert f"summary,budget,{budget}" in report_text
        capsys.readouterr()

    def test_assign_then_loss(self, tmp_path, capsys):
        _, gts, table, paths = small_world(tmp_path)
        pool = RoiPool(
            {
                "im1": (
                    Roi(Box(0, 0, 10, 10)),
                    Roi(Box(100, 100, 120, 120)),
                    Roi(Box(20, 20, 40, 40)),
                )
            }
        )
        rois = write(tmp_path / "pool.csv", fileio.write_roi_pool(pool))
        categories = write(
            tmp_path / "categories.csv", fileio.write_category_list(["c1", "c2"])
        )
        labels_out = tmp_path / "labels.csv"
        code = cli.run(
            [
                "assign",
                "--image-id",
                "im1",
                "--rois",
                str(rois),
                "--ground-truth",
                str(paths["gt"]),
                "--verification",
                str(paths["ver"]),
                "--hierarchy",
                str(paths["hier"]),
                "--categories",
                str(categories),
                "--out",
                str(labels_out),
            ]
        )
        assert code == 0
        matrix = fileio.parse_label_matrix(labels_out.read_bytes())
        assert matrix.values.tolist() == [[1, -1], [-1, -1], [-1, 1]]

        logits = np.array([[2.0, -2.0], [-1.0, -1.0], [-3.0, 4.0]])
        logits_path = write(
            tmp_path / "logits.csv", fileio.write_logit_matrix(logits, ("c1", "c2"))
        )
        capsys.readouterr()
        code = cli.run(["loss", "--labels", str(labels_out), "--logits", str(logits_path)])
        assert code == 0
        out = capsys.readouterr().out.strip()
        prefix, value = out.split(",", 1)
        assert prefix == "loss"
        assert float(value) == pytest.approx(
            classification_loss(logits, matrix), abs=0.0
        )

    def test_sample_rois_deterministic(self, tmp_path, capsys):
        _, _, _, paths = small_world(tmp_path)
        rng = np.random.default_rng(80)
        images = {}
        for i in range(3):
            rois = tuple(
                Roi(Box(x, x, x + 10, x + 10))
                for x in rng.uniform(0, 100, size=12)
            )
            images[f"im{i + 1}"] = rois
        pool_path = write(tmp_path / "pool.csv", fileio.write_roi_pool(RoiPool(images)))
        out_a = tmp_path / "sample_a.csv"
        out_b = tmp_path / "sample_b.csv"
        argv = [
            "sample-rois",
            "--rois",
            str(pool_path),
            "--ground-truth",
            str(paths["gt"]),
            "--n-sample",
            "5",
            "--seed",
            "7",
        ]
        assert cli.run(argv + ["--out", str(out_a)]) == 0
        assert cli.run(argv + ["--out", str(out_b)]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()
        samples = fileio.parse_sampled_indices(out_a.read_bytes())
        assert set(samples) == set(images)
        for image_id, indices in samples.items():
            assert len(indices) == 5
            assert len(set(indices)) == 5
        capsys.readouterr()

    def test_partition_pool_outputs_cover_input(self, tmp_path, capsys):
        rng = np.random.default_rng(81)
        images = {
            "im1": tuple(Roi(Box(x, 0, x + 5, 5)) for x in rng.uniform(0, 50, size=7)),
            "im2": tuple(Roi(Box(x, 0, x + 5, 5)) for x in rng.uniform(0, 50, size=4)),
        }
        pool = RoiPool(images)
        pool_path = write(tmp_path / "pool.csv", fileio.write_roi_pool(pool))
        prefix = tmp_path / "part"
        assert cli.run(
            ["partition-pool", "--rois", str(pool_path), "--k", "3", "--out-prefix", str(prefix)]
        ) == 0
        partitions = [
            fileio.parse_roi_pool((tmp_path / f"part{i}.csv").read_bytes())
            for i in range(3)
        ]
        for image_id, rois in images.items():
            merged = [None] * len(rois)
            for index, part in enumerate(partitions):
                for offset, roi in enumerate(part.images.get(image_id, ())):
                    merged[index + offset * 3] = roi
            assert tuple(merged) == rois
        capsys.readouterr()

    def test_lr_prints_schedule(self, capsys):
        code = cli.run(["lr", "--batch-size", "240", "--at", "0", "--at", "0.5", "--at", "1"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        values = [float(line.split(",")[1]) for line in lines]
        assert values[0] == pytest.approx(0.3, abs=1e-15)
        assert values[1] == pytest.approx(0.15, abs=1e-12)
        assert values[2] == 0.0

    def test_split_experts_rank(self, tmp_path, capsys):
        from detpipe import CategoryStats

        stats = CategoryStats({f"cat{i:03d}": 10 + i for i in range(120)})
        stats_path = write(tmp_path / "stats.csv", fileio.write_category_stats(stats))
        out = tmp_path / "groups.csv"
        code = cli.run(
            [
                "split-experts",
                "--by",
                "rank",
                "--stats",
                str(stats_path),
                "--start-rank",
                "50",
                "--end-rank",
                "100",
                "--num-experts",
                "5",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        groups = fileio.parse_category_groups(out.read_bytes())
        assert [len(g) for g in groups] == [10] * 5
        capsys.readouterr()

    def test_split_experts_embedding(self, tmp_path, capsys):
        rng = np.random.default_rng(83)
        vectors = {f"c{i}": rng.normal(size=3).tolist() for i in range(9)}
        table = EmbeddingTable(vectors)
        emb_path = write(tmp_path / "emb.csv", fileio.write_embeddings(table))
        out = tmp_path / "groups.csv"
        code = cli.run(
            [
                "split-experts",
                "--by",
                "embedding",
                "--embeddings",
                str(emb_path),
                "--k",
                "3",
                "--seed",
                "5",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        groups = fileio.parse_category_groups(out.read_bytes())
        assert sorted(c for g in groups for c in g.categories) == sorted(vectors)
        capsys.readouterr()

    def test_split_experts_missing_mode_flags(self, tmp_path, capsys):
        code = cli.run(
            ["split-experts", "--by", "rank", "--out", str(tmp_path / "g.csv")]
        )
        assert code == 1
        capsys.readouterr()

    def test_filter_expert_and_restrict(self, tmp_path, capsys):
        predictions, gts, table, paths = small_world(tmp_path)
        groups_path = write(
            tmp_path / "groups.csv",
            fileio.GROUPS_HEADER.encode() + b"\n0,c1\n1,c2\n",
        )
        out_gt = tmp_path / "expert_gt.csv"
        out_ver = tmp_path / "expert_ver.csv"
        out_images = tmp_path / "expert_images.csv"
        code = cli.run(
            [
                "filter-expert",
                "--ground-truth",
                str(paths["gt"]),
                "--verification",
                str(paths["ver"]),
                "--group-file",
                str(groups_path),
                "--group-index",
                "0",
                "--out-ground-truth",
                str(out_gt),
                "--out-verification",
                str(out_ver),
                "--out-images",
                str(out_images),
            ]
        )
        assert code == 0
        kept = fileio.parse_ground_truth(out_gt.read_bytes())
        assert all(g.category_id == "c1" for g in kept)
        assert fileio.parse_image_list(out_images.read_bytes()) == ["im1", "im2"]

        out_preds = tmp_path / "restricted.csv"
        code = cli.run(
            [
                "restrict",
                "--in",
                str(paths["preds"]),
                "--group-file",
                str(groups_path),
                "--group-index",
                "1",
                "--out",
                str(out_preds),
            ]
        )
        assert code == 0
        restricted = fileio.parse_predictions(out_preds.read_bytes())
        assert [p.category_id for p in restricted] == ["c2"]
        capsys.readouterr()

    def test_restrict_needs_group_index_for_multi_group_file(self, tmp_path, capsys):
        _, _, _, paths = small_world(tmp_path)
        groups_path = write(
            tmp_path / "groups.csv",
            fileio.GROUPS_HEADER.encode() + b"\n0,c1\n1,c2\n",
        )
        code = cli.run(
            [
                "restrict",
                "--in",
                str(paths["preds"]),
                "--group-file",
                str(groups_path),
                "--out",
                str(tmp_path / "r.csv"),
            ]
        )
        assert code == 1
        capsys.readouterr()


class TestEvalCommand:
    def run_eval(self, directory: Path, out_report: Path, extra=()):
        return cli.run(
            [
                "eval",
                "--predictions",
                str(directory / "predictions.csv"),
                "--ground-truth",
                str(directory / "ground_truth.csv"),
                "--verification",
                str(directory / "verification.csv"),
                "--hierarchy",
                str(directory / "hierarchy.json"),
                "--out-report",
                str(out_report),
                *extra,
            ]
        )

    def test_perfect_fixture_prints_one(self, tmp_path, capsys):
        code = self.run_eval(FIXTURES / "perfect_eval", tmp_path / "report.csv")
        assert code == 0
        assert capsys.readouterr().out.strip() == "mAP,1.000000"

    def test_golden_fixture_prints_hand_value(self, tmp_path, capsys):
        code = self.run_eval(FIXTURES / "golden_eval", tmp_path / "report.csv")
        assert code == 0
        assert capsys.readouterr().out.strip() == "mAP,0.616667"
        report = (tmp_path / "report.csv").read_text()
        assert report.splitlines()[0] == fileio.EVAL_REPORT_HEADER
        assert "c1,0.7333333333333334,3,6,1" in report
        assert "c2,0.5,1,3,1" in report


class TestPipeline:
    def test_matches_manual_subcommands(self, tmp_path, capsys):
        fixture = FIXTURES / "pipeline"
        run_dir = tmp_path / "run"
        code = cli.run(
            ["pipeline", "--config", str(fixture / "config.ini"), "--run-dir", str(run_dir)]
        )
        assert code == 0

        manual = tmp_path / "manual"
        manual.mkdir()
        config_text = (fixture / "config.ini").read_text()
        budget = next(
            line.split("=")[1].strip()
            for line in config_text.splitlines()
            if line.startswith("max-bytes")
        )
        assert cli.run(
            [
                "ensemble",
                str(fixture / "preds_a.csv"),
                str(fixture / "preds_b.csv"),
                "--iou-threshold",
                "0.5",
                "--out",
                str(manual / "ensembled.csv"),
            ]
        ) == 0
        assert cli.run(
            [
                "drop-small-masks",
                "--in",
                str(manual / "ensembled.csv"),
                "--min-area",
                "1600",
                "--out",
                str(manual / "filtered.csv"),
            ]
        ) == 0
        assert cli.run(
            [
                "trim",
                "--in",
                str(manual / "filtered.csv"),
                "--max-bytes",
                budget,
                "--out",
                str(manual / "trimmed.csv"),
                "--report",
                str(manual / "trim_report.csv"),
            ]
        ) == 0
        assert cli.run(
            [
                "eval",
                "--predictions",
                str(manual / "trimmed.csv"),
                "--ground-truth",
                str(fixture / "ground_truth.csv"),
                "--verification",
                str(fixture / "verification.csv"),
                "--hierarchy",
                str(fixture / "hierarchy.json"),
                "--mode",
                "box",
                "--iou-threshold",
                "0.5",
                "--out-report",
                str(manual / "eval_report.csv"),
            ]
        ) == 0
        for name in (
            "ensembled.csv",
            "filtered.csv",
            "trimmed.csv",
            "trim_report.csv",
            "eval_report.csv",
        ):
            assert (run_dir / name).read_bytes() == (manual / name).read_bytes(), name
        capsys.readouterr()

    def test_manifest_records_stages(self, tmp_path, capsys):
        fixture = FIXTURES / "pipeline"
        run_dir = tmp_path / "run"
        assert cli.run(
            ["pipeline", "--config", str(fixture / "config.ini"), "--run-dir", str(run_dir)]
        ) == 0
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert [s["stage"] for s in manifest["stages"]] == [
            "ensemble",
            "drop-small-masks",
            "trim",
            "eval",
        ]
        assert all(s["status"] == "ok" for s in manifest["stages"])
        for stage in manifest["stages"]:
            for output in stage["outputs"]:
                assert Path(output).exists()
        capsys.readouterr()

    def test_missing_input_fails_before_any_stage(self, tmp_path, capsys):
        config = tmp_path / "config.ini"
        config.write_text(
            "[nms]\nin = does_not_exist.csv\nout = out.csv\n"
        )
        run_dir = tmp_path / "run"
        code = cli.run(["pipeline", "--config", str(config), "--run-dir", str(run_dir)])
        assert code == 1
        assert not (run_dir / "out.csv").exists()
        assert not (run_dir / "manifest.json").exists()
        capsys.readouterr()

    def test_unknown_stage_rejected(self, tmp_path, capsys):
        config = tmp_path / "config.ini"
        config.write_text("[launch-rockets]\nout = x\n")
        assert cli.run(
            ["pipeline", "--config", str(config), "--run-dir", str(tmp_path / "r")]
        ) == 1
        capsys.readouterr()

    def test_failing_stage_recorded_in_manifest(self, tmp_path, capsys):
        fixture = FIXTURES / "pipeline"
        config = tmp_path / "config.ini"
        config.write_text(
            "[ensemble]\n"
            f"inputs = {fixture / 'preds_a.csv'} {fixture / 'preds_b.csv'}\n"
            "out = step1.csv\n"
            "\n"
            "[trim]\n"
            "in = step1.csv\n"
            "max-bytes = 1\n"
            "out = step2.csv\n"
            "report = report.csv\n"
        )
        run_dir = tmp_path / "run"
        code = cli.run(["pipeline", "--config", str(config), "--run-dir", str(run_dir)])
        assert code == 1
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["stages"][0]["status"] == "ok"
        assert manifest["stages"][1]["status"] == "failed"
        assert "budget" in manifest["stages"][1]["error"]
        capsys.readouterr()

    def test_manifest_is_sufficient_to_rerun(self, tmp_path, capsys):
        fixture = FIXTURES / "pipeline"
        run_dir = tmp_path / "run"
        assert cli.run(
            ["pipeline", "--config", str(fixture / "config.ini"), "--run-dir", str(run_dir)]
        ) == 0
        manifest = json.loads((run_dir / "manifest.json").read_text())
        outputs = {
            Path(path): Path(path).read_bytes()
            for stage in manifest["stages"]
            for path in stage["outputs"]
        }
        for stage in manifest["stages"]:
            assert cli.run(stage["argv"]) == 0
        for path, before in outputs.items():
            assert path.read_bytes() == before
        capsys.readouterr()

    def test_repeated_stage_labels(self, tmp_path, capsys):
        fixture = FIXTURES / "pipeline"
        config = tmp_path / "config.ini"
        config.write_text(
            "[nms.first]\n"
            f"in = {fixture / 'preds_a.csv'}\n"
            "out = a.csv\n"
            "\n"
            "[nms.second]\n"
            f"in = {fixture / 'preds_b.csv'}\n"
            "out = b.csv\n"
        )
        run_dir = tmp_path / "run"
        assert cli.run(["pipeline", "--config", str(config), "--run-dir", str(run_dir)]) == 0
        assert (run_dir / "a.csv").exists()
        assert (run_dir / "b.csv").exists()
        capsys.readouterr()
