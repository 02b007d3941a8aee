# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from conicpipe.core.constants import RUN_MANIFEST_NAME
from conicpipe.core.errors import ImageFormatError
from conicpipe.dataset.manifest import save_manifest
from conicpipe.dataset.png_io import write_rgb
from conicpipe.main import run
from conicpipe.tests.test_utilities import (
    LabelMapFactory,
    block_upscale,
    synthetic_manifest,
    synthetic_stain_tile,
    write_label_dir,
    write_sample_tree,
)


def files_under(root: Path) -> dict[str, bytes]:
    """Relative path -> bytes for every file except the run manifest"""
    return {
        str(path.relative_to(root)): path.read_bytes()
        for path in sorted(root.rglob("*"))
        if path.is_file() and path.name != RUN_MANIFEST_NAME
    }


class TestExitCodes:
    """run() maps outcomes to 0 / 1 / 2"""


    def test_count_on_empty_maps(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        empty = np.zeros((8, 8), dtype=np.int32)
        write_label_dir(tmp_path, {"t": (empty, empty)})

        code = run(["count", "--instances", str(tmp_path / "t_instances.png"),
                    "--classes", str(tmp_path / "t_classes.png")])

        assert code == 0
        assert capsys.readouterr().out.strip() == "count (0, 0, 0, 0, 0, 0) total=0"
        manifest = json.loads((tmp_path / RUN_MANIFEST_NAME).read_text(encoding="utf-8"))
        assert manifest["command"] == "count"
        assert manifest["seed"] == 0

    def test_unknown_subcommand(self) -> None:
        assert run(["segment"]) == 2

    def test_bad_ratios(self, tmp_path: Path) -> None:
        assert run(["split", "--manifest", str(tmp_path / "m.json"), "--out-prefix", "p", "--ratios", "1:2"]) == 2

    def test_missing_input_file(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        code = run(["count", "--instances", str(tmp_path / "absent.png"), "--classes", str(tmp_path / "absent.png")])

        assert code == 1
        assert "conicpipe count:" in capsys.readouterr().err
        assert not (tmp_path / RUN_MANIFEST_NAME).exists()

    def test_fail_fast_propagates(self, tmp_path: Path) -> None:
        with pytest.raises(ImageFormatError):
            run(["count", "--instances", str(tmp_path / "a.png"), "--classes", str(tmp_path / "a.png"), "--fail-fast"])

    def test_output_dir_receives_run_manifest(self, tmp_path: Path) -> None:
        empty = np.zeros((4, 4), dtype=np.int32)
        write_label_dir(tmp_path / "labels", {"t": (empty, empty)})

        code = run([
            "--output-dir", str(tmp_path / "runs"),
            "count",
            "--instances", str(tmp_path / "labels" / "t_instances.png"),
            "--classes", str(tmp_path / "labels" / "t_classes.png"),
            "--seed", "11",
        ])

        assert code == 0
        manifest = json.loads((tmp_path / "runs" / RUN_MANIFEST_NAME).read_text(encoding="utf-8"))
        assert manifest["seed"] == 11


class TestThreadCountInvariance:
    """Outputs are byte-identical whatever the worker count"""


    def test_augment(self, tmp_path: Path, label_factory: LabelMapFactory) -> None:
        source = write_sample_tree(tmp_path / "src", {f"s{i}": label_factory.sample(size=16) for i in range(6)})
        save_manifest(source, tmp_path / "src" / "manifest.json")

        for threads in ("1", "4"):
            code = run([
                "augment",
                "--manifest", str(tmp_path / "src" / "manifest.json"),
                "--out", str(tmp_path / f"aug{threads}"),
                "--copies", "2",
                "--p-resize", "0.5",
                "--sizes", "12,20",
                "--seed", "21",
                "--threads", threads,
            ])
            assert code == 0

        first = files_under(tmp_path / "aug1")
        assert first
        assert first == files_under(tmp_path / "aug4")

    def test_evaluate_and_ensemble(self, tmp_path: Path, label_factory: LabelMapFactory) -> None:
        truth = {}
        prediction = {}
        for i in range(6):
            instances = label_factory.instance_map(size=16, max_instances=10)
            classes = label_factory.class_map_for(instances)
            truth[f"tile_{i}"] = (instances, classes)
            prediction[f"tile_{i}"] = (label_factory.perturbed(instances), classes)
        write_label_dir(tmp_path / "gt", truth)
        write_label_dir(tmp_path / "pred16", prediction)
        upscaled = {t: (block_upscale(i, 2), block_upscale(c, 2)) for t, (i, c) in truth.items()}
        write_label_dir(tmp_path / "pred32", upscaled)

        outputs: dict[str, dict[str, bytes]] = {}
        for threads in ("1", "4"):
            run_dir = tmp_path / f"run{threads}"
            assert run([
                "ensemble",
                "--pred", f"16={tmp_path / 'pred16'}",
                "--pred", f"32={tmp_path / 'pred32'}",
                "--base", "16",
                "--min-votes", "1",
                "--out", str(run_dir / "fused"),
                "--provenance", str(run_dir / "provenance.json"),
                "--threads", threads,
            ]) == 0
            assert run([
                "evaluate",
                "--pred", str(run_dir / "fused"),
                "--gt", str(tmp_path / "gt"),
                "--report", str(run_dir / "metrics.json"),
                "--threads", threads,
            ]) == 0
            outputs[threads] = files_under(run_dir)

        assert outputs["1"] == outputs["4"]
        assert "metrics.json" in outputs["1"]

    @staticmethod
    def outputs_per_thread_count(argv: list[str], out: Path) -> list[dict[str, bytes]]:
        """Everything under out, run manifest included, after a run with 1 and with 4 workers"""
        snapshots = []
        for threads in ("1", "4"):
            shutil.rmtree(out, ignore_errors=True)
            assert run([*argv, "--threads", threads]) == 0
            snapshots.append(
                {str(path.relative_to(out)): path.read_bytes() for path in sorted(out.rglob("*")) if path.is_file()}
            )
        return snapshots

    def test_normalize(self, tmp_path: Path) -> None:
        (tmp_path / "tiles").mkdir()
        for seed in range(4):
            tile, _ = synthetic_stain_tile(np.random.default_rng(seed), size=32)
            write_rgb(tmp_path / "tiles" / f"t{seed}.png", tile)
        write_rgb(tmp_path / "ref.png", synthetic_stain_tile(np.random.default_rng(99), size=32)[0])
        out = tmp_path / "normalized"

        first, second = self.outputs_per_thread_count([
            "normalize",
            "--input", str(tmp_path / "tiles"),
            "--reference-image", str(tmp_path / "ref.png"),
            "--out", str(out),
            "--save-reference", str(out / "ref.json"),
        ], out)

        assert len(first) == 7  # four tiles, reference model, report, run manifest
        assert first == second

    def test_split(self, tmp_path: Path, rng: np.random.Generator) -> None:
        save_manifest(synthetic_manifest(rng, 60, root=tmp_path / "data"), tmp_path / "all.json")
        out = tmp_path / "splits"

        first, second = self.outputs_per_thread_count([
            "split",
            "--manifest", str(tmp_path / "all.json"),
            "--ratios", "4:1:0.1",
            "--seed", "13",
            "--out-prefix", str(out / "conic"),
        ], out)

        assert RUN_MANIFEST_NAME in first
        assert first == second

    def test_count(self, tmp_path: Path, label_factory: LabelMapFactory) -> None:
        instances = label_factory.instance_map(size=16)
        write_label_dir(tmp_path / "labels", {"t": (instances, label_factory.class_map_for(instances))})
        out = tmp_path / "counts"

        first, second = self.outputs_per_thread_count([
            "count",
            "--instances", str(tmp_path / "labels" / "t_instances.png"),
            "--classes", str(tmp_path / "labels" / "t_classes.png"),
            "--report", str(out / "count.json"),
        ], out)

        assert set(first) == {"count.json", RUN_MANIFEST_NAME}
        assert first == second
