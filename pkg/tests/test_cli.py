import csv
import io
import json
from unittest.mock import patch

import pytest

from langdepth.cli import build_parser, cli_main, split_overrides
from langdepth.pipeline import selftest
from langdepth.scenes.dataset import read_dataset
from langdepth.scenes.raster import read_pdr, write_ppm


@pytest.fixture
def dataset(config_file, tmp_path):
    out = tmp_path / "data"
    code = cli_main(["gen", "--config", str(config_file), "--out", str(out)])
    assert code == 0
    return out


@pytest.fixture
def trained(config_file, dataset, tmp_path):
    out = tmp_path / "run"
    code = cli_main(
        [
            "train",
            "--config",
            str(config_file),
            "--data",
            str(dataset),
            "--out",
            str(out),
        ]
    )
    assert code == 0
    return out


def test_usage_errors_exit_2(tmp_path):
    assert cli_main([]) == 2
    assert cli_main(["gen", "--out", str(tmp_path), "--bogus"]) == 2
    assert cli_main(["gen", "--out", str(tmp_path), "stray"]) == 2
    assert cli_main(["gen", "--out", str(tmp_path), "--dataset.seed"]) == 2


def test_split_overrides():
    parser = build_parser()
    pairs = split_overrides(
        parser, ["--train.lr0", "1e-4", "--dataset.seed=7"]
    )
    assert pairs == [("train.lr0", "1e-4"), ("dataset.seed", "7")]


def test_schedule_dump(capsys):
    code = cli_main(
        [
            "schedule",
            "dump",
            "--T",
            "2",
            "--kind",
            "linear",
            "--beta-start",
            "0.1",
            "--beta-end",
            "0.2",
        ]
    )
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [int(r["t"]) for r in rows] == [1, 2]
    assert float(rows[0]["alpha_bar"]) == pytest.approx(0.9, abs=1e-15)
    assert float(rows[1]["alpha_bar"]) == pytest.approx(0.72, abs=1e-15)


def test_schedule_dump_uses_configured_schedule(config_file, capsys):
    code = cli_main(["schedule", "dump", "--config", str(config_file)])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,beta,alpha,alpha_bar"
    assert len(lines) == 21


def test_gen_writes_dataset(dataset):
    manifest, reader = read_dataset(dataset)
    assert len(reader) == 3 + 2 * 2
    assert [e.id for e in manifest.entries][:2] == [
        "scene-000000",
        "scene-000001",
    ]


def test_gen_applies_overrides(config_file, tmp_path):
    out = tmp_path / "small"
    code = cli_main(
        [
            "gen",
            "--config",
            str(config_file),
            "--out",
            str(out),
            "--dataset.scenes",
            "1",
            "--dataset.pairs=0",
        ]
    )
    assert code == 0
    _, reader = read_dataset(out)
    assert len(reader) == 1


def test_configuration_errors_exit_2(config_file, tmp_path):
    out = str(tmp_path / "x")
    assert cli_main(["gen", "--out", out, "--train.nope", "1"]) == 2
    missing = str(tmp_path / "no.yml")
    assert cli_main(["gen", "--config", missing, "--out", out]) == 2
    assert (
        cli_main(["gen", "--out", out, "--dataset.caption_detail", "loud"])
        == 2
    )
    assert cli_main(["eval", "--data", out, "--out", out]) == 2


def test_missing_dataset_exits_3(config_file, tmp_path):
    code = cli_main(
        [
            "train",
            "--config",
            str(config_file),
            "--data",
            str(tmp_path / "absent"),
            "--out",
            str(tmp_path / "run"),
        ]
    )
    assert code == 3


def test_train_then_evaluate(config_file, dataset, trained, tmp_path):
    assert (trained / "final.pdck").exists()
    assert (trained / "checkpoint-000001.pdck").exists()
    assert (trained / "train_log.csv").exists()

    report_dir = tmp_path / "report"
    code = cli_main(
        [
            "eval",
            "--config",
            str(config_file),
            "--checkpoint",
            str(trained / "final.pdck"),
            "--data",
            str(dataset),
            "--out",
            str(report_dir),
            "--inference.steps",
            "2",
        ]
    )
    assert code == 0
    with open(report_dir / "report.json") as f:
        report = json.load(f)
    assert report["images"] + report["failed"] == 7
    assert report["ordering_samples"] + report["failed"] >= 4
    assert report["config"]["inference"]["steps"] == 2
    assert report["caption_mode"] == "dataset"


def test_infer_writes_depth_files(
    config_file, trained, small_samples, tmp_path
):
    image = tmp_path / "input.ppm"
    write_ppm(small_samples[0].image, image)
    prefix = tmp_path / "out" / "pred"
    code = cli_main(
        [
            "infer",
            "--config",
            str(config_file),
            "--checkpoint",
            str(trained / "final.pdck"),
            "--image",
            str(image),
            "--caption",
            "a box on the left, near",
            "--out",
            str(prefix),
        ]
    )
    assert code == 0
    assert read_pdr(f"{prefix}.pdr").shape == (16, 16)
    for suffix in (".pgm", ".ppm"):
        assert (tmp_path / "out" / f"pred{suffix}").exists()


def test_infer_needs_a_caption_source(
    config_file, trained, small_samples, tmp_path
):
    image = tmp_path / "input.ppm"
    write_ppm(small_samples[0].image, image)
    command = [
        "infer",
        "--config",
        str(config_file),
        "--checkpoint",
        str(trained / "final.pdck"),
        "--image",
        str(image),
        "--out",
        str(tmp_path / "pred"),
    ]
    assert cli_main(command) == 2
    assert not (tmp_path / "pred.pdr").exists()
    assert cli_main(command + ["--inference.caption_mode", "blank"]) == 0
    assert (tmp_path / "pred.pdr").exists()


def test_ablate_writes_table(config_file, dataset, trained, tmp_path):
    out = tmp_path / "ablation"
    code = cli_main(
        [
            "ablate",
            "--config",
            str(config_file),
            "--checkpoint",
            str(trained / "final.pdck"),
            "--data",
            str(dataset),
            "--out",
            str(out),
            "--templates",
            "an-image",
            "--inference.steps",
            "1",
        ]
    )
    assert code == 0
    with open(out / "ablation.csv", newline="") as f:
        modes = [row["mode"] for row in csv.DictReader(f)]
    assert modes == ["dataset", "blank", "template:an-image"]


def test_converge_writes_curve(config_file, dataset, tmp_path):
    out = tmp_path / "curve"
    code = cli_main(
        [
            "converge",
            "--config",
            str(config_file),
            "--data",
            str(dataset),
            "--eval-data",
            str(dataset),
            "--out",
            str(out),
            "--interval",
            "1",
            "--inference.steps",
            "1",
        ]
    )
    assert code == 0
    with open(out / "convergence.csv", newline="") as f:
        iterations = [int(row["iteration"]) for row in csv.DictReader(f)]
    assert iterations == [1, 2]


def test_selftest_exit_codes(capsys):
    passing = {"fast": lambda: (True, "ok")}
    with patch.dict(selftest.SUITES, passing, clear=True):
        assert cli_main(["selftest"]) == 0
    assert "fast" in capsys.readouterr().out

    failing = {"fast": lambda: (True, "ok"), "slow": lambda: (False, "no")}
    with patch.dict(selftest.SUITES, failing, clear=True):
        assert cli_main(["selftest"]) == 1
        assert cli_main(["selftest", "--suite", "fast"]) == 0
