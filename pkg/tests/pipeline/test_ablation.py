import csv

import pytest

from langdepth.diffusion.schedule import make_schedule
from langdepth.pipeline.ablation import ABLATION_HEADER, ablate, ablation_modes
from langdepth.pipeline.inference import InferenceConfig
from langdepth.scenes.captions import prompt_template


@pytest.fixture
def schedule():
    return make_schedule(20)


def test_ablation_modes():
    assert ablation_modes() == [
        "dataset",
        "blank",
        "template:an-image",
        "template:template-a",
        "template:template-b",
        "template:template-c",
    ]
    assert ablation_modes(["an-image"]) == [
        "dataset",
        "blank",
        "template:an-image",
    ]


def test_ablation_rows(small_samples, schedule, caption_oracle, tmp_path):
    oracle = caption_oracle(small_samples, schedule)
    rows = ablate(
        small_samples,
        oracle,
        schedule,
        InferenceConfig(steps=2),
        tmp_path,
        caption_dropout=0.1,
    )
    assert [row.mode for row in rows] == ablation_modes()
    by_mode = {row.mode: row.report for row in rows}

    assert by_mode["dataset"].mean_delta1 == 100.0
    assert by_mode["dataset"].ordering_accuracy == 100.0

    # Unknown captions get the zero prediction, so with paired noise the
    # blank and template rows agree exactly.
    blank = by_mode["blank"].record.rows
    for name in ("an-image", "template-a", "template-b", "template-c"):
        report = by_mode[f"template:{name}"]
        assert report.caption == prompt_template(name)
        assert report.record.rows == blank

    with open(tmp_path / "ablation.csv", newline="") as f:
        table = list(csv.reader(f))
    assert tuple(table[0]) == ABLATION_HEADER
    assert [line[0] for line in table[1:]] == ablation_modes()
    assert all(line[-1] == "0.1" for line in table[1:])
    assert table[1][1] == ""
    assert (tmp_path / "dataset" / "report.json").exists()
    assert (tmp_path / "template-an-image" / "metrics.csv").exists()
