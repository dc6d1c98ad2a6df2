import json
from dataclasses import replace

import numpy as np
import pytest

from langdepth.diffusion.schedule import make_schedule
from langdepth.metrics.depth import read_metrics_csv
from langdepth.pipeline.evaluation import (
    EvaluationConfig,
    evaluate_run,
    ordering_correct,
)
from langdepth.pipeline.inference import BLANK, InferenceConfig
from langdepth.utils.errors import ConfigurationError, DataError


@pytest.fixture
def schedule():
    return make_schedule(20)


@pytest.fixture
def oracle(small_samples, schedule, caption_oracle):
    return caption_oracle(small_samples, schedule)


def test_oracle_scores_perfectly(small_samples, schedule, oracle):
    report = evaluate_run(
        small_samples, oracle, schedule, InferenceConfig(steps=3)
    )
    assert report.images == len(small_samples)
    assert report.failures == []
    assert report.mean_delta1 == 100.0
    assert report.mean_absrel < 1e-6
    assert len(report.ordering) == 4
    assert report.ordering_accuracy == 100.0
    assert [r.image_id for r in report.record.rows] == sorted(
        s.sample_id for s in small_samples
    )


def test_worker_count_does_not_change_rows(small_samples, schedule, oracle):
    inference = InferenceConfig(steps=2)
    single = evaluate_run(small_samples, oracle, schedule, inference)
    pooled = evaluate_run(
        small_samples, oracle, schedule, inference, workers=3
    )
    assert single.record.rows == pooled.record.rows
    assert single.ordering == pooled.ordering


def test_failures_are_counted_not_aggregated(
    small_samples, schedule, oracle
):
    broken = replace(
        small_samples[0], mask=np.zeros_like(small_samples[0].mask)
    )
    samples = [broken] + list(small_samples[1:])
    report = evaluate_run(samples, oracle, schedule, InferenceConfig(steps=2))
    assert report.images == len(samples) - 1
    assert len(report.failures) == 1
    failure = report.failures[0]
    assert failure.image_id == broken.sample_id
    assert failure.exit_code == 3
    assert broken.sample_id not in [r.image_id for r in report.record.rows]


def test_every_image_failing_leaves_no_record(small_samples, schedule, oracle):
    broken = [
        replace(s, mask=np.zeros_like(s.mask)) for s in small_samples[:2]
    ]
    report = evaluate_run(broken, oracle, schedule, InferenceConfig(steps=1))
    assert report.record is None
    assert report.images == 0
    assert report.mean_delta1 is None
    assert report.to_json()["failed"] == 2


def test_outputs_are_written(small_samples, schedule, oracle, tmp_path):
    report = evaluate_run(
        small_samples,
        oracle,
        schedule,
        InferenceConfig(steps=2, caption_mode=BLANK),
        output_dir=tmp_path / "run",
        visualize_dir=tmp_path / "pictures",
        caption_dropout=0.1,
        config={"inference": {"steps": 2}},
    )
    rows = read_metrics_csv(tmp_path / "run" / "metrics.csv")
    assert len(rows) == len(small_samples) + 1
    assert rows[-1]["image_id"] == "AGGREGATE"

    with open(tmp_path / "run" / "report.json") as f:
        document = json.load(f)
    assert document["caption_mode"] == "blank"
    assert document["caption"] == ""
    assert document["caption_dropout"] == 0.1
    assert document["images"] == report.images
    assert document["ordering_samples"] == 4
    assert document["config"] == {"inference": {"steps": 2}}
    assert "wall_time_seconds" in document
    assert "version" in document

    sample_id = small_samples[0].sample_id
    for suffix in ("gt.pgm", "gt.ppm", "pred.pgm", "pred.ppm"):
        assert (tmp_path / "pictures" / f"{sample_id}.{suffix}").exists()


def test_dataset_mode_does_not_echo_a_caption(small_samples, schedule, oracle):
    report = evaluate_run(
        small_samples[:1], oracle, schedule, InferenceConfig(steps=1)
    )
    assert report.caption is None
    assert report.ordering_accuracy is None


def test_invalid_runs(small_samples, schedule, oracle):
    with pytest.raises(DataError):
        evaluate_run([], oracle, schedule, InferenceConfig())
    with pytest.raises(ConfigurationError):
        evaluate_run(
            small_samples, oracle, schedule, InferenceConfig(), workers=0
        )
    with pytest.raises(ValueError):
        evaluate_run(
            small_samples, oracle, schedule, InferenceConfig(), method="L3"
        )


def test_ordering_correct(small_samples):
    near, far = small_samples[3], small_samples[4]
    assert ordering_correct(near.depth.astype(np.float64), near)
    assert ordering_correct(far.depth.astype(np.float64), far)
    assert not ordering_correct(far.depth.astype(np.float64), near)
    with pytest.raises(DataError):
        ordering_correct(small_samples[0].depth, small_samples[0])


def test_evaluation_config_rejects_unknown_method():
    assert EvaluationConfig().method == "L1"
    with pytest.raises(ConfigurationError):
        EvaluationConfig(method="L3")
