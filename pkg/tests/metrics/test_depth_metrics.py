from itertools import combinations

import numpy as np
import pytest

from langdepth.metrics.depth import (
    AlignMethod,
    DepthMap,
    ImageMetrics,
    MetricsRecord,
    Space,
    absrel,
    aggregate,
    align_affine,
    delta1,
    denormalize,
    evaluate_pair,
    normalize_depth,
    percentile,
    read_metrics_csv,
    write_metrics_csv,
)
from langdepth.utils.errors import (
    ConfigurationError,
    DataError,
    DegenerateInputError,
    ShapeError,
)

EVENS = np.arange(0, 101, 2, dtype=np.float64).reshape(3, 17)


def test_percentile_positions():
    assert percentile(EVENS, 0.02) == pytest.approx(2.0, abs=1e-12)
    assert percentile(EVENS, 0.98) == pytest.approx(98.0, abs=1e-12)
    assert percentile(EVENS, 0.0) == 0.0
    assert percentile(EVENS, 1.0) == 100.0
    assert percentile(np.array([1.0, 2.0]), 0.5) == 1.5


def test_percentile_respects_mask():
    values = np.array([[1.0, 100.0], [3.0, 5.0]])
    mask = np.array([[1, 0], [1, 1]])
    assert percentile(values, 1.0, mask) == 5.0


def test_percentile_errors():
    with pytest.raises(DataError):
        percentile(np.ones((2, 2)), 0.5, np.zeros((2, 2)))
    with pytest.raises(ConfigurationError):
        percentile(np.ones(3), 1.5)


def test_normalization_examples():
    normalized = normalize_depth(DepthMap.from_arrays(EVENS))
    values = normalized.depth.values.ravel()
    assert normalized.low == pytest.approx(2.0, abs=1e-12)
    assert normalized.high == pytest.approx(98.0, abs=1e-12)
    assert values[25] == pytest.approx(0.0, abs=1e-12)
    assert values[1] == pytest.approx(-1.0, abs=1e-12)
    assert values[49] == pytest.approx(1.0, abs=1e-12)
    assert values[0] == pytest.approx(-1.0416666666666667)
    assert normalized.depth.space is Space.NORMALIZED


def test_normalization_clamps():
    values = np.concatenate([np.linspace(1.0, 2.0, 98), [50.0, 90.0]])
    normalized = normalize_depth(DepthMap.from_arrays(values.reshape(10, 10)))
    assert normalized.depth.values.max() == 1.05


def test_denormalize_inverts():
    depth = DepthMap.from_arrays(EVENS + 1.0)
    normalized = normalize_depth(depth)
    restored = denormalize(normalized.depth, normalized.low, normalized.high)
    assert np.allclose(restored.values, depth.values, rtol=1e-12)
    zero = DepthMap(np.zeros((1, 1)), np.ones((1, 1)), Space.NORMALIZED)
    assert denormalize(zero, 3.0, 99.0).values[0, 0] == 51.0


def test_constant_depth_is_degenerate():
    with pytest.raises(DegenerateInputError):
        normalize_depth(DepthMap.from_arrays(np.full((4, 4), 2.5)))


def test_depth_map_validation():
    with pytest.raises(ShapeError):
        DepthMap.from_arrays(np.ones((2, 2)), np.ones((3, 3)))
    with pytest.raises(DataError):
        DepthMap.from_arrays(np.array([[1.0, -1.0]]))
    # masked-out pixels are not checked
    DepthMap.from_arrays(np.array([[1.0, np.nan]]), np.array([[1, 0]]))


@pytest.mark.parametrize("method", ["L1", "L2"])
def test_exact_linear_alignment(method):
    fit = align_affine(
        np.array([5.0, 7.0, 9.0]), np.array([1.0, 2.0, 3.0]), method=method
    )
    assert fit.alpha == pytest.approx(0.5)
    assert fit.beta == pytest.approx(-1.5)
    assert fit.objective == pytest.approx(0.0, abs=1e-9)
    assert fit.method is AlignMethod(method)


def test_l2_residual_is_orthogonal():
    rng = np.random.default_rng(3)
    pred = rng.uniform(0, 1, 100)
    gt = 2.0 * pred + 1.0 + rng.normal(0, 0.1, 100)
    fit = align_affine(pred, gt, method="L2")
    residual = fit.apply(pred) - gt
    assert abs(residual @ pred) < 1e-9
    assert abs(residual.sum()) < 1e-9


def _best_vertex_objective(pred, gt):
    best = np.inf
    for i, j in combinations(range(pred.size), 2):
        alpha = (gt[i] - gt[j]) / (pred[i] - pred[j])
        beta = gt[i] - alpha * pred[i]
        best = min(best, np.mean(np.abs(alpha * pred + beta - gt)))
    return best


@pytest.mark.parametrize("seed", range(5))
def test_l1_alignment_reaches_the_optimum(seed):
    rng = np.random.default_rng(seed)
    pred = rng.uniform(0, 1, 30)
    gt = 3.0 * pred - 0.5 + rng.laplace(0, 0.2, 30)
    gt[:3] += 5.0  # outliers
    fit = align_affine(pred, gt, method="L1")
    assert fit.objective <= _best_vertex_objective(pred, gt) + 1e-6
    assert all(b <= a for a, b in zip(fit.history, fit.history[1:]))


def test_l1_ignores_outliers_more_than_l2():
    pred = np.linspace(1.0, 2.0, 20)
    gt = 2.0 * pred
    gt[0] = 100.0
    l1 = align_affine(pred, gt, method="L1")
    l2 = align_affine(pred, gt, method="L2")
    assert l1.alpha == pytest.approx(2.0, abs=1e-6)
    assert abs(l2.alpha - 2.0) > 0.5


def test_alignment_errors():
    with pytest.raises(DegenerateInputError):
        align_affine(np.ones(4), np.arange(4.0))
    with pytest.raises(DataError):
        align_affine(np.array([1.0]), np.array([2.0]))
    with pytest.raises(ShapeError):
        align_affine(np.ones(3), np.ones(4))
    with pytest.raises(ConfigurationError):
        align_affine(np.arange(3.0), np.arange(3.0), method="L3")


def test_delta1_and_absrel_examples():
    gt = np.array([1.0, 2.0, 4.0])
    pred = np.array([1.0, 2.0, 5.0])
    assert delta1(pred, gt) == pytest.approx(200.0 / 3.0)
    assert absrel(pred, gt) == pytest.approx(0.25 / 3.0)
    assert delta1(gt, gt) == 100.0
    assert absrel(gt, gt) == 0.0
    assert delta1(1.25 * gt, gt) == 0.0
    assert absrel(2.0 * gt, gt) == 1.0


def test_non_positive_predictions_fail_delta1():
    gt = np.array([1.0, 2.0])
    assert delta1(np.array([-1.0, 2.0]), gt) == 50.0


def test_empty_masks():
    with pytest.raises(DataError):
        delta1(np.ones(2), np.ones(2), np.zeros(2))
    with pytest.raises(DataError):
        absrel(np.ones(2), np.ones(2), np.zeros(2))


def test_affine_invariance():
    rng = np.random.default_rng(0)
    gt = rng.uniform(1.0, 9.0, (8, 8))
    pred = rng.uniform(0.0, 1.0, (8, 8))
    base = evaluate_pair(pred, gt)
    moved = evaluate_pair(3.0 * pred + 7.0, gt)
    assert moved.delta1 == pytest.approx(base.delta1, abs=1e-9)
    assert moved.absrel == pytest.approx(base.absrel, abs=1e-9)


def test_affine_copy_scores_perfectly():
    gt = np.random.default_rng(1).uniform(1.0, 9.0, (6, 6))
    row = evaluate_pair(-0.25 * gt + 4.0, gt, image_id="x")
    assert row.delta1 == 100.0
    assert row.absrel == pytest.approx(0.0, abs=1e-9)
    assert row.alpha == pytest.approx(-4.0)
    assert row.valid_px == 36


def test_ambiguity_pair_ground_truths_disagree(small_samples):
    a, b = small_samples[3], small_samples[4]
    row = evaluate_pair(a.depth, b.depth, method="L2")
    assert row.delta1 < 100.0


def _row(image_id, d1, rel):
    return ImageMetrics(image_id, 1.0, 0.0, AlignMethod.L1, d1, rel, 10)


def test_aggregate_is_unweighted_mean():
    record = aggregate([_row("a", 100.0, 0.0), _row("b", 50.0, 0.5)])
    assert record.mean_delta1 == 75.0
    assert record.mean_absrel == 0.25
    assert record.valid_px == 20
    with pytest.raises(DataError):
        MetricsRecord.from_rows([])


def test_metrics_csv(tmp_path):
    record = aggregate([_row("a", 100.0, 0.0), _row("b", 50.0, 0.5)])
    path = write_metrics_csv(record, tmp_path / "metrics.csv")
    rows = read_metrics_csv(path)
    assert list(rows[0]) == [
        "image_id", "alpha", "beta", "method", "delta1_pct", "absrel",
        "valid_px",
    ]
    assert [r["image_id"] for r in rows] == ["a", "b", "AGGREGATE"]
    assert float(rows[-1]["delta1_pct"]) == 75.0
    assert rows[-1]["method"] == "L1"
    assert rows[-1]["valid_px"] == "20"


def test_missing_metrics_csv(tmp_path):
    with pytest.raises(DataError):
        read_metrics_csv(tmp_path / "none.csv")
