import json

import numpy as np
import pytest

from uavloop.detect import (
    DetectionResult,
    Metrics,
    detect,
    evaluate,
    flag,
    metrics_json,
    percentile_threshold,
    pointwise_loss,
    record_losses,
    records_csv,
)
from uavloop.errors import ConfigError, DimensionError, NumericError
from uavloop.telemetry import window_matrix


class ZeroPredictor:
    """Stub that predicts zeros; record loss becomes the squared signal."""

    def predict_batch(self, windows):
        w = np.asarray(windows)
        return np.zeros_like(w)


class TestPointwiseLoss:
    def test_mean_over_features(self):
        out = pointwise_loss([[1.0, 2.0], [3.0, 4.0]], [[1.0, 0.0], [0.0, 4.0]])
        assert out.tolist() == [2.0, 4.5]

    def test_one_dim_promoted(self):
        out = pointwise_loss([1.0, 2.0], [0.0, 0.0])
        assert out.tolist() == [1.0, 4.0]

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            pointwise_loss([[1.0]], [[1.0, 2.0]])


class TestPercentileThreshold:
    def test_frozen_examples(self):
        losses = np.arange(100, dtype=float)  # 0..99
        assert percentile_threshold(losses, 5.0) == 94.0
        assert percentile_threshold(losses, 25.0) == 74.0

    def test_shuffled_input_same_answer(self):
        rng = np.random.default_rng(0)
        losses = rng.permutation(np.arange(100, dtype=float))
        assert percentile_threshold(losses, 5.0) == 94.0

    def test_single_element_clamps(self):
        assert percentile_threshold([3.5], 5.0) == 3.5
        assert percentile_threshold([3.5], 99.9) == 3.5

    def test_all_equal_flags_nothing(self):
        losses = np.full(64, 1.25)
        thr = percentile_threshold(losses, 10.0)
        assert thr == 1.25
        assert flag(losses, thr).sum() == 0

    def test_exact_rank_no_float_drift(self):
        # ceil(0.8 * 4000) is 3201 in naive float math; the exact rank is
        # 3200, so exactly 800 of 4000 distinct losses must be flagged.
        losses = np.arange(4000, dtype=float)
        thr = percentile_threshold(losses, 20.0)
        assert thr == 3199.0
        assert int(flag(losses, thr).sum()) == 800

    def test_fractional_ratio(self):
        losses = np.arange(1000, dtype=float)
        # rank = ceil(99.5% of 1000) = 995 -> value 994; flags 5 of 1000
        thr = percentile_threshold(losses, 0.5)
        assert thr == 994.0
        assert int(flag(losses, thr).sum()) == 5

    def test_flagged_count_is_floor_property(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            n = int(rng.integers(1, 3000))
            a = float(rng.choice([0.5, 1.0, 5.0, 10.0, 20.0, 25.0, 50.0]))
            losses = rng.permutation(n).astype(float)  # distinct values
            thr = percentile_threshold(losses, a)
            flagged = int(flag(losses, thr).sum())
            assert flagged == int(np.floor(n * a / 100 + 1e-9))

    def test_ratio_bounds(self):
        for bad in (0.0, 100.0, -5.0, 120.0):
            with pytest.raises(ConfigError):
                percentile_threshold([1.0, 2.0], bad)

    def test_empty_losses(self):
        with pytest.raises(NumericError):
            percentile_threshold([], 5.0)


class TestFlag:
    def test_strictly_greater(self):
        out = flag([1.0, 2.0, 3.0], 2.0)
        assert out.tolist() == [False, False, True]

    def test_non_finite_threshold(self):
        with pytest.raises(NumericError):
            flag([1.0], float("nan"))


def brute_force_metrics(predicted, truth):
    tp = fp = tn = fn = 0
    for p, t in zip(predicted, truth):
        if p and t:
            tp += 1
        elif p and not t:
            fp += 1
        elif not p and t:
            fn += 1
        else:
            tn += 1
    return tp, tn, fp, fn


class TestEvaluate:
    def test_frozen_half_and_half(self):
        m = evaluate([1, 1, 0, 0], [1, 0, 1, 0])
        assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 1, 1)
        assert m.accuracy == 0.5
        assert m.precision == 0.5
        assert m.recall == 0.5
        assert m.f_score == 0.5
        assert m.undefined == ()

    def test_all_false_flags_undefined_ratios(self):
        m = evaluate([0, 0, 0, 0], [0, 0, 0, 0])
        assert m.accuracy == 1.0
        assert m.precision == 0.0 and m.recall == 0.0 and m.f_score == 0.0
        assert set(m.undefined) == {"precision", "recall", "f_score"}

    def test_no_positives_predicted(self):
        m = evaluate([0, 0, 0], [1, 0, 0])
        assert m.precision == 0.0
        assert "precision" in m.undefined
        assert "recall" not in m.undefined
        assert m.recall == 0.0

    def test_perfect(self):
        m = evaluate([1, 0, 1], [1, 0, 1])
        assert (m.accuracy, m.precision, m.recall, m.f_score) == (1.0, 1.0, 1.0, 1.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            n = int(rng.integers(1, 200))
            p = rng.random(n) < rng.random()
            t = rng.random(n) < rng.random()
            m = evaluate(p, t)
            tp, tn, fp, fn = brute_force_metrics(p, t)
            assert (m.tp, m.tn, m.fp, m.fn) == (tp, tn, fp, fn)
            assert m.accuracy == (tp + tn) / n
            if tp + fp:
                assert m.precision == tp / (tp + fp)
            if tp + fn:
                assert m.recall == tp / (tp + fn)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            evaluate([1, 0], [1])

    def test_empty_rejected(self):
        with pytest.raises(DimensionError):
            evaluate([], [])


class TestRecordLosses:
    def test_overlap_aggregation_oracle(self):
        # series 0,1,2,3; seq 2 stride 1; zero predictor.
        # record 1 sits in two windows, both contribute 1^2 -> mean 1.0
        data = window_matrix(np.arange(4, dtype=float), seq_len=2)
        indices, losses = record_losses(ZeroPredictor(), data)
        assert indices.tolist() == [0, 1, 2, 3]
        assert losses.tolist() == [0.0, 1.0, 4.0, 9.0]

    def test_stride_gap_leaves_uncovered_records_out(self):
        data = window_matrix(np.arange(5, dtype=float), seq_len=2, stride=3)
        indices, losses = record_losses(ZeroPredictor(), data)
        assert indices.tolist() == [0, 1, 3, 4]

    def test_multi_feature_mean(self):
        matrix = np.array([[3.0, 4.0], [0.0, 0.0]])
        data = window_matrix(matrix, seq_len=2)
        _, losses = record_losses(ZeroPredictor(), data)
        assert losses.tolist() == [12.5, 0.0]


class TestDetect:
    @staticmethod
    def eval_data():
        # record value 9 is the outlier; zero predictor scores value^2
        values = np.array([1.0, 1.0, 1.0, 1.0, 9.0, 1.0, 1.0, 1.0, 1.0, 1.0])
        return window_matrix(values, seq_len=2)

    def test_eval_threshold_flags_outlier(self):
        result = detect(ZeroPredictor(), self.eval_data(), anomaly_ratio=20.0,
                        threshold_source="eval")
        assert result.record_indices[result.predicted].tolist() == [4]
        assert result.threshold_source == "eval"

    def test_train_source_needs_losses(self):
        with pytest.raises(ConfigError):
            detect(ZeroPredictor(), self.eval_data(), threshold_source="train")

    def test_train_threshold_from_reference_pool(self):
        train_losses = np.arange(100, dtype=float)
        result = detect(ZeroPredictor(), self.eval_data(), train_losses,
                        anomaly_ratio=5.0, threshold_source="train")
        assert result.threshold == 94.0

    def test_pooled_concatenates(self):
        data = self.eval_data()
        train_losses = np.full(90, 0.5)
        pooled = detect(ZeroPredictor(), data, train_losses, anomaly_ratio=20.0,
                        threshold_source="pooled")
        expected = percentile_threshold(
            np.concatenate([train_losses, record_losses(ZeroPredictor(), data)[1]]), 20.0
        )
        assert pooled.threshold == expected

    def test_unknown_source(self):
        with pytest.raises(ConfigError):
            detect(ZeroPredictor(), self.eval_data(), threshold_source="magic")

    def test_labels_give_metrics(self):
        labels = np.zeros(10, dtype=bool)
        labels[4] = True
        result = detect(ZeroPredictor(), self.eval_data(), anomaly_ratio=20.0,
                        labels=labels, threshold_source="eval")
        assert result.metrics is not None
        assert result.metrics.recall == 1.0
        assert result.truth.tolist() == labels.tolist()

    def test_short_label_vector_rejected(self):
        with pytest.raises(DimensionError):
            detect(ZeroPredictor(), self.eval_data(), anomaly_ratio=20.0,
                   labels=[0, 1], threshold_source="eval")

    def test_result_consistency_enforced(self):
        with pytest.raises(NumericError):
            DetectionResult(
                record_indices=np.arange(2),
                losses=np.array([1.0, 2.0]),
                threshold=0.0,
                predicted=np.array([False, False]),  # inconsistent with > 0
                truth=None,
                metrics=None,
                anomaly_ratio=20.0,
                threshold_source="eval",
            )


class TestSerialization:
    @staticmethod
    def result():
        labels = np.zeros(10, dtype=bool)
        labels[4] = True
        return detect(ZeroPredictor(), TestDetect.eval_data(), anomaly_ratio=20.0,
                      labels=labels, threshold_source="eval")

    def test_metrics_json_fields(self):
        payload = json.loads(metrics_json(self.result()))
        assert payload["recall"] == 1.0
        assert payload["anomaly_ratio"] == 20.0
        assert payload["tp"] == 1
        assert payload["threshold"] == self.result().threshold

    def test_metrics_json_without_labels(self):
        result = detect(ZeroPredictor(), TestDetect.eval_data(), anomaly_ratio=20.0,
                        threshold_source="eval")
        payload = json.loads(metrics_json(result))
        assert payload["accuracy"] is None
        assert payload["threshold"] == result.threshold

    def test_records_csv_layout(self):
        lines = records_csv(self.result()).splitlines()
        assert lines[0] == "index,loss,predicted,truth"
        assert lines[1] == "0,1.0,0,0"
        # record 4 (value 9) appears in two windows, both scoring 81
        assert lines[5] == "4,81.0,1,1"

    def test_records_csv_blank_truth_when_unlabeled(self):
        result = detect(ZeroPredictor(), TestDetect.eval_data(), anomaly_ratio=20.0,
                        threshold_source="eval")
        lines = records_csv(result).splitlines()
        assert lines[1].endswith(",")
