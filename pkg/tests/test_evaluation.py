import numpy as np
import pytest

from checks import TWO_SEGMENT_ADJUSTED, TWO_SEGMENT_PRED, TWO_SEGMENT_TRUTH, eval_oracle_mismatches, random_eval_instance
from oracles import brute_force_adjust
from srdetect.detector import DetectionResult
from srdetect.evaluation import (
    Confusion,
    EvalConfig,
    EvalReport,
    adjust,
    best_threshold_f1,
    class_std,
    evaluate_detector,
    f1_score,
    score,
    segments,
)
from srdetect.timeseries import TimeSeries


def test_two_segment_delay_example():
    assert adjust(TWO_SEGMENT_TRUTH, TWO_SEGMENT_PRED, 1).astype(int).tolist() == TWO_SEGMENT_ADJUSTED
    rep = score(TWO_SEGMENT_TRUTH, TWO_SEGMENT_PRED, 1)
    assert (rep.tp, rep.fp, rep.fn, rep.tn) == (3, 1, 3, 3)
    assert rep.precision == 0.75 and rep.recall == 0.5
    assert rep.f1 == pytest.approx(0.6)
    # with k=2 the late detection counts too
    assert adjust(TWO_SEGMENT_TRUTH, TWO_SEGMENT_PRED, 2).astype(int).tolist() == [1, 0, 1, 1, 1, 0, 0, 1, 1, 1]


def test_delay_counted_from_segment_start():
    truth = [0, 1, 1, 1, 1, 0]
    assert adjust(truth, [0, 1, 0, 0, 0, 0], 0).tolist() == [False, True, True, True, True, False]
    assert not adjust(truth, [0, 0, 1, 0, 0, 0], 0).any()


def test_all_zero_prediction():
    truth = [0, 1, 1, 0, 1]
    assert not adjust(truth, [0] * 5, 3).any()
    rep = score(truth, [0] * 5, 3)
    assert rep.recall == 0 and rep.f1 == 0 and rep.precision == 0


def test_perfect_prediction():
    truth = np.array([0, 1, 1, 0, 0, 1, 0], dtype=bool)
    rep = score(truth, truth, 0)
    assert rep.precision == rep.recall == rep.f1 == 1.0


def test_no_anomalies_anywhere():
    rep = score([0, 0, 0], [0, 0, 0], 1)
    assert (rep.precision, rep.recall, rep.f1, rep.tn) == (0.0, 0.0, 0.0, 3)


def test_segments():
    assert segments([1, 1, 0, 1, 0, 0, 1]) == [(0, 1), (3, 3), (6, 6)]
    assert segments([]) == []


def test_length_mismatch_and_bad_k():
    with pytest.raises(ValueError):
        adjust([0, 1], [0], 1)
    with pytest.raises(ValueError):
        adjust([0, 1], [0, 1], -1)
    with pytest.raises(ValueError):
        EvalConfig(-1)


def test_random_instances_match_oracle():
    assert eval_oracle_mismatches(200, seed=0) == 0


def test_never_credits_late_detection():
    rng = np.random.default_rng(3)
    for _ in range(300):
        truth, pred, k = random_eval_instance(rng)
        adj = adjust(truth, pred, k)
        for s, e in segments(truth):
            if adj[s]:
                assert pred[s : min(e, s + k) + 1].any()
            assert adj[s : e + 1].all() or not adj[s : e + 1].any()
        outside = ~truth
        assert adj[outside].tolist() == pred[outside].tolist()
        assert adj.tolist() == brute_force_adjust(truth.tolist(), pred.tolist(), k)


def test_idempotent():
    rng = np.random.default_rng(4)
    for _ in range(200):
        truth, pred, k = random_eval_instance(rng)
        once = adjust(truth, pred, k)
        assert adjust(truth, once, k).tolist() == once.tolist()


def test_adding_correct_detection_never_lowers_recall():
    rng = np.random.default_rng(5)
    for _ in range(200):
        truth, pred, k = random_eval_instance(rng)
        if not truth.any():
            continue
        before = score(truth, pred, k).recall
        more = pred.copy()
        more[rng.choice(np.flatnonzero(truth))] = True
        assert score(truth, more, k).recall >= before


def test_f1_formula():
    assert f1_score(0.5, 1.0) == pytest.approx(2 / 3)
    assert f1_score(0.0, 0.0) == 0.0
    c = Confusion(tp=4, fp=1, fn=3, tn=10)
    assert c.f1 == pytest.approx(2 * 0.8 * (4 / 7) / (0.8 + 4 / 7))


def test_class_std():
    a, b, c = 0.2, 0.5, 0.9
    mean = (a + b + c) / 3
    assert class_std({"x": a, "y": b, "z": c}) == pytest.approx((((a - mean) ** 2 + (b - mean) ** 2 + (c - mean) ** 2) / 3) ** 0.5)
    assert class_std({}) is None
    # reported per-class rows: 0.716/0.752/0.464 and 0.461/0.400/0.547
    assert class_std({"s": 0.716, "t": 0.752, "u": 0.464}) == pytest.approx(0.128, abs=5e-4)
    assert class_std({"s": 0.461, "t": 0.400, "u": 0.547}) == pytest.approx(0.060, abs=5e-4)


def labeled(labels, tag=None, granularity="hour"):
    return TimeSeries.from_arrays(np.ones(len(labels)), labels=labels, class_tag=tag, granularity=granularity)


def oracle_detector(series):
    return [DetectionResult(i, float(l), bool(l)) for i, l in enumerate(series.labels.tolist())]


def test_evaluate_perfect_series():
    rep = evaluate_detector(oracle_detector, [labeled([0, 1, 1, 0, 0])])
    assert rep.f1 == 1.0 and rep.total_points == 5
    assert rep.wall_time_seconds >= 0


def test_evaluate_per_class_and_std():
    def first_half(series):
        n = len(series)
        return [DetectionResult(i, 0.0, bool(series.labels[i]) and i < n // 2) for i in range(n)]

    data = [
        labeled([0, 1, 0, 0, 0, 0, 0, 0], "seasonal"),
        labeled([0, 1, 0, 0, 0, 0, 1, 0], "stable"),
        labeled([0, 0, 0, 0, 0, 0, 1, 0], "unstable"),
    ]
    rep = evaluate_detector(first_half, data, EvalConfig(0))
    assert rep.per_class == {"seasonal": 1.0, "stable": pytest.approx(2 / 3), "unstable": 0.0}
    assert rep.class_std == pytest.approx(np.std([1.0, 2 / 3, 0.0]))
    assert (rep.tp, rep.fn) == (2, 2)
    again = evaluate_detector(first_half, data, EvalConfig(0))
    a, b = rep.to_dict(), again.to_dict()
    a.pop("wall_time_seconds"), b.pop("wall_time_seconds")
    assert a == b


def test_delay_defaults_by_granularity():
    assert EvalConfig().delay_for("minute") == 7
    assert EvalConfig().delay_for("hour") == 3
    assert EvalConfig().delay_for("day") == 1
    assert EvalConfig(0).delay_for("minute") == 0

    def late(series):
        return [DetectionResult(i, 0.0, i == 4) for i in range(len(series))]

    truth = [0, 1, 1, 1, 1, 1, 0, 0]
    assert evaluate_detector(late, [labeled(truth, granularity="hour")]).recall == 1.0
    assert evaluate_detector(late, [labeled(truth, granularity="day")]).recall == 0.0


def test_unlabeled_rejected():
    with pytest.raises(ValueError):
        evaluate_detector(oracle_detector, [TimeSeries.from_arrays(np.ones(5))])


def test_report_dict():
    d = score([0, 1], [0, 1], 0).to_dict()
    assert set(d) == {f.name for f in EvalReport.__dataclass_fields__.values()}


def test_best_threshold_f1():
    truth = [np.array([0, 0, 1, 0, 0, 1, 0], dtype=bool)]
    sc = [np.array([0.1, 0.2, 0.9, 0.3, 0.1, 0.8, 0.2])]
    f1, t = best_threshold_f1(truth, sc, [0])
    assert f1 == 1.0
    assert 0.3 <= t < 0.8
