import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lgss.metrics import (
    average_precision,
    boundary_recall,
    evaluate_corpus,
    miou,
    scene_intervals,
)

bits = st.lists(st.integers(0, 1), min_size=1, max_size=30)


def paired_bits(min_size=1):
    return st.integers(min_size, 30).flatmap(
        lambda n: st.tuples(st.lists(st.integers(0, 1), min_size=n, max_size=n),
                            st.lists(st.integers(0, 1), min_size=n, max_size=n)))


# ---------------------------------------------------------------- AP


def test_ap_examples():
    assert average_precision([0.9, 0.1, 0.8], [1, 0, 1]) == 1.0
    assert average_precision([0.9, 0.8], [0, 1]) == 0.5


def test_ap_ties_rank_by_index():
    assert average_precision([0.5, 0.5], [1, 0]) == 1.0
    assert average_precision([0.5, 0.5], [0, 1]) == 0.5


def test_ap_without_positives_is_nan():
    assert math.isnan(average_precision([0.3, 0.2], [0, 0]))


def test_ap_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        average_precision([0.3], [0, 1])


@settings(max_examples=60, deadline=None)
@given(data=st.lists(st.tuples(st.integers(-50, 50), st.integers(0, 1)), min_size=1, max_size=40))
def test_ap_invariant_under_monotone_transform(data):
    s = np.array([d[0] for d in data]) / 10
    y = np.array([d[1] for d in data])
    if y.sum() == 0:
        return
    a = average_precision(s, y)
    assert 0 < a <= 1
    assert average_precision(1 / (1 + np.exp(-s)), y) == pytest.approx(a)
    assert average_precision(3 * s + 7, y) == pytest.approx(a)


def test_random_scores_track_positive_rate():
    rng = np.random.default_rng(0)
    aps = [average_precision(rng.uniform(size=200), rng.uniform(size=200) < 0.1) for _ in range(200)]
    assert abs(np.nanmean(aps) - 0.1) < 0.03


# ---------------------------------------------------------------- Miou


def test_scene_intervals():
    assert scene_intervals([0, 1, 0]) == [(0, 1), (2, 3)]
    assert scene_intervals([0, 0]) == [(0, 2)]


def test_miou_examples():
    gt = np.zeros(9, dtype=int)
    gt[4] = 1  # two halves of five shots
    assert miou(np.zeros(9, dtype=int), gt) == 0.5
    assert miou([1, 1, 1], [0, 0, 0]) == 0.25


def test_miou_checks_lengths():
    with pytest.raises(ValueError, match="length"):
        miou([0, 1], [0])
    with pytest.raises(ValueError, match="n_shots"):
        miou([0, 1], [0, 1], n_shots=5)


@settings(max_examples=80, deadline=None)
@given(pair=paired_bits())
def test_miou_symmetric_bounded_and_perfect(pair):
    a, b = pair
    v = miou(a, b)
    assert v == pytest.approx(miou(b, a))
    assert 0 < v <= 1
    assert miou(a, a) == 1.0


# ---------------------------------------------------------------- recall


def test_recall_examples():
    assert boundary_recall([0, 1, 0], [0, 1, 0]) == 1.0
    assert boundary_recall([1, 0, 0], [0, 1, 0]) == 0.0
    t = [1.0, 3.5, 7.0]
    assert boundary_recall([1, 0, 0], [0, 1, 0], t, window_s=3.0) == 1.0
    assert boundary_recall([0, 0, 1], [1, 0, 0], t, window_s=3.0) == 0.0


def test_recall_window_is_inclusive():
    assert boundary_recall([1, 0], [0, 1], [2.0, 5.0], window_s=3.0) == 1.0


def test_recall_needs_times_for_window():
    with pytest.raises(ValueError, match="boundary_times"):
        boundary_recall([1], [1], window_s=1.0)


def test_recall_without_gt_is_nan():
    assert math.isnan(boundary_recall([1, 0], [0, 0]))


@settings(max_examples=60, deadline=None)
@given(pair=paired_bits(), seed=st.integers(0, 1000), w1=st.floats(0, 10), w2=st.floats(0, 10))
def test_recall_monotone_in_window(pair, seed, w1, w2):
    pred, gt = pair
    if not any(gt):
        return
    t = np.cumsum(np.random.default_rng(seed).uniform(0.5, 4, size=len(gt)))
    lo, hi = sorted((w1, w2))
    assert boundary_recall(pred, gt, t, lo) <= boundary_recall(pred, gt, t, hi)
    assert boundary_recall(pred, gt, t, 0.0) <= boundary_recall(pred, gt, t, lo)


# ---------------------------------------------------------------- corpus


def test_perfect_prediction_scores_one_everywhere():
    gt = np.array([0, 0, 1, 0, 1, 0])
    t = np.arange(1.0, 7.0)
    r = evaluate_corpus({"m": (gt.astype(float), gt)}, {"m": gt}, {"m": t})
    m = r.movies[0]
    assert (m.ap, m.miou, m.recall, m.recall_at_3s) == (1.0, 1.0, 1.0, 1.0)


def test_corpus_mean_and_exclusion():
    gts = {"a": np.array([1, 0]), "b": np.array([0, 1]), "c": np.array([0, 0])}
    preds = {"a": (np.array([0.9, 0.8]), np.array([1, 0])),
             "b": (np.array([0.9, 0.8]), np.array([1, 0])),
             "c": (np.array([0.1, 0.2]), np.array([0, 0]))}
    r = evaluate_corpus(preds, gts)
    assert r.ap == 0.75
    c = [m for m in r.movies if m.movie_id == "c"][0]
    assert c.excluded and math.isnan(c.ap)
    assert r.recall == 0.5
    csv = r.to_csv().splitlines()
    assert csv[0].startswith("movie_id,ap,miou")
    assert csv[-1].startswith("MEAN,0.750000")
    assert csv[3].endswith(",1")


def test_corpus_key_mismatch():
    with pytest.raises(KeyError, match="differ"):
        evaluate_corpus({"a": ([0.1], [0])}, {"b": [1]})
