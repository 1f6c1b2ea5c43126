import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhnn.metrics import ConfusionMatrix, accuracy, confusion, precision_recall_f1, report
from oracles import prf_counting


def test_confusion_examples():
    np.testing.assert_array_equal(confusion([1, 0], [0, 0], 2).counts, [[1, 1], [0, 0]])
    np.testing.assert_array_equal(confusion([0, 2, 1], [0, 2, 1], 3).counts, np.eye(3))
    assert confusion([], [], 4).counts.sum() == 0
    with pytest.raises(ValueError):
        confusion([3], [0], 3)
    with pytest.raises(ValueError):
        confusion([0, 1], [0], 3)


def test_accuracy_edges():
    assert accuracy(confusion([0, 1, 2], [0, 1, 2], 3)) == 1.0
    assert accuracy(confusion([1, 0], [0, 1], 2)) == 0.0
    with pytest.raises(ValueError):
        accuracy(confusion([], [], 2))


def test_perfect_predictions():
    prf = precision_recall_f1(confusion([0, 1, 2, 2], [0, 1, 2, 2], 3))
    for key in ("precision", "recall", "f1"):
        assert np.all(prf[key] == 1.0) and prf[f"avg_{key}"] == 1.0


def test_class_never_predicted():
    cm = confusion([0, 0, 0], [0, 1, 0], 2)
    prf = precision_recall_f1(cm)
    assert prf["precision"][1] == 0 and prf["f1"][1] == 0
    assert 1 in prf["undefined"]


def test_random_matrices_against_counting_oracle():
    r = np.random.default_rng(0)
    for _ in range(50):
        k = int(r.integers(2, 11))
        cm = r.integers(0, 20, (k, k))
        prf = precision_recall_f1(ConfusionMatrix(cm))
        p, rc, f = prf_counting(cm.tolist())
        for got, want in ((prf["precision"], p), (prf["recall"], rc), (prf["f1"], f)):
            assert np.max(np.abs(got - np.array([float(v) for v in want]))) <= 1e-12
        assert abs(prf["avg_f1"] - float(sum(f) / k)) <= 1e-12


def test_weighted_and_micro_averages():
    cm = ConfusionMatrix(np.array([[5, 1], [2, 2]]))
    micro = precision_recall_f1(cm, "micro")
    assert micro["avg_recall"] == pytest.approx(accuracy(cm))
    weighted = precision_recall_f1(cm, "weighted")
    per = precision_recall_f1(cm)
    assert weighted["avg_f1"] == pytest.approx((6 * per["f1"][0] + 4 * per["f1"][1]) / 10)
    with pytest.raises(ValueError):
        precision_recall_f1(cm, "harmonic")


def test_report_json_shape():
    rep = report(confusion([0, 1, 1], [0, 1, 0], 2), ["a", "b"])
    assert set(rep) == {"accuracy", "macro_precision", "macro_recall", "macro_f1", "per_class", "confusion"}
    assert rep["per_class"][1]["class"] == "b" and rep["per_class"][0]["support"] == 2
    json.dumps(rep)


def test_confusion_is_additive():
    a = confusion([0, 1], [1, 1], 2)
    b = confusion([1, 1, 0], [0, 1, 0], 2)
    np.testing.assert_array_equal((a + b).counts, confusion([0, 1, 1, 1, 0], [1, 1, 0, 1, 0], 2).counts)


@st.composite
def matrices(draw):
    k = draw(st.integers(2, 6))
    cells = draw(st.lists(st.integers(0, 30), min_size=k * k, max_size=k * k))
    cm = np.array(cells).reshape(k, k)
    if cm.sum() == 0:
        cm[0, 0] = 1
    return cm


@settings(max_examples=100, deadline=None)
@given(matrices())
def test_property_metric_bounds(cm):
    prf = precision_recall_f1(ConfusionMatrix(cm))
    p, r, f = prf["precision"], prf["recall"], prf["f1"]
    for v in (p, r, f):
        assert np.all((v >= 0) & (v <= 1))
    assert np.all(f <= np.maximum(p, r) + 1e-12)
    assert np.array_equal(f == 0, p * r == 0)
    assert accuracy(ConfusionMatrix(cm)) == pytest.approx(precision_recall_f1(ConfusionMatrix(cm), "micro")["avg_recall"])


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6).flatmap(lambda k: st.tuples(
    st.just(k),
    st.lists(st.tuples(st.integers(0, k - 1), st.integers(0, k - 1)), min_size=1, max_size=60),
    st.permutations(list(range(k))),
)))
def test_property_permutation_invariance(case):
    k, pairs, perm = case
    preds, labels = np.array(pairs).T
    perm = np.array(perm)
    base = precision_recall_f1(confusion(preds, labels, k))
    moved = precision_recall_f1(confusion(perm[preds], perm[labels], k))
    for key in ("avg_precision", "avg_recall", "avg_f1"):
        assert moved[key] == pytest.approx(base[key], abs=1e-12)
    np.testing.assert_allclose(moved["f1"][perm], base["f1"], atol=1e-12)
