import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secnn.metrics import (EmptyInput, LabelOutOfRange, NoPositives, SingleClassInput,
                           UndefinedMetricWarning, classification_report, confusion_matrix,
                           pr_curve_ap, predict_logits, roc_curve_auc)


def auc_pairs(s, y):
    pos = [a for a, t in zip(s, y) if t == 1]
    neg = [a for a, t in zip(s, y) if t == 0]
    tot = 0.0
    for p in pos:
        for n in neg:
            tot += 1.0 if p > n else 0.5 if p == n else 0.0
    return tot / (len(pos) * len(neg))


def ap_enumerate(s, y):
    pos = sum(y)
    ap, prev_r = 0.0, 0.0
    for t in sorted(set(s), reverse=True):
        tp = sum(1 for a, b in zip(s, y) if a >= t and b == 1)
        fp = sum(1 for a, b in zip(s, y) if a >= t and b == 0)
        r = tp / pos
        ap += (r - prev_r) * tp / (tp + fp)
        prev_r = r
    return ap


def weighted_direct(t, p, k):
    n = len(t)
    wp = wr = wf = 0.0
    for c in range(k):
        tp = sum(1 for a, b in zip(t, p) if a == c and b == c)
        pred = sum(1 for b in p if b == c)
        sup = sum(1 for a in t if a == c)
        prec = tp / pred if pred else 0.0
        rec = tp / sup if sup else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        wp += sup * prec
        wr += sup * rec
        wf += sup * f1
    return wp / n, wr / n, wf / n


def test_perfect_predictions():
    r = classification_report([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert r.accuracy == r.weighted_precision == r.weighted_recall == r.weighted_f1 == 1.0


def test_hand_example():
    r = classification_report([0, 0, 1, 1], [0, 1, 1, 1], 2)
    assert r.accuracy == 0.75
    assert abs(r.weighted_f1 - (2 * (2 / 3) + 2 * 0.8) / 4) < 1e-12
    np.testing.assert_array_equal(r.confusion, [[1, 1], [0, 2]])


def test_all_zero_predictions_warns():
    with pytest.warns(UndefinedMetricWarning):
        r = classification_report([0, 0, 1, 1], [0, 0, 0, 0], 2)
    assert r.weighted_precision == 0.25
    assert r.precision[1] == 0.0 and not np.isnan(r.f1).any()
    assert "precision[1]" in r.undefined
    wp, wr, wf = weighted_direct([0, 0, 1, 1], [0, 0, 0, 0], 2)
    assert (r.weighted_precision, r.weighted_recall, r.weighted_f1) == (wp, wr, wf)


def test_report_errors():
    with pytest.raises(EmptyInput):
        classification_report([], [], 2)
    with pytest.raises(LabelOutOfRange):
        classification_report([0, 2], [0, 1], 2)
    with pytest.raises(LabelOutOfRange):
        confusion_matrix([0, 1], [0, -1], 2)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 30), st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_report_properties(n, k, seed):
    r_ = np.random.default_rng(seed)
    t = r_.integers(0, k, n)
    p = r_.integers(0, k, n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndefinedMetricWarning)
        rep = classification_report(t, p, k)
    assert rep.weighted_recall == rep.accuracy
    for v in (rep.accuracy, rep.weighted_precision, rep.weighted_recall, rep.weighted_f1):
        assert 0.0 <= v <= 1.0
    np.testing.assert_array_equal(rep.confusion.sum(axis=1), np.bincount(t, minlength=k))
    wp, wr, wf = weighted_direct(t.tolist(), p.tolist(), k)
    assert abs(rep.weighted_precision - wp) < 1e-12
    assert abs(rep.weighted_f1 - wf) < 1e-12


def test_auc_examples():
    assert roc_curve_auc([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0])[1] == 1.0
    assert roc_curve_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])[1] == 0.75


def test_auc_random_near_half():
    r_ = np.random.default_rng(0)
    s = r_.random(200)
    y = r_.permutation(np.r_[np.ones(100, int), np.zeros(100, int)])
    assert abs(roc_curve_auc(s, y)[1] - 0.5) < 0.10


def test_auc_errors():
    with pytest.raises(SingleClassInput):
        roc_curve_auc([0.1, 0.2], [1, 1])
    with pytest.raises(NoPositives):
        pr_curve_ap([0.1, 0.2], [0, 0])
    with pytest.raises(LabelOutOfRange):
        roc_curve_auc([0.1, 0.2], [0, 2])


def test_ap_examples():
    assert pr_curve_ap([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0])[1] == 1.0
    assert abs(pr_curve_ap([0.5] * 5, [1, 0, 0, 1, 0])[1] - 0.4) < 1e-15
    s = [0.9, 0.7, 0.7, 0.4, 0.3, 0.1]
    y = [1, 0, 1, 1, 0, 0]
    assert abs(pr_curve_ap(s, y)[1] - ap_enumerate(s, y)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31 - 1), st.booleans())
def test_auc_ap_against_brute_force(n, seed, coarse):
    r_ = np.random.default_rng(seed)
    y = r_.integers(0, 2, n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    s = r_.integers(0, 4, n) / 4 if coarse else r_.random(n)  # coarse scores force ties
    assert abs(roc_curve_auc(s, y)[1] - auc_pairs(s.tolist(), y.tolist())) < 1e-9
    assert abs(pr_curve_ap(s, y)[1] - ap_enumerate(s.tolist(), y.tolist())) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 15), st.integers(0, 2**31 - 1))
def test_auc_monotone_invariance_and_label_flip(n, seed):
    r_ = np.random.default_rng(seed)
    y = r_.integers(0, 2, n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    s = r_.permutation(n) / n  # distinct scores
    auc = roc_curve_auc(s, y)[1]
    assert abs(roc_curve_auc(np.exp(3 * s) - 7, y)[1] - auc) < 1e-12
    assert abs(roc_curve_auc(s, 1 - y)[1] - (1 - auc)) < 1e-12


def test_curve_endpoints_and_csv(tmp_path):
    curve, _ = roc_curve_auc([0.9, 0.4, 0.6, 0.1], [1, 0, 1, 0])
    assert (curve.x[0], curve.y[0], curve.x[-1], curve.y[-1]) == (0, 0, 1, 1)
    curve.to_csv(tmp_path / "roc.csv")
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "fpr,tpr" and len(lines) == len(curve.x) + 1


def test_predict_tie_and_normalization(rng):
    pred, prob = predict_logits(np.array([[2.0, 2.0]]))
    assert pred[0] == 0 and prob.tolist() == [[0.5, 0.5]]
    z = rng.standard_normal((16, 5)) * 4
    pred, prob = predict_logits(z)
    np.testing.assert_allclose(prob.sum(axis=1), 1, atol=1e-12)
    pred2, _ = predict_logits(z + rng.standard_normal((16, 1)) * 100)
    np.testing.assert_array_equal(pred, pred2)


def test_report_serialization():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndefinedMetricWarning)
        r = classification_report([0, 1, 1], [0, 1, 0], 2)
    d = r.to_dict()
    assert d["accuracy"] == 2 / 3 and len(d["per_class"]) == 2
    assert "weighted" in r.format_text(["a", "b"])
