import json

import numpy as np
import pytest

from wstl.dataset import LabeledWindow
from wstl.formula import Not, Pred, always
from wstl.metrics import (ConfusionCounts, classify, evaluate, format_json, format_table, metrics)


def test_metrics_example():
    m = metrics(ConfusionCounts(tp=2, fp=1, tn=3, fn=0))
    assert m["accuracy"] == pytest.approx(5 / 6)
    assert m["sensitivity"] == 1.0 and m["specificity"] == 0.75 and m["npv"] == 1.0
    assert m["ppv"] == pytest.approx(0.6667, abs=5e-5)


def test_undefined_measures():
    m = metrics(ConfusionCounts(tp=0, fp=0, tn=4, fn=2))
    assert m["ppv"] is None and m["sensitivity"] == 0.0
    assert metrics(ConfusionCounts(0, 0, 0, 0))["accuracy"] is None


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        ConfusionCounts(1, -1, 0, 0)


def test_from_labels():
    c = ConfusionCounts.from_labels([1, 1, -1, -1, 1], [1, -1, -1, 1, 1])
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 1, 1)
    with pytest.raises(ValueError, match="shape"):
        ConfusionCounts.from_labels([1], [1, 1])


def test_tie_goes_to_positive():
    phi = Pred([1.0], 2.0)  # robustness 2 - x
    assert classify(phi, np.array([[2.0]])) == 1
    assert classify(phi, LabeledWindow(np.array([[2.5]]), -1)) == -1


def test_negation_flips_predictions(rng):
    phi = always(0, 3, Pred([1.0, -0.5], 0.1))
    X = rng.normal(size=(40, 2, 4))
    for x in X:  # robustness is never exactly 0 on these signals
        assert classify(Not(phi), x) == -classify(phi, x)


def test_evaluate_counts_and_formats(rng):
    phi = Pred([1.0], 0.0)
    X = np.array([[[-1.0]], [[-2.0]], [[3.0]], [[1.0]]])
    y = np.array([1, -1, -1, 1])
    counts, m = evaluate(phi, X, y)
    assert counts == ConfusionCounts(tp=1, fp=1, tn=1, fn=1)
    table = format_table(counts, m)
    assert "accuracy" in table and "0.5000" in table
    data = json.loads(format_json(counts, m))
    assert data["counts"] == {"fn": 1, "fp": 1, "tn": 1, "tp": 1} and data["npv"] == 0.5


def test_evaluation_is_reproducible(rng):
    phi = always(0, 4, Pred([0.3, -1.2], 0.2))
    X = rng.normal(size=(30, 2, 5))
    y = rng.choice([-1, 1], size=30)
    a = format_json(*evaluate(phi, X, y))
    b = format_json(*evaluate(phi, X, y))
    assert a == b


def test_undefined_in_table():
    counts = ConfusionCounts(0, 0, 3, 1)
    assert "undefined" in format_table(counts, metrics(counts))
    assert json.loads(format_json(counts, metrics(counts)))["ppv"] is None
