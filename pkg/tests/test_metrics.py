"""Metric checks against a hand-computed confusion fixture."""

import numpy as np
import pytest

from fedgbt.metrics import accuracy, macro_f1, per_class_f1

# Six-sample fixture, worked by hand:
#   labels      0 0 1 1 2 2
#   predictions 0 1 1 1 2 0
# class 0: tp=1 fp=1 fn=1 -> F1 = 2/4 = 0.5
# class 1: tp=2 fp=1 fn=0 -> F1 = 4/5 = 0.8
# class 2: tp=1 fp=0 fn=1 -> F1 = 2/3
# accuracy = 4/6; macro-F1 = (0.5 + 0.8 + 2/3) / 3
LABELS = np.array([0, 0, 1, 1, 2, 2])
PREDS = np.array([0, 1, 1, 1, 2, 0])


def test_accuracy_hand_value():
    assert accuracy(LABELS, PREDS) == pytest.approx(4 / 6, abs=1e-15)


def test_per_class_f1_hand_values():
    np.testing.assert_allclose(per_class_f1(LABELS, PREDS, 3), [0.5, 0.8, 2 / 3], atol=1e-15)


def test_macro_f1_hand_value():
    assert macro_f1(LABELS, PREDS, 3) == pytest.approx((0.5 + 0.8 + 2 / 3) / 3, abs=1e-15)


def test_macro_f1_counts_absent_classes_as_zero():
    labels = np.array([0, 0])
    preds = np.array([0, 0])
    assert macro_f1(labels, preds, 2) == pytest.approx(0.5)  # class 1 contributes 0
