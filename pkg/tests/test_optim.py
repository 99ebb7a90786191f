"""Unit tests for Adam and the learning-rate schedule."""

import numpy as np
import pytest

from svada.autodiff import ShapeMismatch, Tensor
from svada.optim import AdamState, adam_step, lr_schedule


def test_lr_schedule_values():
    # [DERIVED] lr0 / (1 + 10 p)^0.75 at p = 0, 0.5, 1
    assert lr_schedule(1e-3, 0, 60) == pytest.approx(1e-3)
    assert lr_schedule(1e-3, 30, 60) == pytest.approx(1e-3 / 6.0 ** 0.75)
    assert lr_schedule(1e-3, 60, 60) == pytest.approx(1e-3 / 11.0 ** 0.75)


def test_lr_schedule_monotone_decreasing():
    vals = [lr_schedule(1e-3, e, 60) for e in range(60)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_first_adam_step_matches_hand_computation():
    # [DERIVED] with zero moments, step 1 moves each weight by
    # -lr * g / (|g| + eps) regardless of gradient magnitude
    p = Tensor(np.array([1.0, -2.0], dtype=np.float32))
    state = AdamState([p], lr0=0.1, weight_decay=0.0)
    g = np.array([0.5, -3.0], dtype=np.float32)
    adam_step(state, [p], [g], epoch=0, total_epochs=1)
    expect = np.array([1.0, -2.0]) - 0.1 * np.sign(g) * (np.abs(g) / (np.abs(g) + 1e-8))
    assert np.allclose(p.data, expect, atol=1e-6)


def test_second_step_uses_bias_corrected_moments():
    # [DERIVED] hand-rolled two-step Adam reference
    p = Tensor(np.array([0.0], dtype=np.float32))
    state = AdamState([p], lr0=0.01, weight_decay=0.0)
    g1, g2 = np.array([1.0], np.float32), np.array([2.0], np.float32)

    ref, m, v, b1, b2, eps = 0.0, 0.0, 0.0, 0.9, 0.999, 1e-8
    for t, g in ((1, 1.0), (2, 2.0)):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref -= 0.01 * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)

    adam_step(state, [p], [g1], epoch=0, total_epochs=1)
    adam_step(state, [p], [g2], epoch=0, total_epochs=1)
    assert p.data[0] == pytest.approx(ref, abs=1e-7)


def test_weight_decay_is_decoupled_and_applies_without_gradient():
    p = Tensor(np.array([10.0], dtype=np.float32))
    state = AdamState([p], lr0=0.1, weight_decay=0.5)
    adam_step(state, [p], [None], epoch=0, total_epochs=1)
    # [DERIVED] unreachable parameters still shrink by lr * wd * w
    assert p.data[0] == pytest.approx(10.0 - 0.1 * 0.5 * 10.0)


def test_lr_mult_scales_one_parameter_group():
    a = Tensor(np.array([0.0], dtype=np.float32))
    b = Tensor(np.array([0.0], dtype=np.float32))
    state = AdamState([a, b], lr0=0.1, weight_decay=0.0, lr_mult=[1.0, 4.0])
    g = np.array([1.0], np.float32)
    adam_step(state, [a, b], [g, g.copy()], epoch=0, total_epochs=1)
    assert b.data[0] == pytest.approx(4.0 * a.data[0])


def test_shape_mismatch_raises():
    p = Tensor(np.zeros(3, dtype=np.float32))
    state = AdamState([p], lr0=0.1)
    with pytest.raises(ShapeMismatch):
        adam_step(state, [p], [np.zeros(4, dtype=np.float32)],
                  epoch=0, total_epochs=1)


def test_lr_mult_length_validated():
    p = Tensor(np.zeros(3, dtype=np.float32))
    with pytest.raises(ValueError):
        AdamState([p], lr_mult=[1.0, 2.0])
