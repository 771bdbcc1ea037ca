"""Prediction head and objective: hand-evaluated cases and invariants."""

import math

import numpy as np
import pytest

from convcause.autograd import Tensor
from convcause.predictor import (
    HeadParams,
    bce_loss,
    cause_probabilities,
    init_head,
    l2_penalty,
    predict_causes,
    training_loss,
)


def zero_head(d_h):
    return HeadParams(
        hidden_weight=Tensor(np.zeros((d_h, 2 * d_h)), requires_grad=True),
        hidden_bias=Tensor(np.zeros(d_h), requires_grad=True),
        output_weight=Tensor(np.zeros((1, d_h)), requires_grad=True),
        output_bias=Tensor(np.zeros(()), requires_grad=True),
    )


def test_zero_weights_give_half():
    rng = np.random.default_rng(0)
    e = Tensor(rng.normal(size=(4, 6)))
    s = Tensor(rng.normal(size=(4, 6)))
    probs = cause_probabilities(e, s, zero_head(6)).data
    assert probs.tolist() == [0.5, 0.5, 0.5, 0.5]


def test_probability_increases_in_output_bias():
    rng = np.random.default_rng(1)
    e = Tensor(rng.normal(size=(3, 4)))
    s = Tensor(rng.normal(size=(3, 4)))
    params = init_head(4, rng)
    lows = cause_probabilities(e, s, params).data
    params.output_bias = Tensor(params.output_bias.data + 0.7, requires_grad=True)
    highs = cause_probabilities(e, s, params).data
    assert np.all(highs > lows)


def test_hand_evaluated_fcn():
    # t=1, d_h=2: hand-chosen parameters, evaluated with plain arithmetic
    e = Tensor([[1.0, -1.0]])
    s = Tensor([[0.5, 2.0]])
    params = HeadParams(
        hidden_weight=Tensor([[0.1, 0.2, 0.3, 0.4], [-0.5, 0.6, -0.7, 0.8]]),
        hidden_bias=Tensor([0.05, -0.1]),
        output_weight=Tensor([[1.5, -2.5]]),
        output_bias=Tensor(np.asarray(0.25)),
    )
    x = [1.0, -1.0, 0.5, 2.0]
    h1 = max(0.0, 0.1 * 1.0 + 0.2 * -1.0 + 0.3 * 0.5 + 0.4 * 2.0 + 0.05)
    h2 = max(0.0, -0.5 * 1.0 + 0.6 * -1.0 + -0.7 * 0.5 + 0.8 * 2.0 - 0.1)
    logit = 1.5 * h1 - 2.5 * h2 + 0.25
    expected = 1.0 / (1.0 + math.exp(-logit))
    probs = cause_probabilities(e, s, params).data
    assert abs(probs[0] - expected) < 1e-12


def test_predict_causes_threshold():
    rng = np.random.default_rng(2)
    e = Tensor(rng.normal(size=(3, 4)))
    s = Tensor(rng.normal(size=(3, 4)))
    pred = predict_causes(e, s, init_head(4, rng), threshold=0.5)
    assert pred.labels == [p >= 0.5 for p in pred.probs]
    assert all(0.0 < p < 1.0 for p in pred.probs)


def test_bce_half_is_log_two():
    probs = Tensor([0.5])
    loss = bce_loss(probs, [True])
    assert abs(loss.item() - math.log(2)) < 1e-12


def test_bce_perfect_prediction_tends_to_zero():
    loss = bce_loss(Tensor([1 - 1e-9, 1e-9]), [True, False])
    assert loss.item() < 1e-8


def test_bce_permutation_invariance():
    rng = np.random.default_rng(3)
    p = rng.uniform(0.05, 0.95, size=7)
    y = rng.integers(0, 2, size=7).astype(bool)
    perm = rng.permutation(7)
    a = bce_loss(Tensor(p), list(y)).item()
    b = bce_loss(Tensor(p[perm]), list(y[perm])).item()
    assert abs(a - b) < 1e-12


def test_loss_nonnegative_and_includes_l2():
    rng = np.random.default_rng(4)
    probs = Tensor(rng.uniform(0.1, 0.9, size=4))
    mask = [True, False, False, True]
    w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    plain = training_loss(probs, mask, [], [], 0.01, 1e-5).item()
    with_l2 = training_loss(probs, mask, [w], [], 0.01, 1e-5).item()
    assert plain >= 0
    expected_penalty = 0.01 * float((w.data ** 2).sum())
    assert abs(with_l2 - plain - expected_penalty) < 1e-12


def test_l2_groups_weighted_separately():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    val = l2_penalty([a], [b], weight_encoder=0.01, weight_other=1e-5).item()
    assert abs(val - (0.01 * 4 + 1e-5 * 3)) < 1e-15


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        training_loss(Tensor([0.5, 0.5]), [True], [], [])


def test_clamped_probabilities_do_not_explode():
    loss = bce_loss(Tensor([1.0 - 1e-16, 1e-16]), [False, True])
    assert np.isfinite(loss.item())
