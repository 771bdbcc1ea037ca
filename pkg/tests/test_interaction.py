"""Biaffine exchange against a direct formula oracle."""

import numpy as np
import pytest

from convcause import autograd as ag
from convcause.autograd import Tensor, grad_check
from convcause.interaction import biaffine_exchange, init_biaffine


def direct_oracle(he, hs, w1, w2):
    """Independent straightforward evaluation of the exchange formulas."""
    def rowsoftmax(x):
        e = np.exp(x)
        return e / e.sum(axis=1, keepdims=True)

    a1 = rowsoftmax(he @ w1 @ hs.T)
    a2 = rowsoftmax(hs @ w2 @ he.T)
    return a1 @ hs, a2 @ he, a1, a2


def test_single_utterance_swaps_streams():
    rng = np.random.default_rng(0)
    params = init_biaffine(5, rng)
    he = Tensor(rng.normal(size=(1, 5)))
    hs = Tensor(rng.normal(size=(1, 5)))
    he2, hs2, a1, a2 = biaffine_exchange(he, hs, params)
    assert a1.data.tolist() == [[1.0]] and a2.data.tolist() == [[1.0]]
    np.testing.assert_array_equal(he2.data, hs.data)
    np.testing.assert_array_equal(hs2.data, he.data)


def test_alignment_rows_sum_to_one():
    rng = np.random.default_rng(1)
    params = init_biaffine(6, rng)
    he = Tensor(rng.normal(size=(4, 6)))
    hs = Tensor(rng.normal(size=(4, 6)))
    _, _, a1, a2 = biaffine_exchange(he, hs, params)
    np.testing.assert_allclose(a1.data.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(a2.data.sum(axis=1), 1.0, atol=1e-9)


def test_matches_direct_formula_oracle():
    rng = np.random.default_rng(2)
    for _ in range(25):
        t = int(rng.integers(1, 5))
        params = init_biaffine(4, rng)
        he = Tensor(rng.normal(size=(t, 4)))
        hs = Tensor(rng.normal(size=(t, 4)))
        he2, hs2, a1, a2 = biaffine_exchange(he, hs, params)
        eh, sh, ea1, ea2 = direct_oracle(
            he.data, hs.data, params.emotion_to_speaker.data,
            params.speaker_to_emotion.data,
        )
        assert np.abs(he2.data - eh).max() < 1e-12
        assert np.abs(hs2.data - sh).max() < 1e-12
        assert np.abs(a1.data - ea1).max() < 1e-12
        assert np.abs(a2.data - ea2).max() < 1e-12


def test_convex_mixture_norm_bound():
    rng = np.random.default_rng(3)
    params = init_biaffine(8, rng)
    he = Tensor(rng.normal(size=(5, 8)))
    hs = Tensor(rng.normal(size=(5, 8)))
    he2, hs2, _, _ = biaffine_exchange(he, hs, params)
    max_hs_row = max(np.linalg.norm(r) for r in hs.data)
    max_he_row = max(np.linalg.norm(r) for r in he.data)
    assert max(np.linalg.norm(r) for r in he2.data) <= max_hs_row + 1e-12
    assert max(np.linalg.norm(r) for r in hs2.data) <= max_he_row + 1e-12


def test_shape_mismatch_rejected():
    rng = np.random.default_rng(4)
    params = init_biaffine(4, rng)
    with pytest.raises(ValueError, match="disagree"):
        biaffine_exchange(
            Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(3, 4))), params
        )


def test_gradient_check_through_both_softmaxes():
    rng = np.random.default_rng(5)
    params = init_biaffine(4, rng)
    he = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    hs = Tensor(rng.normal(size=(3, 4)), requires_grad=True)

    def f(*ts):
        he2, hs2, _, _ = biaffine_exchange(he, hs, params)
        return ag.sum_squares(ag.add(he2, hs2))

    tensors = [he, hs, params.emotion_to_speaker, params.speaker_to_emotion]
    res = grad_check(f, tensors, h=1e-5, tol=1e-4)
    assert res.passed, res.max_rel_error
