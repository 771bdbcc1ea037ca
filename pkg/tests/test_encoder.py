"""Encoder contracts: shapes, determinism, context sensitivity, gradients."""

import numpy as np
import pytest

from convcause import autograd as ag
from convcause.autograd import Tape, backward, grad_check
from convcause.data import ConversationSample, Utterance
from convcause.encoder import encode_history, init_encoder


def sample_from_tokens(token_lists, speakers=None, emotions=None, cid="c0"):
    t = len(token_lists)
    speakers = speakers or ["A" if i % 2 == 0 else "B" for i in range(t)]
    emotions = emotions or ["neutral"] * (t - 1) + ["happy"]
    utts = [
        Utterance(index=i + 1, speaker=speakers[i], emotion=emotions[i],
                  tokens=list(toks))
        for i, toks in enumerate(token_lists)
    ]
    return ConversationSample(cid, utts, cause_mask=[False] * t)


@pytest.fixture
def params():
    return init_encoder(vocab_size=30, d_e=8, d_h=12, max_positions=64,
                        rng=np.random.default_rng(0))


def test_output_shape(params):
    sample = sample_from_tokens([[1, 2, 3], [4, 5], [6]])
    out = encode_history(sample, params)
    assert out.shape == (3, 12)


def test_eval_determinism_bitwise(params):
    sample = sample_from_tokens([[1, 2], [3, 4, 5]])
    a = encode_history(sample, params).data
    b = encode_history(sample, params).data
    assert np.array_equal(a, b)


def test_same_text_different_context_differs(params):
    shared = [7, 8, 9]
    s1 = sample_from_tokens([shared, [1, 2]])
    s2 = sample_from_tokens([shared, [20, 21, 22]])
    r1 = encode_history(s1, params).data[0]
    r2 = encode_history(s2, params).data[0]
    cos = r1 @ r2 / (np.linalg.norm(r1) * np.linalg.norm(r2))
    assert cos < 1 - 1e-6


def test_out_of_vocabulary_rejected(params):
    sample = sample_from_tokens([[1, 99]])
    with pytest.raises(ValueError, match="99"):
        encode_history(sample, params)


def test_history_limit_enforced(params):
    sample = sample_from_tokens([[1]] * 5)
    with pytest.raises(ValueError, match="exceeds"):
        encode_history(sample, params, max_history=4)


def test_position_table_limit(params):
    sample = sample_from_tokens([[1] * 40, [2] * 40])
    with pytest.raises(ValueError, match="position"):
        encode_history(sample, params)


def test_gradients_reach_token_embeddings(params):
    sample = sample_from_tokens([[1, 2], [3]])
    with Tape() as tape:
        loss = ag.sum_squares(encode_history(sample, params))
    backward(loss, tape)
    assert np.linalg.norm(params.token_embeddings.grad) > 0


def test_gradient_check_through_encoder():
    rng = np.random.default_rng(1)
    params = init_encoder(vocab_size=10, d_e=4, d_h=6, max_positions=16, rng=rng)
    sample = sample_from_tokens([[1, 2], [3, 4, 5]])
    tensors = [t for _, t in params.named()]
    res = grad_check(
        lambda *ts: ag.sum_squares(encode_history(sample, params)),
        tensors, h=1e-5, tol=1e-4,
    )
    assert res.passed, res.max_rel_error
