"""Trainable contextual utterance encoder.

A deliberately small replacement for a pretrained transformer: token and
position embeddings, one single-head self-attention layer over the flattened
token sequence of the whole conversation, mean pooling per utterance, and a
linear projection to the model width. Because every token attends to every
other token before pooling, an utterance's row depends on its conversation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import ConversationSample


@dataclass
class EncoderParams:
    """All trainable tensors of the encoder."""

    token_embeddings: Tensor  # (vocab, d_e)
    position_embeddings: Tensor  # (max_positions, d_e)
    query_proj: Tensor  # (d_e, d_e)
    key_proj: Tensor  # (d_e, d_e)
    value_proj: Tensor  # (d_e, d_e)
    output_proj: Tensor  # (d_e, d_h)

    def named(self, prefix: str = "encoder") -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}.token_embeddings", self.token_embeddings),
            (f"{prefix}.position_embeddings", self.position_embeddings),
            (f"{prefix}.query_proj", self.query_proj),
            (f"{prefix}.key_proj", self.key_proj),
            (f"{prefix}.value_proj", self.value_proj),
            (f"{prefix}.output_proj", self.output_proj),
        ]

    @property
    def vocab_size(self) -> int:
        return self.token_embeddings.shape[0]

    @property
    def max_positions(self) -> int:
        return self.position_embeddings.shape[0]


def init_encoder(
    vocab_size: int,
    d_e: int,
    d_h: int,
    max_positions: int,
    rng: np.random.Generator,
) -> EncoderParams:
    """Random-normal init: sigma 0.02 for embeddings, 1/sqrt(fan_in) for maps."""
    def emb(*shape):
        return Tensor(rng.normal(0.0, 0.02, size=shape), requires_grad=True)

    def proj(n_in, n_out):
        return Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out)), requires_grad=True
        )

    return EncoderParams(
        token_embeddings=emb(vocab_size, d_e),
        position_embeddings=emb(max_positions, d_e),
        query_proj=proj(d_e, d_e),
        key_proj=proj(d_e, d_e),
        value_proj=proj(d_e, d_e),
        output_proj=proj(d_e, d_h),
    )


def encode_history(
    sample: ConversationSample,
    params: EncoderParams,
    training: bool = False,
    max_history: int = 64,
) -> Tensor:
    """Contextual representations for all utterances, one row each.

    ``training`` is accepted for interface symmetry with the rest of the
    model; the encoder itself is deterministic in both modes.
    """
    t = sample.length
    if t > max_history:
        raise ValueError(f"conversation length {t} exceeds the limit {max_history}")
    flat: list[int] = []
    segments: list[int] = []
    for j, utt in enumerate(sample.utterances):
        for tok in utt.tokens:
            if not 0 <= tok < params.vocab_size:
                raise ValueError(
                    f"token id {tok} outside vocabulary of size {params.vocab_size}"
                )
            flat.append(tok)
            segments.append(j)
    n = len(flat)
    if n > params.max_positions:
        raise ValueError(
            f"conversation has {n} tokens, position table holds {params.max_positions}"
        )
    d_e = params.token_embeddings.shape[1]
    x = ag.add(
        ag.take_rows(params.token_embeddings, np.asarray(flat)),
        ag.take_rows(params.position_embeddings, np.arange(n)),
    )
    q = ag.matmul(x, params.query_proj)
    k = ag.matmul(x, params.key_proj)
    v = ag.matmul(x, params.value_proj)
    attn = ag.softmax_rows(ag.scale(ag.matmul(q, ag.transpose(k)), 1.0 / ag.sqrt_dim(d_e)))
    # residual keeps each token's own identity alongside its context mixture
    ctx = ag.add(x, ag.matmul(attn, v))
    pooled = ag.segment_mean(ctx, np.asarray(segments), t)
    return ag.matmul(pooled, params.output_proj)
