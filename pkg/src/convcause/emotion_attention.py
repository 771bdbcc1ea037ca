"""Emotion stream: multi-head attention from utterances to label embeddings.

Each utterance row queries the table of trainable emotion-label embeddings
(keys and values), yielding a soft emotion mixture per head; head outputs
are concatenated without a further projection. Scores are scaled by
sqrt(d_h) of the full model width, not of the per-head width.

The direct-lookup alternative skips attention entirely and takes each
utterance's gold label embedding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor


@dataclass
class EmotionAttentionParams:
    """Per-head query/key/value projections, each (d_h, d_h // heads)."""

    query: list[Tensor]
    key: list[Tensor]
    value: list[Tensor]

    @property
    def heads(self) -> int:
        return len(self.query)

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = []
        for j in range(self.heads):
            out.append((f"{prefix}.q{j}", self.query[j]))
            out.append((f"{prefix}.k{j}", self.key[j]))
            out.append((f"{prefix}.v{j}", self.value[j]))
        return out


def init_emotion_embeddings(
    labels: Sequence[str], d_h: int, rng: np.random.Generator
) -> Tensor:
    """Trainable embedding table, one row per label, sigma 0.02."""
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate emotion labels: {list(labels)}")
    if not labels:
        raise ValueError("emotion label set is empty")
    return Tensor(rng.normal(0.0, 0.02, size=(len(labels), d_h)), requires_grad=True)


def init_emotion_attention(
    d_h: int, heads: int, rng: np.random.Generator
) -> EmotionAttentionParams:
    if heads < 1 or d_h % heads != 0:
        raise ValueError(f"head count {heads} must divide the model width {d_h}")
    width = d_h // heads
    scale = 1.0 / np.sqrt(d_h)

    def proj():
        return Tensor(rng.normal(0.0, scale, size=(d_h, width)), requires_grad=True)

    return EmotionAttentionParams(
        query=[proj() for _ in range(heads)],
        key=[proj() for _ in range(heads)],
        value=[proj() for _ in range(heads)],
    )


def emotion_attend(
    queries: Tensor,
    embeddings: Tensor,
    params: EmotionAttentionParams,
) -> tuple[Tensor, list[Tensor]]:
    """Attend from utterance rows to the label table.

    Returns the concatenated head outputs (t, d_h) and the per-head
    attention matrices (t, n_labels) for inspection.
    """
    d_h = queries.shape[1]
    if embeddings.shape[1] != d_h:
        raise ValueError(
            f"utterance width {d_h} != embedding width {embeddings.shape[1]}"
        )
    scale = 1.0 / ag.sqrt_dim(d_h)
    heads = []
    attentions = []
    for j in range(params.heads):
        q = ag.matmul(queries, params.query[j])
        k = ag.matmul(embeddings, params.key[j])
        v = ag.matmul(embeddings, params.value[j])
        alpha = ag.softmax_rows(ag.scale(ag.matmul(q, ag.transpose(k)), scale))
        heads.append(ag.matmul(alpha, v))
        attentions.append(alpha)
    return ag.concat_cols(heads), attentions


def label_indices(emotions: Sequence[str], labels: Sequence[str]) -> np.ndarray:
    """Map emotion names to rows of the embedding table."""
    order = {label: i for i, label in enumerate(labels)}
    idx = []
    for e in emotions:
        if e not in order:
            raise ValueError(f"emotion label {e!r} not in configured set {list(labels)}")
        idx.append(order[e])
    return np.asarray(idx)


def gold_label_rows(
    emotions: Sequence[str], labels: Sequence[str], embeddings: Tensor
) -> Tensor:
    """Direct lookup: row i is the embedding of utterance i's gold label."""
    return ag.take_rows(embeddings, label_indices(emotions, labels))
