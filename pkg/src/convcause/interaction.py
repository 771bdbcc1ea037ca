"""Cross-stream exchange through a mutual biaffine alignment.

Each stream scores its rows against the other stream's rows through a
learned square matrix; row-softmax turns the scores into alignment weights,
and each stream's new state is the weighted mixture of the *other* stream's
rows. Softmax runs over the last axis, so every output row is a convex
combination of source rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor


@dataclass
class BiaffineParams:
    """One (d_h, d_h) matrix per direction of the exchange."""

    emotion_to_speaker: Tensor
    speaker_to_emotion: Tensor

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}.emotion_to_speaker", self.emotion_to_speaker),
            (f"{prefix}.speaker_to_emotion", self.speaker_to_emotion),
        ]


def init_biaffine(d_h: int, rng: np.random.Generator) -> BiaffineParams:
    def square():
        return Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(d_h), size=(d_h, d_h)), requires_grad=True
        )

    return BiaffineParams(emotion_to_speaker=square(), speaker_to_emotion=square())


def biaffine_exchange(
    emotion_stream: Tensor, speaker_stream: Tensor, params: BiaffineParams
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Swap information between the streams.

    Returns (new_emotion_stream, new_speaker_stream, alignment_e2s,
    alignment_s2e); both alignment matrices are row-stochastic.
    """
    if emotion_stream.shape != speaker_stream.shape:
        raise ValueError(
            f"stream shapes disagree: {emotion_stream.shape} vs {speaker_stream.shape}"
        )
    a1 = ag.softmax_rows(
        ag.matmul(
            ag.matmul(emotion_stream, params.emotion_to_speaker),
            ag.transpose(speaker_stream),
        )
    )
    a2 = ag.softmax_rows(
        ag.matmul(
            ag.matmul(speaker_stream, params.speaker_to_emotion),
            ag.transpose(emotion_stream),
        )
    )
    return ag.matmul(a1, speaker_stream), ag.matmul(a2, emotion_stream), a1, a2
