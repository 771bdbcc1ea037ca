"""Cause prediction head and the training objective.

The final per-utterance feature is the concatenation of the two stream
states; a two-layer network with a ReLU hidden layer and a sigmoid output
yields the cause probability. The objective is mean binary cross-entropy
plus two separately weighted L2 penalties (encoder parameters vs the rest).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor


@dataclass
class HeadParams:
    """Fully-connected head: (d_h, 2*d_h) then (1, d_h), with biases."""

    hidden_weight: Tensor  # (d_h, 2*d_h)
    hidden_bias: Tensor  # (d_h,)
    output_weight: Tensor  # (1, d_h)
    output_bias: Tensor  # scalar

    def named(self, prefix: str = "head") -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}.hidden_weight", self.hidden_weight),
            (f"{prefix}.hidden_bias", self.hidden_bias),
            (f"{prefix}.output_weight", self.output_weight),
            (f"{prefix}.output_bias", self.output_bias),
        ]


def init_head(d_h: int, rng: np.random.Generator) -> HeadParams:
    return HeadParams(
        hidden_weight=Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(2 * d_h), size=(d_h, 2 * d_h)),
            requires_grad=True,
        ),
        hidden_bias=Tensor(np.zeros(d_h), requires_grad=True),
        output_weight=Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(d_h), size=(1, d_h)), requires_grad=True
        ),
        output_bias=Tensor(np.zeros(()), requires_grad=True),
    )


def cause_probabilities(
    emotion_state: Tensor, speaker_state: Tensor, params: HeadParams
) -> Tensor:
    """Per-utterance cause probabilities, shape (t,), strictly in (0, 1)."""
    if emotion_state.shape != speaker_state.shape:
        raise ValueError(
            f"stream shapes disagree: {emotion_state.shape} vs {speaker_state.shape}"
        )
    features = ag.concat_cols([emotion_state, speaker_state])
    hidden = ag.relu(
        ag.add_bias(ag.matmul(features, ag.transpose(params.hidden_weight)),
                    params.hidden_bias)
    )
    logits = ag.add_scalar(
        ag.reshape(ag.matmul(hidden, ag.transpose(params.output_weight)),
                   (features.shape[0],)),
        params.output_bias,
    )
    return ag.sigmoid(logits)


@dataclass
class Prediction:
    """Probabilities and thresholded labels for one conversation."""

    probs: list[float]
    labels: list[bool]


def predict_causes(
    emotion_state: Tensor,
    speaker_state: Tensor,
    params: HeadParams,
    threshold: float = 0.5,
) -> Prediction:
    probs = cause_probabilities(emotion_state, speaker_state, params).data
    return Prediction(
        probs=[float(p) for p in probs],
        labels=[bool(p >= threshold) for p in probs],
    )


def bce_loss(probs: Tensor, cause_mask: Sequence[bool]) -> Tensor:
    """Mean binary cross-entropy of the mask; probabilities are clamped."""
    targets = np.asarray([1.0 if v else 0.0 for v in cause_mask])
    return ag.binary_cross_entropy_mean(probs, targets)


def l2_penalty(
    encoder_params: Sequence[Tensor],
    other_params: Sequence[Tensor],
    weight_encoder: float = 0.01,
    weight_other: float = 1e-5,
) -> Tensor:
    """Separately weighted squared norms of the two parameter groups."""
    total = Tensor(np.zeros(()))
    if encoder_params:
        total = ag.add(
            total, ag.scale(ag.group_sum_squares(encoder_params), weight_encoder)
        )
    if other_params:
        total = ag.add(
            total, ag.scale(ag.group_sum_squares(other_params), weight_other)
        )
    return total


def training_loss(
    probs: Tensor,
    cause_mask: Sequence[bool],
    encoder_params: Sequence[Tensor],
    other_params: Sequence[Tensor],
    weight_encoder: float = 0.01,
    weight_other: float = 1e-5,
) -> Tensor:
    """Full objective for a single conversation."""
    if probs.shape != (len(cause_mask),):
        raise ValueError(
            f"{probs.shape[0]} probabilities for {len(cause_mask)} labels"
        )
    return ag.add(
        bce_loss(probs, cause_mask),
        l2_penalty(encoder_params, other_params, weight_encoder, weight_other),
    )
