"""Classification metrics pooled over all (conversation, utterance) pairs.

Positive/negative F1 are computed on the pooled pair labels; the macro
score is their unweighted mean. F1 of a class that never occurs (in gold
and predictions) is defined as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import ConversationSample


@dataclass
class MetricsReport:
    """Pos/Neg/macro F1 with the underlying confusion counts."""

    pos_f1: float
    neg_f1: float
    macro_f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    cause_type_accuracy: dict[str, float] | None = None

    def to_dict(self) -> dict:
        out = {
            "pos_f1": self.pos_f1,
            "neg_f1": self.neg_f1,
            "macro_f1": self.macro_f1,
            "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
        }
        if self.cause_type_accuracy is not None:
            out["cause_type_accuracy"] = dict(self.cause_type_accuracy)
        return out


def _flatten(values) -> list[bool]:
    if not values:
        return []
    first = values[0]
    if isinstance(first, (list, tuple, np.ndarray)):
        return [bool(v) for group in values for v in group]
    return [bool(v) for v in values]


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def compute_f1(gold, predicted) -> MetricsReport:
    """F1 report over pooled labels; accepts flat lists or lists per conversation."""
    g = _flatten(list(gold))
    p = _flatten(list(predicted))
    if len(g) != len(p):
        raise ValueError(f"{len(g)} gold labels vs {len(p)} predictions")
    tp = sum(1 for a, b in zip(g, p) if a and b)
    fp = sum(1 for a, b in zip(g, p) if not a and b)
    fn = sum(1 for a, b in zip(g, p) if a and not b)
    tn = sum(1 for a, b in zip(g, p) if not a and not b)
    pos = _f1(tp, fp, fn)
    neg = _f1(tn, fn, fp)
    return MetricsReport(
        pos_f1=pos, neg_f1=neg, macro_f1=(pos + neg) / 2.0, tp=tp, fp=fp, fn=fn, tn=tn
    )


def cause_type_accuracy(
    samples: Sequence[ConversationSample],
    predictions: Sequence[Sequence[bool]],
    types: tuple[str, ...] = ("intra", "inter"),
) -> dict[str, float]:
    """Fraction of type-annotated positive utterances predicted positive."""
    if len(samples) != len(predictions):
        raise ValueError(f"{len(samples)} samples vs {len(predictions)} predictions")
    hits = {t: 0 for t in types}
    totals = {t: 0 for t in types}
    for sample, preds in zip(samples, predictions):
        if sample.cause_types is None:
            raise ValueError(
                f"{sample.conversation_id}: cause-type annotations are required"
            )
        if len(preds) != sample.length:
            raise ValueError(
                f"{sample.conversation_id}: {len(preds)} predictions for "
                f"{sample.length} utterances"
            )
        for i in range(sample.length):
            ctype = sample.cause_types[i]
            if sample.cause_mask[i] and ctype in totals:
                totals[ctype] += 1
                if preds[i]:
                    hits[ctype] += 1
    return {
        t: (hits[t] / totals[t]) if totals[t] else float("nan") for t in types
    }


def bootstrap_significance(
    preds_a: Sequence[Sequence[bool]],
    preds_b: Sequence[Sequence[bool]],
    gold: Sequence[Sequence[bool]],
    resamples: int = 1000,
    seed: int = 0,
) -> float:
    """Paired bootstrap over conversations for the macro-F1 difference.

    Returns the (add-one smoothed) fraction of resamples where system A
    fails to beat system B; small values mean A's advantage is stable.
    """
    n = len(gold)
    if len(preds_a) != n or len(preds_b) != n:
        raise ValueError(
            f"misaligned inputs: {len(preds_a)} vs {len(preds_b)} vs {n} conversations"
        )
    for i in range(n):
        if len(preds_a[i]) != len(gold[i]) or len(preds_b[i]) != len(gold[i]):
            raise ValueError(f"conversation {i}: prediction lengths disagree with gold")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    rng = np.random.default_rng(seed)
    not_better = 0
    for _ in range(resamples):
        idx = rng.integers(0, n, size=n)
        ga = [gold[i] for i in idx]
        fa = compute_f1(ga, [preds_a[i] for i in idx]).macro_f1
        fb = compute_f1(ga, [preds_b[i] for i in idx]).macro_f1
        if fa - fb <= 0:
            not_better += 1
    return (1 + not_better) / (resamples + 1)
