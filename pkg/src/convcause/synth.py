"""Synthetic conversations with planted, rule-recoverable cause structure.

Each generated conversation hides its causes behind three kinds of evidence
so that ablated models have something to lose:

* trigger tokens are emotion-specific, so telling a real trigger from a
  distractor planted for a different emotion requires matching the target
  utterance's emotion;
* triggers come in same-speaker and other-speaker variants and decoy
  triggers are planted on the wrong side, so resolving them requires the
  speaker identity structure (speakers do not alternate and are not
  visible in the token stream);
* the target utterance's own trigger variant only counts in the target
  position.

The exact rule is implemented independently of the generator in
:func:`planted_cause_mask` and recovers every generated mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import (
    DEFAULT_EMOTIONS,
    NEUTRAL_LABEL,
    ConversationSample,
    Utterance,
)

DEFAULT_MIXTURE = {
    "no_context": 0.43,
    "inter": 0.32,
    "intra": 0.09,
    "hybrid": 0.11,
    "unmentioned": 0.05,
}

_MIN_LENGTH_FOR_TYPE = {
    "no_context": 1,
    "unmentioned": 1,
    "inter": 2,
    "intra": 2,
    "hybrid": 3,
}


@dataclass(frozen=True)
class TokenLayout:
    """Deterministic assignment of special token ids for an emotion set."""

    expressed: dict[str, int]
    trigger_inter: dict[str, int]
    trigger_intra: dict[str, int]
    trigger_self: dict[str, int]
    filler_start: int

    @classmethod
    def for_emotions(
        cls, emotions: Sequence[str], neutral: str = NEUTRAL_LABEL
    ) -> "TokenLayout":
        non_neutral = [e for e in emotions if e != neutral]
        expressed, t_inter, t_intra, t_self = {}, {}, {}, {}
        next_id = 1  # id 0 is reserved for the unknown token
        for e in non_neutral:
            expressed[e] = next_id
            t_inter[e] = next_id + 1
            t_intra[e] = next_id + 2
            t_self[e] = next_id + 3
            next_id += 4
        return cls(expressed, t_inter, t_intra, t_self, filler_start=next_id)


@dataclass
class SynthConfig:
    """Knobs for the synthetic conversation generator."""

    n_conversations: int = 100
    min_length: int = 4
    max_length: int = 8
    vocab_size: int = 120
    tokens_min: int = 3
    tokens_max: int = 6
    mixture: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MIXTURE))
    emotions: tuple[str, ...] = DEFAULT_EMOTIONS
    neutral: str = NEUTRAL_LABEL
    speakers: tuple[str, str] = ("A", "B")
    decoy_rate: float = 0.7
    self_decoy_rate: float = 0.25
    distractor_rate: float = 0.5

    def validate(self) -> None:
        if self.n_conversations < 0:
            raise ValueError("n_conversations must be nonnegative")
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError(
                f"invalid length range [{self.min_length}, {self.max_length}]"
            )
        if self.tokens_min < 1 or self.tokens_min > self.tokens_max:
            raise ValueError(
                f"invalid tokens per utterance range [{self.tokens_min}, {self.tokens_max}]"
            )
        unknown = set(self.mixture) - set(DEFAULT_MIXTURE)
        if unknown:
            raise ValueError(f"unknown cause types in mixture: {sorted(unknown)}")
        total = sum(self.mixture.values())
        if total <= 0 or any(w < 0 for w in self.mixture.values()):
            raise ValueError("mixture weights must be nonnegative with positive sum")
        for cause_type, weight in self.mixture.items():
            if weight > 0 and self.max_length < _MIN_LENGTH_FOR_TYPE[cause_type]:
                raise ValueError(
                    f"cause type {cause_type!r} needs conversations of length "
                    f">= {_MIN_LENGTH_FOR_TYPE[cause_type]}, max_length is {self.max_length}"
                )
        layout = TokenLayout.for_emotions(self.emotions, self.neutral)
        if self.vocab_size < layout.filler_start + 8:
            raise ValueError(
                f"vocab_size {self.vocab_size} too small: need at least "
                f"{layout.filler_start + 8} for special tokens plus fillers"
            )
        non_neutral = [e for e in self.emotions if e != self.neutral]
        if not non_neutral:
            raise ValueError("emotion set has no non-neutral labels")


def synth_generate(cfg: SynthConfig, seed: int) -> list[ConversationSample]:
    """Generate conversations with planted causes; deterministic per seed."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    layout = TokenLayout.for_emotions(cfg.emotions, cfg.neutral)
    non_neutral = [e for e in cfg.emotions if e != cfg.neutral]
    type_names = list(DEFAULT_MIXTURE)
    weights = np.array([cfg.mixture.get(t, 0.0) for t in type_names], dtype=float)
    weights = weights / weights.sum()

    samples = []
    for i in range(cfg.n_conversations):
        cause_type = type_names[int(rng.choice(len(type_names), p=weights))]
        target_emotion = non_neutral[int(rng.integers(len(non_neutral)))]
        samples.append(
            _generate_one(
                cfg, layout, rng, f"synth-{seed}-{i:05d}", cause_type, target_emotion
            )
        )
    return samples


def _generate_one(cfg, layout, rng, cid, cause_type, emotion) -> ConversationSample:
    t = int(rng.integers(cfg.min_length, cfg.max_length + 1))
    t = max(t, _MIN_LENGTH_FOR_TYPE[cause_type])

    target_speaker = cfg.speakers[int(rng.integers(2))]
    other_speaker = cfg.speakers[1] if target_speaker == cfg.speakers[0] else cfg.speakers[0]
    speakers = [cfg.speakers[int(rng.integers(2))] for _ in range(t - 1)]
    speakers.append(target_speaker)

    # make sure the parities the planted type needs exist in the history
    need_other = cause_type in ("inter", "hybrid")
    need_same = cause_type in ("intra", "hybrid")
    history = list(range(t - 1))
    if need_other and not any(speakers[j] == other_speaker for j in history):
        speakers[int(rng.integers(t - 1))] = other_speaker
    if need_same and not any(speakers[j] == target_speaker for j in history):
        # do not erase the only other-speaker slot when both parities are needed
        pool = [j for j in history if not (need_other and _is_last_of(speakers, j, other_speaker))]
        speakers[pool[int(rng.integers(len(pool)))]] = target_speaker

    tokens = [
        list(
            rng.integers(layout.filler_start, cfg.vocab_size,
                         size=int(rng.integers(cfg.tokens_min, cfg.tokens_max + 1)))
        )
        for _ in range(t)
    ]
    tokens = [[int(v) for v in row] for row in tokens]

    labels = [cfg.neutral] * t
    labels[-1] = emotion
    mask = [False] * t
    types: list[str | None] = [None] * t
    planted = [False] * t

    def insert(pos, token_id):
        tokens[pos].insert(int(rng.integers(len(tokens[pos]) + 1)), token_id)
        planted[pos] = True

    def pick(parity):
        pool = [
            j
            for j in history
            if not planted[j]
            and (speakers[j] == target_speaker) == (parity == "intra")
        ]
        if not pool:
            return None
        return pool[int(rng.integers(len(pool)))]

    # true triggers
    if cause_type == "no_context":
        insert(t - 1, layout.trigger_self[emotion])
        mask[t - 1] = True
        types[t - 1] = "no_context"
    if cause_type in ("inter", "hybrid"):
        pos = pick("inter")
        insert(pos, layout.trigger_inter[emotion])
        mask[pos] = True
        types[pos] = "inter"
        labels[pos] = emotion
    if cause_type in ("intra", "hybrid"):
        pos = pick("intra")
        insert(pos, layout.trigger_intra[emotion])
        mask[pos] = True
        types[pos] = "intra"
        labels[pos] = emotion

    # decoys: right emotion, wrong side (never causes)
    if rng.random() < cfg.decoy_rate:
        pos = pick("intra")
        if pos is not None:
            insert(pos, layout.trigger_inter[emotion])
            labels[pos] = emotion
    if rng.random() < cfg.decoy_rate:
        pos = pick("inter")
        if pos is not None:
            insert(pos, layout.trigger_intra[emotion])
            labels[pos] = emotion
    if rng.random() < cfg.self_decoy_rate and history:
        pool = [j for j in history if not planted[j]]
        if pool:
            pos = pool[int(rng.integers(len(pool)))]
            insert(pos, layout.trigger_self[emotion])
            labels[pos] = emotion

    # distractors: real-looking triggers for a different emotion
    non_neutral = [e for e in cfg.emotions if e != cfg.neutral]
    if len(non_neutral) > 1 and rng.random() < cfg.distractor_rate:
        others = [e for e in non_neutral if e != emotion]
        alt = others[int(rng.integers(len(others)))]
        pool = [j for j in history if not planted[j]]
        if pool:
            pos = pool[int(rng.integers(len(pool)))]
            table = layout.trigger_inter if rng.random() < 0.5 else layout.trigger_intra
            insert(pos, table[alt])
            labels[pos] = alt

    # the target always expresses its emotion in content
    tokens[t - 1].insert(int(rng.integers(len(tokens[t - 1]) + 1)), layout.expressed[emotion])

    utterances = [
        Utterance(
            index=j + 1,
            speaker=speakers[j],
            emotion=labels[j],
            tokens=tokens[j],
            text=" ".join(f"w{v}" for v in tokens[j]),
        )
        for j in range(t)
    ]
    return ConversationSample(
        conversation_id=cid, utterances=utterances, cause_mask=mask, cause_types=types
    )


def _is_last_of(speakers, j, who) -> bool:
    return speakers[j] == who and sum(1 for s in speakers[:-1] if s == who) == 1


def planted_cause_mask(sample: ConversationSample, layout: TokenLayout) -> list[bool]:
    """Recover the cause mask from tokens and speakers alone.

    This is the generation rule restated as a lookup: an utterance is a
    cause iff it carries the trigger token matching the target's emotion
    AND the right speaker parity (or the self trigger, in the target
    position only).
    """
    t = sample.length
    emotion = sample.utterances[-1].emotion
    target_speaker = sample.utterances[-1].speaker
    inter_id = layout.trigger_inter[emotion]
    intra_id = layout.trigger_intra[emotion]
    self_id = layout.trigger_self[emotion]
    mask = []
    for j, utt in enumerate(sample.utterances):
        toks = set(utt.tokens)
        if j == t - 1:
            mask.append(self_id in toks)
        elif utt.speaker == target_speaker:
            mask.append(intra_id in toks)
        else:
            mask.append(inter_id in toks)
    return mask


def generate_splits(
    cfg: SynthConfig, seed: int, n_train: int, n_dev: int, n_test: int
):
    """Three disjoint synthetic splits derived from one seed."""
    sizes = (n_train, n_dev, n_test)
    out = []
    for offset, n in enumerate(sizes):
        split_cfg = SynthConfig(**{**cfg.__dict__, "n_conversations": n})
        split_cfg.mixture = dict(cfg.mixture)
        out.append(synth_generate(split_cfg, seed * 1000 + offset))
    return tuple(out)
