"""Conversation dataset types, canonical JSONL serialization, and statistics.

The canonical file format is UTF-8, one JSON object per line:

    {"conversation_id": str,
     "utterances": [{"speaker": str, "emotion": str, "text": str}, ...],
     "cause_mask": [0/1, ...],
     "cause_types": [str or null, ...]}        # optional

``cause_mask[i]`` is 1 iff utterance i contains the cause of the emotion in
the final utterance. Token ids are not persisted; they are derived from the
text through a :class:`Vocabulary` at load time.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

DEFAULT_EMOTIONS = (
    "happy",
    "sad",
    "angry",
    "fearful",
    "surprised",
    "disgusted",
    "neutral",
)
NEUTRAL_LABEL = "neutral"

CAUSE_CATEGORIES = ("no_context", "inter", "intra", "hybrid", "unmentioned")


class DataError(ValueError):
    """Malformed dataset content."""


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokenization."""
    return text.lower().split()


@dataclass
class Vocabulary:
    """Token-string to id mapping with a reserved unknown id 0."""

    token_to_id: dict[str, int]
    unk_token: str = "<unk>"

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    @classmethod
    def build(cls, texts: Iterable[str], max_size: int | None = None) -> "Vocabulary":
        """Frequency-ranked vocabulary over whitespace tokens.

        Ties break alphabetically so the mapping is deterministic for a
        given corpus. Id 0 is always the unknown token.
        """
        counts = Counter()
        for text in texts:
            counts.update(tokenize(text))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if max_size is not None:
            ranked = ranked[: max(0, max_size - 1)]
        mapping = {"<unk>": 0}
        for token, _ in ranked:
            mapping[token] = len(mapping)
        return cls(token_to_id=mapping)

    @classmethod
    def identity(cls, size: int) -> "Vocabulary":
        """Vocabulary where token ``w{k}`` maps to id k (id 0 is unknown)."""
        mapping = {"<unk>": 0}
        for k in range(1, size):
            mapping[f"w{k}"] = k
        return cls(token_to_id=mapping)

    def encode(self, text: str) -> list[int]:
        unk = self.token_to_id.get(self.unk_token, 0)
        return [self.token_to_id.get(tok, unk) for tok in tokenize(text)]


@dataclass
class Utterance:
    """One conversation turn with its tokenized content."""

    index: int  # 1-based position in the history
    speaker: str
    emotion: str
    tokens: list[int]
    text: str | None = None


@dataclass
class ConversationSample:
    """A conversational history whose final utterance is the classification target."""

    conversation_id: str
    utterances: list[Utterance]
    cause_mask: list[bool]
    cause_types: list[str | None] | None = None

    @property
    def length(self) -> int:
        return len(self.utterances)

    @property
    def speakers(self) -> list[str]:
        return [u.speaker for u in self.utterances]

    @property
    def emotions(self) -> list[str]:
        return [u.emotion for u in self.utterances]


def validate_sample(
    sample: ConversationSample,
    emotions: Sequence[str] = DEFAULT_EMOTIONS,
    neutral: str = NEUTRAL_LABEL,
) -> None:
    """Raise :class:`DataError` if the sample violates its invariants."""
    cid = sample.conversation_id
    if not sample.utterances:
        raise DataError(f"{cid}: conversation has no utterances")
    if len(sample.cause_mask) != len(sample.utterances):
        raise DataError(
            f"{cid}: cause_mask has {len(sample.cause_mask)} entries for "
            f"{len(sample.utterances)} utterances"
        )
    if sample.cause_types is not None and len(sample.cause_types) != len(sample.utterances):
        raise DataError(
            f"{cid}: cause_types has {len(sample.cause_types)} entries for "
            f"{len(sample.utterances)} utterances"
        )
    allowed = set(emotions)
    for pos, utt in enumerate(sample.utterances, start=1):
        if utt.index != pos:
            raise DataError(f"{cid}: utterance {pos} carries index {utt.index}")
        if utt.emotion not in allowed:
            raise DataError(f"{cid}: unknown emotion label {utt.emotion!r}")
        if not utt.tokens:
            raise DataError(f"{cid}: utterance {pos} has no tokens")
    if sample.utterances[-1].emotion == neutral:
        raise DataError(f"{cid}: target utterance must carry a non-neutral emotion")


def load_dataset(
    path: str | Path,
    emotions: Sequence[str] = DEFAULT_EMOTIONS,
    vocab: Vocabulary | None = None,
) -> list[ConversationSample]:
    """Load and validate a canonical JSONL dataset, in file order.

    If ``vocab`` is None a vocabulary is built from this file alone; pass
    the training vocabulary explicitly when loading dev/test splits so
    token ids stay consistent across splits.
    """
    path = Path(path)
    if vocab is None:
        vocab = Vocabulary.build(_iter_texts(path))
    samples = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {line_no}: invalid JSON: {exc}") from exc
            try:
                sample = _sample_from_dict(raw, vocab)
                validate_sample(sample, emotions)
            except DataError as exc:
                raise DataError(f"{path}: line {line_no}: {exc}") from exc
            samples.append(sample)
    return samples


def _iter_texts(path: Path):
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError:
                continue  # reported with a line number by the main pass
            for utt in raw.get("utterances", []):
                if isinstance(utt, dict) and isinstance(utt.get("text"), str):
                    yield utt["text"]


def _sample_from_dict(raw: dict, vocab: Vocabulary) -> ConversationSample:
    if not isinstance(raw, dict):
        raise DataError(f"expected a JSON object, got {type(raw).__name__}")
    try:
        cid = raw["conversation_id"]
        utterances_raw = raw["utterances"]
        mask_raw = raw["cause_mask"]
    except KeyError as exc:
        raise DataError(f"missing field {exc.args[0]!r}") from exc
    utterances = []
    for pos, u in enumerate(utterances_raw, start=1):
        try:
            speaker, emotion, text = u["speaker"], u["emotion"], u["text"]
        except KeyError as exc:
            raise DataError(f"utterance {pos}: missing field {exc.args[0]!r}") from exc
        utterances.append(
            Utterance(
                index=pos,
                speaker=str(speaker),
                emotion=str(emotion),
                tokens=vocab.encode(text),
                text=text,
            )
        )
    mask = [bool(int(v)) for v in mask_raw]
    types = raw.get("cause_types")
    if types is not None:
        types = [t if t is None else str(t) for t in types]
    return ConversationSample(
        conversation_id=str(cid), utterances=utterances, cause_mask=mask, cause_types=types
    )


def _sample_to_dict(sample: ConversationSample) -> dict:
    out = {
        "conversation_id": sample.conversation_id,
        "utterances": [
            {"speaker": u.speaker, "emotion": u.emotion, "text": u.text or ""}
            for u in sample.utterances
        ],
        "cause_mask": [int(v) for v in sample.cause_mask],
    }
    if sample.cause_types is not None:
        out["cause_types"] = list(sample.cause_types)
    return out


def write_dataset(samples: Sequence[ConversationSample], path: str | Path) -> None:
    """Serialize samples to canonical JSONL; byte-identical for identical input."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(_sample_to_dict(sample), ensure_ascii=True))
            fh.write("\n")


@dataclass
class DatasetStats:
    """Label counts and conversation-level cause-category histogram."""

    n_conversations: int = 0
    n_utterances: int = 0
    positives: int = 0
    negatives: int = 0
    cause_categories: dict[str, int] = field(
        default_factory=lambda: {c: 0 for c in CAUSE_CATEGORIES}
    )

    def to_dict(self) -> dict:
        return {
            "n_conversations": self.n_conversations,
            "n_utterances": self.n_utterances,
            "positives": self.positives,
            "negatives": self.negatives,
            "cause_categories": dict(self.cause_categories),
        }


def cause_category(sample: ConversationSample) -> str:
    """Conversation-level cause category derived from the mask and speakers.

    unmentioned: no cause anywhere; no_context: only the target utterance;
    inter/intra: history causes all from the other/same speaker as the
    target; hybrid: history causes from both.
    """
    t = sample.length
    target_speaker = sample.utterances[-1].speaker
    history_positions = [i for i in range(t - 1) if sample.cause_mask[i]]
    target_positive = bool(sample.cause_mask[t - 1])
    if not history_positions:
        return "no_context" if target_positive else "unmentioned"
    parities = {
        "intra" if sample.utterances[i].speaker == target_speaker else "inter"
        for i in history_positions
    }
    if parities == {"intra"}:
        return "intra"
    if parities == {"inter"}:
        return "inter"
    return "hybrid"


def dataset_stats(samples: Sequence[ConversationSample]) -> DatasetStats:
    """Exact positive/negative counts and cause-category histogram."""
    stats = DatasetStats()
    for sample in samples:
        stats.n_conversations += 1
        stats.n_utterances += sample.length
        pos = sum(1 for v in sample.cause_mask if v)
        stats.positives += pos
        stats.negatives += sample.length - pos
        stats.cause_categories[cause_category(sample)] += 1
    return stats
