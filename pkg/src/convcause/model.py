"""The full two-stream model: configuration, parameters, stacked forward.

Layer recurrence, starting from the encoder output H (one row per
utterance) with both streams initialized to H:

    emotion_features = attention over label embeddings, queried by E_l
    speaker_features = relation-graph attention over S_l
    E_{l+1}, S_{l+1}  = biaffine exchange of the two feature sets

With zero layers the model reduces to the plain joint classifier over H.
Ablation switches replace the emotion features (gold-label lookup or the
raw stream), collapse the relation partition to a single relation, or skip
the exchange.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import DEFAULT_EMOTIONS, ConversationSample
from .emotion_attention import (
    EmotionAttentionParams,
    emotion_attend,
    init_emotion_attention,
    init_emotion_embeddings,
    label_indices,
)
from .encoder import EncoderParams, encode_history, init_encoder
from .interaction import BiaffineParams, biaffine_exchange, init_biaffine
from .predictor import HeadParams, cause_probabilities, init_head
from .speaker_attention import (
    SpeakerAttentionParams,
    build_relation_graph,
    build_uniform_graph,
    init_speaker_attention,
    speaker_attend,
)

EMOTION_MODES = ("none", "daee", "ean")


@dataclass
class ModelConfig:
    """Architecture and ablation switches; defaults follow the reference setup."""

    vocab_size: int
    d_h: int = 64
    d_e: int | None = None
    heads: int = 4
    layers: int = 3
    emotions: tuple[str, ...] = DEFAULT_EMOTIONS
    emotion_mode: str = "ean"
    speaker_relations: bool = True
    interaction: bool = True
    dropout: float = 0.1
    max_history: int = 64
    max_positions: int = 512

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError(f"vocab_size must be positive, got {self.vocab_size}")
        if self.layers < 0:
            raise ValueError(f"layers must be nonnegative, got {self.layers}")
        if self.emotion_mode not in EMOTION_MODES:
            raise ValueError(
                f"emotion_mode must be one of {EMOTION_MODES}, got {self.emotion_mode!r}"
            )
        if self.emotion_mode == "ean" and (self.heads < 1 or self.d_h % self.heads):
            raise ValueError(
                f"head count {self.heads} must divide model width {self.d_h}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if len(set(self.emotions)) != len(self.emotions):
            raise ValueError("emotion label set contains duplicates")
        if self.d_e is None:
            self.d_e = self.d_h

    @property
    def relation_names(self) -> tuple[str, ...]:
        return ("intra", "inter") if self.speaker_relations else ("all",)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["emotions"] = list(self.emotions)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        raw = dict(raw)
        raw["emotions"] = tuple(raw["emotions"])
        return cls(**raw)


@dataclass
class LayerParams:
    """Parameters of one stacked block; ablated parts are None."""

    emotion: EmotionAttentionParams | None
    speaker: SpeakerAttentionParams
    biaffine: BiaffineParams | None


@dataclass
class ForwardTrace:
    """Optional per-layer attention record from one forward pass."""

    emotion_attention: list[list[np.ndarray]] = field(default_factory=list)
    exchange_e2s: list[np.ndarray] = field(default_factory=list)
    exchange_s2e: list[np.ndarray] = field(default_factory=list)


class TwoStreamModel:
    """Parameter container plus the conversation-level forward pass."""

    def __init__(
        self,
        config: ModelConfig,
        encoder: EncoderParams,
        emotion_embeddings: Tensor | None,
        layers: list[LayerParams],
        head: HeadParams,
    ):
        self.config = config
        self.encoder = encoder
        self.emotion_embeddings = emotion_embeddings
        self.layers = layers
        self.head = head

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> "TwoStreamModel":
        encoder = init_encoder(
            config.vocab_size, config.d_e, config.d_h, config.max_positions, rng
        )
        embeddings = None
        if config.emotion_mode != "none":
            embeddings = init_emotion_embeddings(config.emotions, config.d_h, rng)
        layers = []
        for _ in range(config.layers):
            emotion = (
                init_emotion_attention(config.d_h, config.heads, rng)
                if config.emotion_mode == "ean"
                else None
            )
            speaker = init_speaker_attention(config.d_h, config.relation_names, rng)
            biaffine = init_biaffine(config.d_h, rng) if config.interaction else None
            layers.append(LayerParams(emotion=emotion, speaker=speaker, biaffine=biaffine))
        head = init_head(config.d_h, rng)
        return cls(config, encoder, embeddings, layers, head)

    # -- parameter access ---------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = self.encoder.named()
        if self.emotion_embeddings is not None:
            out.append(("emotion_embeddings", self.emotion_embeddings))
        for l, layer in enumerate(self.layers):
            if layer.emotion is not None:
                out.extend(layer.emotion.named(f"layer{l}.emotion"))
            out.extend(layer.speaker.named(f"layer{l}.speaker"))
            if layer.biaffine is not None:
                out.extend(layer.biaffine.named(f"layer{l}.biaffine"))
        out.extend(self.head.named())
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def encoder_parameters(self) -> list[Tensor]:
        return [t for _, t in self.encoder.named()]

    def other_parameters(self) -> list[Tensor]:
        encoder_set = {id(t) for t in self.encoder_parameters()}
        return [t for t in self.parameters() if id(t) not in encoder_set]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        named = dict(self.named_parameters())
        if set(named) != set(state):
            missing = sorted(set(named) ^ set(state))
            raise ValueError(f"parameter names disagree, first differences: {missing[:4]}")
        for name, tensor in named.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != tensor.data.shape:
                raise ValueError(
                    f"{name}: checkpoint shape {arr.shape} != model shape {tensor.data.shape}"
                )
            tensor.data = arr.copy()

    # -- forward ------------------------------------------------------------

    def stack_forward(
        self,
        hidden: Tensor,
        graph,
        gold_indices: np.ndarray | None = None,
        training: bool = False,
        rng: np.random.Generator | None = None,
        trace: ForwardTrace | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Run the layer recurrence from both streams initialized to ``hidden``."""
        cfg = self.config
        if training and cfg.dropout > 0.0 and cfg.layers > 0 and rng is None:
            raise ValueError("training-mode forward with dropout needs an rng")
        emotion_stream = hidden
        speaker_stream = hidden
        for layer in self.layers:
            if cfg.emotion_mode == "ean":
                emotion_features, attn = emotion_attend(
                    emotion_stream, self.emotion_embeddings, layer.emotion
                )
                if trace is not None:
                    trace.emotion_attention.append([a.data.copy() for a in attn])
            elif cfg.emotion_mode == "daee":
                if gold_indices is None:
                    raise ValueError("gold-label emotion mode needs the label indices")
                emotion_features = ag.take_rows(self.emotion_embeddings, gold_indices)
            else:
                emotion_features = emotion_stream
            speaker_features = speaker_attend(speaker_stream, graph, layer.speaker)
            if cfg.interaction:
                emotion_stream, speaker_stream, a1, a2 = biaffine_exchange(
                    emotion_features, speaker_features, layer.biaffine
                )
                if trace is not None:
                    trace.exchange_e2s.append(a1.data.copy())
                    trace.exchange_s2e.append(a2.data.copy())
            else:
                emotion_stream, speaker_stream = emotion_features, speaker_features
            if training and cfg.dropout > 0.0:
                emotion_stream = ag.dropout(emotion_stream, cfg.dropout, True, rng)
                speaker_stream = ag.dropout(speaker_stream, cfg.dropout, True, rng)
        return emotion_stream, speaker_stream

    def forward(
        self,
        sample: ConversationSample,
        training: bool = False,
        rng: np.random.Generator | None = None,
        trace: ForwardTrace | None = None,
    ) -> Tensor:
        """Cause probabilities for every utterance of one conversation."""
        cfg = self.config
        hidden = encode_history(
            sample, self.encoder, training=training, max_history=cfg.max_history
        )
        graph = self.build_graph(sample.speakers)
        gold_indices = None
        if cfg.emotion_mode == "daee":
            gold_indices = label_indices(sample.emotions, cfg.emotions)
        emotion_state, speaker_state = self.stack_forward(
            hidden, graph, gold_indices, training=training, rng=rng, trace=trace
        )
        return cause_probabilities(emotion_state, speaker_state, self.head)

    def build_graph(self, speakers: Sequence[str]):
        if self.config.speaker_relations:
            return build_relation_graph(speakers)
        return build_uniform_graph(len(speakers))


def ablated(config: ModelConfig, **overrides) -> ModelConfig:
    """Copy of the configuration with the given fields replaced."""
    return replace(config, **overrides)
