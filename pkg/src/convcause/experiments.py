"""Experiment harnesses: one-factor ablations and the layer-count sweep.

Every variant trains from the same seed so comparisons are paired; reports
come back keyed by variant name (or layer count) in a stable order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .data import ConversationSample
from .metrics import MetricsReport
from .model import ModelConfig, ablated
from .training import TrainConfig, evaluate_model, train

DEFAULT_VARIANTS = (
    "full",
    "emotion=none",
    "emotion=daee",
    "speaker_relations=off",
    "interaction=off",
)


def variant_config(base: ModelConfig, name: str) -> ModelConfig:
    """Model configuration for a named ablation variant."""
    if name == "full":
        return ablated(base)
    if name == "emotion=none":
        return ablated(base, emotion_mode="none")
    if name == "emotion=daee":
        return ablated(base, emotion_mode="daee")
    if name == "emotion=ean":
        return ablated(base, emotion_mode="ean")
    if name == "speaker_relations=off":
        return ablated(base, speaker_relations=False)
    if name == "interaction=off":
        return ablated(base, interaction=False)
    raise ValueError(f"unknown ablation variant {name!r}")


@dataclass
class VariantResult:
    name: str
    dev: MetricsReport
    test: MetricsReport | None
    best_epoch: int

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "dev": self.dev.to_dict(),
            "best_epoch": self.best_epoch,
        }
        if self.test is not None:
            out["test"] = self.test.to_dict()
        return out


def ablation_run(
    train_set: Sequence[ConversationSample],
    dev_set: Sequence[ConversationSample],
    test_set: Sequence[ConversationSample] | None,
    base_config: ModelConfig,
    train_config: TrainConfig,
    variants: Sequence[str] = DEFAULT_VARIANTS,
) -> dict[str, VariantResult]:
    """Train and evaluate each variant with the shared seed."""
    results: dict[str, VariantResult] = {}
    for name in variants:
        cfg = variant_config(base_config, name)
        outcome = train(train_set, dev_set, cfg, train_config)
        model = outcome.checkpoint.build_model()
        test_report = (
            evaluate_model(model, test_set, train_config.threshold)
            if test_set is not None
            else None
        )
        dev_report = evaluate_model(model, dev_set, train_config.threshold)
        results[name] = VariantResult(
            name=name,
            dev=dev_report,
            test=test_report,
            best_epoch=outcome.checkpoint.epoch,
        )
    return results


def layer_sweep(
    train_set: Sequence[ConversationSample],
    dev_set: Sequence[ConversationSample],
    base_config: ModelConfig,
    train_config: TrainConfig,
    layer_range: Sequence[int] = range(1, 6),
) -> dict[int, MetricsReport]:
    """Dev report per layer count, trained with the shared seed."""
    results: dict[int, MetricsReport] = {}
    for layers in layer_range:
        cfg = ablated(base_config, layers=int(layers))
        outcome = train(train_set, dev_set, cfg, train_config)
        model = outcome.checkpoint.build_model()
        results[int(layers)] = evaluate_model(model, dev_set, train_config.threshold)
    return results


def render_sweep_table(results: dict[int, MetricsReport]) -> str:
    """Plain-text table of a layer sweep, one row per layer count."""
    lines = [f"{'L':>3}  {'pos_f1':>8}  {'neg_f1':>8}  {'macro_f1':>8}"]
    for layers in sorted(results):
        r = results[layers]
        lines.append(
            f"{layers:>3}  {r.pos_f1:8.4f}  {r.neg_f1:8.4f}  {r.macro_f1:8.4f}"
        )
    return "\n".join(lines)
