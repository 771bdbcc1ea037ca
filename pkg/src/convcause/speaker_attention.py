"""Speaker stream: graph attention over speaker-relation neighborhoods.

Utterances are nodes; edges are partitioned by whether the two endpoints
share a speaker (intra, which includes the self-loop) or not (inter).
Each relation owns a weight matrix and a scoring vector; attention is
normalized per node within each relation's neighborhood, and relations
with an empty neighborhood contribute a zero vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor

LEAKY_SLOPE = 0.2


@dataclass
class SpeakerRelationGraph:
    """Per-relation neighbor lists over the t utterances (0-based)."""

    t: int
    neighborhoods: dict[str, list[list[int]]]

    @property
    def relations(self) -> list[str]:
        return list(self.neighborhoods)

    def mask(self, relation: str) -> np.ndarray:
        m = np.zeros((self.t, self.t), dtype=bool)
        for i, neigh in enumerate(self.neighborhoods[relation]):
            m[i, neigh] = True
        return m


def build_relation_graph(speakers: Sequence[str]) -> SpeakerRelationGraph:
    """Intra/inter partition of all utterance pairs, self-loops included."""
    t = len(speakers)
    if t < 1:
        raise ValueError("need at least one utterance")
    intra = [
        [j for j in range(t) if speakers[j] == speakers[i]] for i in range(t)
    ]
    inter = [
        [j for j in range(t) if speakers[j] != speakers[i]] for i in range(t)
    ]
    return SpeakerRelationGraph(t=t, neighborhoods={"intra": intra, "inter": inter})


def build_uniform_graph(t: int) -> SpeakerRelationGraph:
    """Single-relation graph: every node neighbors every node."""
    if t < 1:
        raise ValueError("need at least one utterance")
    full = [list(range(t)) for _ in range(t)]
    return SpeakerRelationGraph(t=t, neighborhoods={"all": full})


@dataclass
class SpeakerAttentionParams:
    """Per relation: a (d_h, d_h) weight matrix and a length-2*d_h scorer."""

    weights: dict[str, Tensor]
    scorers: dict[str, Tensor]

    @property
    def relations(self) -> list[str]:
        return list(self.weights)

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = []
        for rel in self.relations:
            out.append((f"{prefix}.{rel}.weight", self.weights[rel]))
            out.append((f"{prefix}.{rel}.scorer", self.scorers[rel]))
        return out


def init_speaker_attention(
    d_h: int, relations: Sequence[str], rng: np.random.Generator
) -> SpeakerAttentionParams:
    weights, scorers = {}, {}
    for rel in relations:
        weights[rel] = Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(d_h), size=(d_h, d_h)), requires_grad=True
        )
        scorers[rel] = Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(2 * d_h), size=2 * d_h), requires_grad=True
        )
    return SpeakerAttentionParams(weights=weights, scorers=scorers)


def speaker_attend(
    nodes: Tensor, graph: SpeakerRelationGraph, params: SpeakerAttentionParams
) -> Tensor:
    """Aggregate neighbor features per relation and sum over relations.

    For relation r with transformed features W_r h: the edge score from i
    to j is LeakyReLU(a_r . [W_r h_i ; W_r h_j]), normalized over j in the
    neighborhood of i.
    """
    t, d_h = nodes.shape
    if graph.t != t:
        raise ValueError(f"graph covers {graph.t} nodes, features cover {t}")
    if set(params.relations) != set(graph.relations):
        raise ValueError(
            f"parameter relations {params.relations} != graph relations {graph.relations}"
        )
    out = None
    for rel in params.relations:
        w = params.weights[rel]
        a = params.scorers[rel]
        transformed = ag.matmul(nodes, ag.transpose(w))
        source_score = ag.matvec(transformed, ag.slice_vec(a, 0, d_h))
        target_score = ag.matvec(transformed, ag.slice_vec(a, d_h, 2 * d_h))
        scores = ag.leaky_relu(ag.add_outer(source_score, target_score), LEAKY_SLOPE)
        alpha = ag.masked_softmax_rows(scores, graph.mask(rel))
        contribution = ag.matmul(alpha, transformed)
        out = contribution if out is None else ag.add(out, contribution)
    return out


def speaker_attention_weights(
    nodes: Tensor, graph: SpeakerRelationGraph, params: SpeakerAttentionParams
) -> dict[str, np.ndarray]:
    """Attention matrices per relation, for inspection (no gradients)."""
    t, d_h = nodes.shape
    result = {}
    for rel in params.relations:
        w = params.weights[rel]
        a = params.scorers[rel]
        transformed = Tensor(nodes.data @ w.data.T)
        s1 = transformed.data @ a.data[:d_h]
        s2 = transformed.data @ a.data[d_h:]
        scores = Tensor(s1[:, None] + s2[None, :])
        scores = ag.leaky_relu(scores, LEAKY_SLOPE)
        result[rel] = ag.masked_softmax_rows(scores, graph.mask(rel)).data
    return result
