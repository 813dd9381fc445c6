"""Five-dimensional similarity between BPMN models.

Dimensions: structural (graph-statistic ratios plus degree-sequence
correlation), type distribution (Jensen-Shannon), and three semantic measures
(names, element types, merged name-type strings) scored by optimal one-to-one
assignment over embedding cosines. The overall score is the arithmetic mean
of the five.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingProvider
from .model import (
    BpmnGraph,
    ElementCategory,
    context_label,
    effective_label,
    graph_stats,
)

METRIC_CATEGORIES = (
    ElementCategory.TASK,
    ElementCategory.GATEWAY,
    ElementCategory.EVENT,
    ElementCategory.DATA,
    ElementCategory.FLOW,
)


class NegativeInput(ValueError):
    pass


def ratio_similarity(m1: float, m2: float) -> float:
    """min/max of two non-negative metric values. Conventions: (0, 0) -> 1.0
    (nothing to distinguish), exactly one zero -> 0.0."""
    if m1 < 0 or m2 < 0:
        raise NegativeInput(f"metric values must be non-negative, got ({m1}, {m2})")
    if m1 == m2:
        return 1.0
    if m1 == 0 or m2 == 0:
        return 0.0
    return min(m1, m2) / max(m1, m2)


def degree_similarity(d1, d2) -> float:
    """|Pearson correlation| of the two degree sequences, sorted descending
    and zero-padded to equal length.

    Pearson is undefined at zero variance, so constant sequences degrade
    gracefully: both constant and equal -> 1.0, both constant but unequal ->
    ratio of the constants, exactly one constant -> 0.0. Two empty sequences
    are fully similar.
    """
    a = sorted(d1, reverse=True)
    b = sorted(d2, reverse=True)
    size = max(len(a), len(b))
    if size == 0:
        return 1.0
    a += [0] * (size - len(a))
    b += [0] * (size - len(b))
    const_a = all(x == a[0] for x in a)
    const_b = all(x == b[0] for x in b)
    if const_a and const_b:
        return 1.0 if a[0] == b[0] else ratio_similarity(float(a[0]), float(b[0]))
    if const_a or const_b:
        return 0.0
    rho = np.corrcoef(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))[0, 1]
    return min(1.0, abs(float(rho)))


def structural_similarity(g1: BpmnGraph, g2: BpmnGraph) -> float:
    """Mean of the ratio scores for node count, edge count, density and
    average degree, plus the degree-sequence correlation score."""
    s1 = graph_stats(g1)
    s2 = graph_stats(g2)
    scores = [
        ratio_similarity(s1.node_count, s2.node_count),
        ratio_similarity(s1.edge_count, s2.edge_count),
        ratio_similarity(s1.density, s2.density),
        ratio_similarity(s1.average_degree, s2.average_degree),
        degree_similarity(s1.degree_sequence, s2.degree_sequence),
    ]
    return sum(scores) / len(scores)


def js_divergence(p, q) -> float:
    """Base-2 Jensen-Shannon divergence between two aligned probability
    vectors: JS = KL(P||M)/2 + KL(Q||M)/2 with M the even mixture. Bounded
    in [0, 1]; zero exactly when the vectors are equal."""
    total = 0.0
    for pi, qi in zip(p, q):
        m = 0.5 * (pi + qi)
        if pi > 0:
            total += 0.5 * pi * math.log2(pi / m)
        if qi > 0:
            total += 0.5 * qi * math.log2(qi / m)
    return min(1.0, max(0.0, total))


def type_counts(graph: BpmnGraph, fine_grained: bool = False) -> dict[str, int]:
    """Element-type counts: the five categories by default (flows counted
    from edges), or raw tag names in fine-grained mode."""
    counts: dict[str, int] = {}
    if fine_grained:
        for node in graph.nodes:
            if node.category is not ElementCategory.OTHER:
                counts[node.tag] = counts.get(node.tag, 0) + 1
        for edge in graph.edges:
            counts[edge.tag] = counts.get(edge.tag, 0) + 1
        return counts
    for category in METRIC_CATEGORIES:
        counts[category.value] = 0
    for node in graph.nodes:
        if node.category is not ElementCategory.OTHER:
            counts[node.category.value] += 1
    counts[ElementCategory.FLOW.value] = graph.edge_count
    return counts


def type_distribution_similarity(g1: BpmnGraph, g2: BpmnGraph,
                                 fine_grained: bool = False) -> float:
    """max(0, 1 - JS) over the normalized type distributions. Two empty
    models are fully similar; one empty model scores 0."""
    c1 = type_counts(g1, fine_grained)
    c2 = type_counts(g2, fine_grained)
    t1 = sum(c1.values())
    t2 = sum(c2.values())
    if t1 == 0 and t2 == 0:
        return 1.0
    if t1 == 0 or t2 == 0:
        return 0.0
    support = [key for key in dict.fromkeys(list(c1) + list(c2))
               if c1.get(key, 0) + c2.get(key, 0) > 0]
    p = [c1.get(key, 0) / t1 for key in support]
    q = [c2.get(key, 0) / t2 for key in support]
    return max(0.0, 1.0 - js_divergence(p, q))


# --- optimal assignment -------------------------------------------------------


def max_weight_assignment(scores: np.ndarray) -> list[tuple[int, int]]:
    """Maximum-weight one-to-one assignment over a rectangular score matrix.

    Hungarian algorithm (shortest augmenting path with potentials, O(n^2 m)).
    Every row of the smaller side is matched; returns (row, col) pairs.
    """
    matrix = np.asarray(scores, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("score matrix must be two-dimensional")
    n, m = matrix.shape
    if n == 0 or m == 0:
        return []
    if n > m:
        return [(i, j) for j, i in max_weight_assignment(matrix.T)]

    cost = (-matrix).tolist()
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    match = [0] * (m + 1)  # match[j] = row assigned to column j (1-based; 0 = free)
    way = [0] * (m + 1)

    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = inf
            j1 = 0
            row = cost[i0 - 1]
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1

    return sorted((match[j] - 1, j - 1) for j in range(1, m + 1) if match[j] != 0)


def semantic_set_similarity(texts1: list[str], texts2: list[str],
                            provider: EmbeddingProvider) -> float:
    """Embed both text lists, clamp negative cosines to zero, take the
    maximum-weight assignment, and normalize by the larger list size so
    missing or extra elements are penalized."""
    if not texts1 and not texts2:
        return 1.0
    if not texts1 or not texts2:
        return 0.0
    vecs1 = provider.embed_batch(texts1)
    vecs2 = provider.embed_batch(texts2)
    scores = np.clip(vecs1 @ vecs2.T, 0.0, 1.0)
    pairs = max_weight_assignment(scores)
    matched = float(sum(scores[i, j] for i, j in pairs))
    return matched / max(len(texts1), len(texts2))


# --- full comparison ----------------------------------------------------------


@dataclass(frozen=True)
class CompareOptions:
    context_augmentation: bool = True
    fine_grained_types: bool = False


@dataclass(frozen=True)
class SimilarityBreakdown:
    structural: float
    type_distribution: float
    semantic_name: float
    semantic_type: float
    semantic_name_type: float
    overall: float

    def to_dict(self) -> dict[str, float]:
        return {
            "structural": self.structural,
            "type_distribution": self.type_distribution,
            "semantic_name": self.semantic_name,
            "semantic_type": self.semantic_type,
            "semantic_name_type": self.semantic_name_type,
            "overall": self.overall,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimilarityBreakdown":
        return cls(
            structural=data["structural"],
            type_distribution=data["type_distribution"],
            semantic_name=data["semantic_name"],
            semantic_type=data["semantic_type"],
            semantic_name_type=data["semantic_name_type"],
            overall=data["overall"],
        )


def _semantic_nodes(graph: BpmnGraph):
    return [node for node in graph.nodes
            if node.category not in (ElementCategory.OTHER, ElementCategory.FLOW)]


def name_texts(graph: BpmnGraph, context_augmentation: bool = True) -> list[str]:
    if context_augmentation:
        return [context_label(graph, node.id) for node in _semantic_nodes(graph)]
    return [effective_label(node) for node in _semantic_nodes(graph)]


def type_texts(graph: BpmnGraph) -> list[str]:
    texts = [node.tag for node in graph.nodes if node.category is not ElementCategory.OTHER]
    texts += [edge.tag for edge in graph.edges]
    return texts


def name_type_texts(graph: BpmnGraph, context_augmentation: bool = True) -> list[str]:
    names = name_texts(graph, context_augmentation)
    return [f"{name} [{node.tag}]"
            for name, node in zip(names, _semantic_nodes(graph))]


def compare(g1: BpmnGraph, g2: BpmnGraph, provider: EmbeddingProvider,
            options: CompareOptions | None = None) -> SimilarityBreakdown:
    """Score two models on all five dimensions plus their mean."""
    opts = options or CompareOptions()
    structural = structural_similarity(g1, g2)
    type_dist = type_distribution_similarity(g1, g2, opts.fine_grained_types)
    sem_name = semantic_set_similarity(
        name_texts(g1, opts.context_augmentation),
        name_texts(g2, opts.context_augmentation), provider)
    sem_type = semantic_set_similarity(type_texts(g1), type_texts(g2), provider)
    sem_name_type = semantic_set_similarity(
        name_type_texts(g1, opts.context_augmentation),
        name_type_texts(g2, opts.context_augmentation), provider)
    dims = (structural, type_dist, sem_name, sem_type, sem_name_type)
    return SimilarityBreakdown(*dims, overall=sum(dims) / len(dims))
