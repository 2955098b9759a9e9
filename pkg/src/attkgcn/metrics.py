"""Ranking and classification metrics plus top-N recommendation lists."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError


@dataclass(frozen=True)
class ScoredLabel:
    score: float
    label: int


@dataclass(frozen=True)
class ClassificationMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    no_positive_predictions: bool


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks; tied scores share the mean of their rank block."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    i = 0
    n = scores.shape[0]
    while i < n:
        j = i
        while j + 1 < n and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(items: list[ScoredLabel]) -> float:
    """Probability that a random positive outranks a random negative.

    Computed from average ranks, so each tied positive/negative pair
    contributes exactly one half; this equals the quadratic all-pairs
    definition. Raises :class:`UndefinedMetricError` unless both classes are
    present.
    """
    scores = np.array([it.score for it in items], dtype=np.float64)
    labels = np.array([it.label for it in items], dtype=np.int64)
    pos = int(labels.sum())
    neg = labels.shape[0] - pos
    if pos == 0 or neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg)


def classification_metrics(
    items: list[ScoredLabel], threshold: float = 0.5
) -> ClassificationMetrics:
    """Confusion-matrix metrics at a score threshold (prediction = score >= t).

    When nothing is predicted positive, precision and F1 are reported as 0
    with ``no_positive_predictions`` set.
    """
    if not items:
        raise ValueError("classification_metrics of empty input")
    tp = fp = tn = fn = 0
    for it in items:
        predicted = it.score >= threshold
        if predicted and it.label == 1:
            tp += 1
        elif predicted and it.label == 0:
            fp += 1
        elif not predicted and it.label == 0:
            tn += 1
        else:
            fn += 1
    accuracy = (tp + tn) / len(items)
    no_pos_pred = (tp + fp) == 0
    precision = 0.0 if no_pos_pred else tp / (tp + fp)
    recall = 0.0 if (tp + fn) == 0 else tp / (tp + fn)
    if precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return ClassificationMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=accuracy,
        no_positive_predictions=no_pos_pred,
    )


def topk_recommend(
    model,
    iset,
    user: int,
    n: int,
    exclude: set,
    field_seed,
) -> list[tuple[int, float]]:
    """Top-N (item, probability) list for one user.

    Scores every item outside ``exclude`` under a receptive-field rng built
    from ``field_seed``, sorts by descending probability with ties broken by
    ascending item id, and truncates to N.
    """
    if n < 1:
        raise ValueError("top-N size must be >= 1")
    candidates = [i for i in range(iset.item_count) if i not in exclude]
    if not candidates:
        return []
    cand = np.array(candidates, dtype=np.int64)
    rng = np.random.default_rng(field_seed)
    probs = model.predict_batch(
        np.full(cand.shape[0], user, dtype=np.int64),
        iset.item_to_entity[cand],
        rng,
    )
    ranked = sorted(zip(cand.tolist(), probs.tolist()), key=lambda t: (-t[1], t[0]))
    return ranked[:n]
