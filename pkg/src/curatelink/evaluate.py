"""Mean per-item AUC over held-out links."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import EdgeSplit
from .model import ModelParams, score_matrix


class EvaluationError(ValueError):
    pass


def auc(pos_scores, neg_scores) -> float:
    """Probability that a positive outscores a negative, ties counting one half.

    Uses a sort of the negatives and binary searches, O((P + N) log N).
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.sort(np.asarray(neg_scores, dtype=np.float64).ravel())
    if pos.size == 0 or neg.size == 0:
        raise EvaluationError("undefined AUC: empty positive or negative set")
    below = np.searchsorted(neg, pos, side="left")
    ties = np.searchsorted(neg, pos, side="right") - below
    # twice the Mann-Whitney count stays integral
    twice = int(2 * below.sum() + ties.sum())
    return (twice / 2) / (pos.size * neg.size)


def auc_bruteforce(pos_scores, neg_scores) -> float:
    """Quadratic pair-counting AUC; reference implementation for tests."""
    gt = eq = 0
    for p in pos_scores:
        for n in neg_scores:
            if p > n:
                gt += 1
            elif p == n:
                eq += 1
    if not len(pos_scores) or not len(neg_scores):
        raise EvaluationError("undefined AUC: empty positive or negative set")
    return (gt + 0.5 * eq) / (len(pos_scores) * len(neg_scores))


@dataclass
class EvalReport:
    mean_auc: float
    per_item_auc: np.ndarray
    items: np.ndarray
    n_items_skipped: int

    @property
    def n_items_evaluated(self) -> int:
        return int(self.items.size)

    def to_text(self) -> str:
        lines = [f"mean_auc={self.mean_auc!r}"]
        lines.extend(f"{i}\t{a!r}" for i, a in zip(self.items.tolist(), self.per_item_auc.tolist()))
        return "\n".join(lines) + "\n"


def mean_auc_from_scores(scores, split: EdgeSplit) -> EvalReport:
    """Evaluate a precomputed ``n_items x n_groups`` score matrix (or per-item callable).

    Positives are an item's held-out groups; negatives are the groups
    linked to it in neither the training nor the test graph.
    """
    train = split.train
    get = scores if callable(scores) else (lambda i: scores[i])
    aucs, items, skipped = [], [], 0
    for i in range(train.n_items):
        test = split.test_positives[i]
        if test.size == 0:
            skipped += 1
            continue
        s = np.asarray(get(i))
        linked = np.zeros(train.n_groups, dtype=bool)
        linked[train.groups_of_item[i]] = True
        linked[test] = True
        if linked.all():
            skipped += 1
            continue
        aucs.append(auc(s[test], s[~linked]))
        items.append(i)
    if not aucs:
        raise EvaluationError("no evaluable item")
    per_item = np.array(aucs)
    return EvalReport(float(np.mean(per_item)), per_item, np.array(items, dtype=np.int64), skipped)


def mean_auc(p: ModelParams, split: EdgeSplit, X, Y, chunk: int = 2048) -> EvalReport:
    """Mean AUC of model ``p`` on the held-out edges of ``split``.

    Scores exclude the item bias, which cannot change a per-item AUC.
    """
    X = np.asarray(X, dtype=np.float64)
    n = p.n_items
    latent = p.config.k_item > 0
    cache = {}

    def row(i):
        start = (i // chunk) * chunk
        if start not in cache:
            cache.clear()
            idx = np.arange(start, min(start + chunk, n))
            cache[start] = score_matrix(p, X[idx], Y, items=idx if latent else None)
        return cache[start][i - start]

    return mean_auc_from_scores(row, split)
