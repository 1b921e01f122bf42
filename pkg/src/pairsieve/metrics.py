"""Retrieval and classification metrics plus score-distribution exports.

Everything here ranks by exact brute-force similarity; at desk scale
there is no reason to approximate, and exactness is what makes the
oracle comparisons in the tests meaningful.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .curation import ScoreLedger
from .data import Label
from .errors import MissingTruth


@dataclass
class RetrievalResult:
    direction: str  # "a_to_b" or "b_to_a"
    recalls: dict[int, float]  # k -> recall@k
    query_count: int


def recall_at_k(
    queries: np.ndarray,
    keys: np.ndarray,
    truth: Sequence[int],
    ks: Sequence[int] = (1, 5, 10),
    direction: str = "b_to_a",
) -> RetrievalResult:
    """Fraction of queries whose true key ranks in the top k by cosine.

    ``truth[i]`` is the key row for query row i. Rows must be unit-norm
    (dot == cosine). Score ties break toward the smaller key index.
    """
    n = queries.shape[0]
    if len(truth) != n:
        raise MissingTruth(f"{n} queries but {len(truth)} ground-truth entries")
    sims = queries @ keys.T  # (n, n_keys)
    truth = np.asarray(truth, dtype=np.int64)
    if np.any(truth < 0) or np.any(truth >= keys.shape[0]):
        raise MissingTruth("ground-truth index out of key range")
    true_scores = sims[np.arange(n), truth]
    # Rank = number of keys strictly better, plus equal-scored keys with smaller index.
    better = (sims > true_scores[:, None]).sum(axis=1)
    equal_before = (
        (sims == true_scores[:, None]) & (np.arange(keys.shape[0])[None, :] < truth[:, None])
    ).sum(axis=1)
    rank = better + equal_before  # 0-based
    recalls = {int(k): float(np.mean(rank < k)) for k in ks}
    return RetrievalResult(direction=direction, recalls=recalls, query_count=n)


@dataclass
class F1Result:
    precision: float
    recall: float
    f1: float
    threshold: float
    degenerate: bool = False  # no predicted positives


def f1_at_threshold(
    true_scores: np.ndarray, mismatch_scores: np.ndarray, threshold: float
) -> F1Result:
    """Treat score > threshold as a predicted match and score against oracle labels."""
    true_scores = np.asarray(true_scores, dtype=np.float64)
    mismatch_scores = np.asarray(mismatch_scores, dtype=np.float64)
    if true_scores.size == 0 or mismatch_scores.size == 0:
        raise ValueError("both score populations must be non-empty")
    tp = int(np.sum(true_scores > threshold))
    fp = int(np.sum(mismatch_scores > threshold))
    fn = true_scores.size - tp
    if tp + fp == 0:
        return F1Result(0.0, 0.0, 0.0, threshold, degenerate=True)
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return F1Result(precision, recall, f1, threshold)


def select_threshold(true_scores: np.ndarray, mismatch_scores: np.ndarray) -> float:
    """Threshold maximizing f1, scanned over midpoints of the pooled scores."""
    pooled = np.unique(np.concatenate([true_scores, mismatch_scores]))
    if pooled.size == 1:
        candidates = [pooled[0] - 1.0]
    else:
        mids = (pooled[:-1] + pooled[1:]) / 2.0
        candidates = [pooled[0] - 1.0, *mids]
    best_t, best_f1 = candidates[0], -1.0
    for t in candidates:
        r = f1_at_threshold(true_scores, mismatch_scores, t)
        if r.f1 > best_f1:
            best_t, best_f1 = t, r.f1
    return float(best_t)


def noise_composition(
    retained_ids: Sequence[int], labels: Mapping[int, Label]
) -> dict[str, float]:
    """Exact label fractions of a retained set."""
    n = len(retained_ids)
    counts = {lab: 0 for lab in Label}
    for rid in retained_ids:
        counts[labels[int(rid)]] += 1
    return {lab.tag: (counts[lab] / n if n else 0.0) for lab in Label}


@dataclass
class DistributionDump:
    epoch: int
    rows: list[tuple[int, float, float, str]]  # (id, epoch score, total, label)


def export_distribution(
    ledger: ScoreLedger,
    labels: Mapping[int, Label],
    epoch: int,
    retained_ids: Sequence[int],
) -> DistributionDump:
    """Score-vs-total rows for the retained pairs, ready for plotting."""
    rows = [
        (rid, ledger.last[rid], ledger.totals[rid], labels[rid].tag)
        for rid in sorted(int(i) for i in retained_ids)
    ]
    return DistributionDump(epoch=epoch, rows=rows)


def write_distribution(path: str | Path, dump: DistributionDump) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "s_epoch", "c_total", "label"])
        for rid, s, c, lab in dump.rows:
            w.writerow([rid, repr(s), repr(c), lab])


def write_metrics_csv(path: str | Path, run_id: str, rows: list[tuple[int, str, float]]) -> None:
    """Long-format metrics file: run_id, epoch, metric, value."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run_id", "epoch", "metric", "value"])
        for epoch, metric, value in rows:
            w.writerow([run_id, epoch, metric, repr(float(value))])
