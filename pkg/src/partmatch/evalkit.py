"""Retrieval metrics: ranking scores, threshold sweeps, report assembly.

A benchmark query contributes a full ranking of mesh parts plus the
ground-truth positive set (other parts of the query's material). Curve
metrics sweep a shared threshold over per-query nearest-query distances
and macro-average across queries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class BenchmarkQuery:
    """Ground truth for one query: the rest of its material group."""

    mesh_id: str
    query_part_id: int
    positive_part_ids: frozenset[int]

    def __post_init__(self) -> None:
        if not self.positive_part_ids:
            raise ValueError("a benchmark query needs at least one positive")
        if self.query_part_id in self.positive_part_ids:
            raise ValueError("query part must not appear in its own positives")


@dataclass
class BenchmarkEntry:
    """One mesh in a benchmark file with its queries."""

    mesh_path: str
    queries: list[BenchmarkQuery]


def save_benchmark(path: str | Path, entries: Sequence[BenchmarkEntry]) -> None:
    """Benchmark file: list of `{mesh, queries: [{query_part, positives}]}`."""
    payload = [
        {
            "mesh": e.mesh_path,
            "queries": [
                {
                    "query_part": q.query_part_id,
                    "positives": sorted(q.positive_part_ids),
                }
                for q in e.queries
            ],
        }
        for e in entries
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_benchmark(path: str | Path) -> list[BenchmarkEntry]:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValueError("benchmark file must be a JSON list of mesh entries")
    entries = []
    for item in raw:
        mesh_path = item["mesh"]
        queries = [
            BenchmarkQuery(
                mesh_id=mesh_path,
                query_part_id=int(q["query_part"]),
                positive_part_ids=frozenset(int(p) for p in q["positives"]),
            )
            for q in item["queries"]
        ]
        entries.append(BenchmarkEntry(mesh_path=mesh_path, queries=queries))
    return entries


@dataclass
class RankedQuery:
    """One evaluated query: ranking with distances, plus ground truth.

    ``ranking`` is (part_id, distance) ascending by distance; the query
    part itself is excluded from both the ranking and the positives so
    metrics only score genuine retrieval.
    """

    mesh_id: str
    query_part_id: int
    ranking: list[tuple[int, float]]
    positives: frozenset[int]


def average_precision(ranking: Sequence[int], positives: frozenset[int]) -> float:
    """Mean of precision@rank over the ranks holding positives.

    Positives missing from the ranking contribute zero.
    """
    if not positives:
        raise ValueError("average precision needs a nonempty positive set")
    hits = 0
    total = 0.0
    for rank, pid in enumerate(ranking, start=1):
        if pid in positives:
            hits += 1
            total += hits / rank
    return total / len(positives)


def r_precision(ranking: Sequence[int], positives: frozenset[int]) -> float:
    """Precision at rank R where R = number of positives."""
    r = len(positives)
    if r == 0:
        raise ValueError("R-precision needs a nonempty positive set")
    head = ranking[:r]
    return sum(1 for pid in head if pid in positives) / r


def recall_at_k(ranking: Sequence[int], positives: frozenset[int], k: int) -> float:
    if not positives:
        raise ValueError("recall needs a nonempty positive set")
    if k < 1:
        raise ValueError("k must be at least 1")
    head = ranking[:k]
    return sum(1 for pid in head if pid in positives) / len(positives)


def _precision_recall_at(query: RankedQuery, threshold: float) -> tuple[float, float]:
    """Macro-averaged building block: one query at one threshold.

    Empty selections count as precision 1 (nothing selected, nothing
    wrong), which anchors the high-precision end of the curve.
    """
    selected = [pid for pid, d in query.ranking if d <= threshold]
    if not query.positives:
        return (1.0 if not selected else 0.0, 1.0)
    tp = sum(1 for pid in selected if pid in query.positives)
    precision = tp / len(selected) if selected else 1.0
    recall = tp / len(query.positives)
    return precision, recall


def candidate_thresholds(queries: Sequence[RankedQuery], n: int = 200) -> np.ndarray:
    """Quantile-sampled distance grid shared across queries.

    Pools every ranking distance and takes n evenly spaced quantiles
    (including both extremes), deduplicated.
    """
    dists = np.asarray(
        [d for q in queries for _, d in q.ranking], dtype=np.float64
    )
    if dists.size == 0:
        return np.asarray([0.0])
    if n < 2:
        return np.unique(dists[:1])
    qs = np.linspace(0.0, 1.0, n)
    return np.unique(np.quantile(dists, qs))


@dataclass
class PRPoint:
    threshold: float
    precision: float
    recall: float


def pr_curve_quantile(
    queries: Sequence[RankedQuery], n_thresholds: int = 200
) -> tuple[list[PRPoint], float]:
    """Macro-averaged precision-recall curve and its trapezoid area.

    Points are sorted by recall. Before integrating, the curve is extended
    to recall 0 carrying the first precision and to recall 1 at
    precision 0 so the area is always over the full recall range.
    """
    if not queries:
        raise ValueError("need at least one query")
    points = []
    for thr in candidate_thresholds(queries, n_thresholds):
        ps, rs = zip(*(_precision_recall_at(q, float(thr)) for q in queries))
        points.append(
            PRPoint(threshold=float(thr), precision=float(np.mean(ps)), recall=float(np.mean(rs)))
        )
    points.sort(key=lambda p: p.recall)

    recalls = [p.recall for p in points]
    precisions = [p.precision for p in points]
    if recalls[0] > 0.0:
        recalls.insert(0, 0.0)
        precisions.insert(0, precisions[0])
    if recalls[-1] < 1.0:
        recalls.append(1.0)
        precisions.append(0.0)
    auc = float(np.trapezoid(precisions, recalls))
    return points, auc


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def f1_at_lambda(queries: Sequence[RankedQuery], threshold: float) -> float:
    """Mean per-query F1 of thresholded selection vs ground truth."""
    scores = []
    for q in queries:
        p, r = _precision_recall_at(q, threshold)
        scores.append(f1_score(p, r))
    return float(np.mean(scores))


def select_lambda_f1(
    queries: Sequence[RankedQuery], n_thresholds: int = 200
) -> tuple[float, float]:
    """(threshold, macro F1) maximizing validation F1; ties pick the smallest."""
    if not queries:
        raise ValueError("threshold selection needs validation queries")
    best_thr, best_f1 = 0.0, -1.0
    for thr in candidate_thresholds(queries, n_thresholds):
        f1 = f1_at_lambda(queries, float(thr))
        if f1 > best_f1 + 1e-12:
            best_thr, best_f1 = float(thr), f1
    return best_thr, best_f1


@dataclass
class QueryMetrics:
    mesh_id: str
    query_part_id: int
    average_precision: float
    r_precision: float
    recall_at: dict[int, float]
    f1_at_threshold: float


@dataclass
class MetricsReport:
    per_query: list[QueryMetrics]
    mean_average_precision: float
    mean_r_precision: float
    mean_recall_at: dict[int, float]
    auc_pr: float
    threshold: float
    threshold_f1: float
    mean_f1_at_threshold: float
    query_count: int

    def table_row(self) -> dict:
        """Headline numbers under their conventional column names."""
        row = {
            "AUC PR": self.auc_pr,
            "mAP": self.mean_average_precision,
            "R-Prec": self.mean_r_precision,
            "F1": self.mean_f1_at_threshold,
        }
        for k in sorted(self.mean_recall_at):
            row[f"R@{k}"] = self.mean_recall_at[k]
        return row

    def to_json(self) -> dict:
        return {
            "table": self.table_row(),
            "query_count": self.query_count,
            "mean_average_precision": self.mean_average_precision,
            "mean_r_precision": self.mean_r_precision,
            "mean_recall_at": {str(k): v for k, v in self.mean_recall_at.items()},
            "auc_pr": self.auc_pr,
            "threshold": self.threshold,
            "threshold_f1": self.threshold_f1,
            "mean_f1_at_threshold": self.mean_f1_at_threshold,
            "per_query": [
                {
                    "mesh_id": q.mesh_id,
                    "query_part_id": q.query_part_id,
                    "average_precision": q.average_precision,
                    "r_precision": q.r_precision,
                    "recall_at": {str(k): v for k, v in q.recall_at.items()},
                    "f1_at_threshold": q.f1_at_threshold,
                }
                for q in self.per_query
            ],
        }


def evaluate_queries(
    test_queries: Sequence[RankedQuery],
    val_queries: Sequence[RankedQuery] | None = None,
    recall_ks: Sequence[int] = (5, 10, 20, 100),
    n_thresholds: int = 200,
) -> MetricsReport:
    """Full report over test queries; threshold fit on validation queries.

    Without a validation split the threshold falls back to fitting on the
    test queries themselves (reported as-is, useful for smoke runs).
    """
    if not test_queries:
        raise ValueError("need at least one test query")
    fit_on = val_queries if val_queries else test_queries
    threshold, threshold_f1 = select_lambda_f1(fit_on, n_thresholds)
    _, auc = pr_curve_quantile(test_queries, n_thresholds)

    per_query = []
    for q in test_queries:
        ids = [pid for pid, _ in q.ranking]
        p, r = _precision_recall_at(q, threshold)
        per_query.append(
            QueryMetrics(
                mesh_id=q.mesh_id,
                query_part_id=q.query_part_id,
                average_precision=average_precision(ids, q.positives),
                r_precision=r_precision(ids, q.positives),
                recall_at={k: recall_at_k(ids, q.positives, k) for k in recall_ks},
                f1_at_threshold=f1_score(p, r),
            )
        )
    return MetricsReport(
        per_query=per_query,
        mean_average_precision=float(np.mean([q.average_precision for q in per_query])),
        mean_r_precision=float(np.mean([q.r_precision for q in per_query])),
        mean_recall_at={
            k: float(np.mean([q.recall_at[k] for q in per_query])) for k in recall_ks
        },
        auc_pr=auc,
        threshold=threshold,
        threshold_f1=threshold_f1,
        mean_f1_at_threshold=float(np.mean([q.f1_at_threshold for q in per_query])),
        query_count=len(per_query),
    )
