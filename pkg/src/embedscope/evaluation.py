"""Layout and annotation quality metrics.

Retrieval quality follows the frequency-adjusted convention: per-query average
precision and reciprocal rank are first averaged within each class, then the
class means are averaged with equal weight, so rare classes count as much as
dominant ones. Clustering agreement uses NMI with geometric-mean
normalization and natural logarithms.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import reducers
from .errors import (
    InsufficientPool,
    InvalidArgument,
    InvalidInput,
    InvalidK,
    UndefinedMetric,
)
from .model import EmbeddingMatrix, IngestRow, Modality
from .query import knn_search
from .reducers import FittedReducer, ReducerSpec

def average_precision(relevance: Sequence[int], total_relevant: int) -> float:
    """AP = mean over relevant ranks of precision-at-that-rank.

    `relevance` is the ranked 0/1 list; `total_relevant` is the number of
    relevant items that could have been retrieved (the normalizer).
    """
    if total_relevant < 1:
        raise UndefinedMetric("average precision is undefined with no relevant items")
    if any(r not in (0, 1) for r in relevance):
        raise InvalidInput("relevance entries must be 0 or 1")
    hits = 0
    total = 0.0
    for i, rel in enumerate(relevance, start=1):
        if rel:
            hits += 1
            total += hits / i
    return total / total_relevant

def reciprocal_rank(relevance: Sequence[int]) -> float:
    for i, rel in enumerate(relevance, start=1):
        if rel:
            return 1.0 / i
    return 0.0

@dataclass(frozen=True)
class RetrievalEval:
    space: str
    k_eval: int
    per_class_ap: Mapping[Any, float]
    per_class_rr: Mapping[Any, float]
    map_adjusted: float
    mrr_adjusted: float
    skipped_classes: tuple[Any, ...] = ()

def retrieval_eval(
    train_x: np.ndarray,
    train_y: Sequence[Any],
    test_x: np.ndarray,
    test_y: Sequence[Any],
    space: str = "full_dim",
    k_eval: int = 100,
    fitted: FittedReducer | None = None,
) -> RetrievalEval:
    """Rank train records per test query; score frequency-adjusted MAP/MRR.

    In layout space the supplied fitted reducer projects both splits before
    ranking. Classes present only in the test split are skipped and reported.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    test_x = np.asarray(test_x, dtype=np.float64)
    train_y = list(train_y)
    test_y = list(test_y)
    if len(train_y) != train_x.shape[0] or len(test_y) != test_x.shape[0]:
        raise InvalidInput("labels must align with matrix rows")
    if k_eval < 1:
        raise InvalidArgument(f"k_eval must be >= 1, got {k_eval}")
    if space == "layout":
        if fitted is None:
            raise InvalidArgument("layout-space evaluation needs a fitted reducer")
        train_x = fitted.transform(train_x.astype(np.float32)).astype(np.float64)
        test_x = fitted.transform(test_x.astype(np.float32)).astype(np.float64)
    elif space != "full_dim":
        raise InvalidArgument(f"unknown space {space!r}")

    train_counts: dict[Any, int] = {}
    for y in train_y:
        train_counts[y] = train_counts.get(y, 0) + 1
    skipped = tuple(sorted({y for y in test_y if y not in train_counts}, key=str))

    k = min(k_eval, train_x.shape[0])
    idx, _ = knn_search(train_x, test_x, k)
    ap_by_class: dict[Any, list[float]] = {}
    rr_by_class: dict[Any, list[float]] = {}
    train_y_arr = np.asarray(train_y, dtype=object)
    for m, y in enumerate(test_y):
        if y not in train_counts:
            continue
        relevance = [1 if train_y_arr[j] == y else 0 for j in idx[m]]
        total_relevant = min(train_counts[y], k_eval)
        ap_by_class.setdefault(y, []).append(average_precision(relevance, total_relevant))
        rr_by_class.setdefault(y, []).append(reciprocal_rank(relevance))

    per_class_ap = {y: float(np.mean(v)) for y, v in ap_by_class.items()}
    per_class_rr = {y: float(np.mean(v)) for y, v in rr_by_class.items()}
    map_adjusted = float(np.mean(list(per_class_ap.values()))) if per_class_ap else 0.0
    mrr_adjusted = float(np.mean(list(per_class_rr.values()))) if per_class_rr else 0.0
    return RetrievalEval(
        space=space,
        k_eval=k_eval,
        per_class_ap=per_class_ap,
        per_class_rr=per_class_rr,
        map_adjusted=map_adjusted,
        mrr_adjusted=mrr_adjusted,
        skipped_classes=skipped,
    )

@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_trace: tuple[float, ...]
    n_iter: int

def _assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = (
        np.einsum("ij,ij->i", x, x)[:, None]
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
        - 2.0 * (x @ centroids.T)
    )
    np.maximum(d2, 0.0, out=d2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(x.shape[0]), labels]

def kmeans(
    matrix: np.ndarray | EmbeddingMatrix,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
) -> KMeansResult:
    """Lloyd's algorithm with seeded k-means++ initialization.

    Stops when assignments repeat or max_iter is hit. An emptied cluster is
    reseeded to the point farthest from that cluster's previous centroid.
    """
    x = matrix.data if isinstance(matrix, EmbeddingMatrix) else np.asarray(matrix)
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1 or k > n:
        raise InvalidK(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    closest = np.einsum("ij,ij->i", x - centroids[0], x - centroids[0])
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centroids[j] = x[rng.integers(n)]
            continue
        centroids[j] = x[rng.choice(n, p=closest / total)]
        diff = x - centroids[j]
        closest = np.minimum(closest, np.einsum("ij,ij->i", diff, diff))

    labels = np.full(n, -1, dtype=np.int64)
    trace: list[float] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_labels, d2 = _assign(x, centroids)
        trace.append(float(d2.sum()))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        used: set[int] = set()
        for j in range(k):
            members = x[labels == j]
            if members.shape[0]:
                centroids[j] = members.mean(axis=0)
            else:
                diff = x - centroids[j]
                far = np.einsum("ij,ij->i", diff, diff)
                order = np.argsort(far)[::-1]
                pick = next(int(i) for i in order if int(i) not in used)
                used.add(pick)
                centroids[j] = x[pick]
    _, d2 = _assign(x, centroids)
    return KMeansResult(
        assignments=labels,
        centroids=centroids,
        inertia=float(d2.sum()),
        inertia_trace=tuple(trace),
        n_iter=n_iter,
    )

def nmi(assign_a: Sequence[int], assign_b: Sequence[int]) -> float:
    """Normalized mutual information, I/sqrt(Ha*Hb), natural log.

    Two single-cluster partitions agree perfectly (1.0); if exactly one side
    is single-cluster the score is 0.0.
    """
    a = np.asarray(assign_a)
    b = np.asarray(assign_b)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise InvalidInput("partitions must be equal-length non-empty 1-D sequences")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = int(ai.max()) + 1, int(bi.max()) + 1
    table = np.zeros((ka, kb), dtype=np.float64)
    np.add.at(table, (ai, bi), 1.0)
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    # fsum makes every reduction correctly rounded, so nmi(a,b) == nmi(b,a)
    # exactly even though the contingency table transposes.
    ha = -math.fsum(p * math.log(p) for p in pa if p > 0)
    hb = -math.fsum(p * math.log(p) for p in pb if p > 0)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    pij = table / n
    info = math.fsum(
        pij[i, j] * math.log(pij[i, j] / (pa[i] * pb[j]))
        for i in range(ka)
        for j in range(kb)
        if pij[i, j] > 0
    )
    return float(min(max(info / math.sqrt(ha * hb), 0.0), 1.0))

@dataclass(frozen=True)
class ClusteringEval:
    k: int
    assignments: np.ndarray
    nmi: float
    inertia: float

def clustering_eval(
    matrix: np.ndarray | EmbeddingMatrix,
    ground_truth: Sequence[int],
    k: int,
    seed: int = 0,
    max_iter: int = 300,
) -> ClusteringEval:
    """K-means the raw embeddings and score NMI against the ground truth."""
    result = kmeans(matrix, k, seed=seed, max_iter=max_iter)
    score = nmi(result.assignments, list(ground_truth))
    return ClusteringEval(k=k, assignments=result.assignments, nmi=score, inertia=result.inertia)

def inject_corruption(
    store,
    project_id: str,
    pool: Sequence[tuple[np.ndarray, Mapping[str, Any]]],
    seed: int,
    count_range: tuple[int, int] = (3, 5),
) -> list[str]:
    """Ingest a few foreign samples, hidden from default exports.

    The injected count is drawn uniformly from count_range with the given
    seed; the same seed always injects the same records.
    """
    lo, hi = count_range
    if lo < 1 or hi < lo:
        raise InvalidArgument(f"bad count range {count_range}")
    rng = np.random.default_rng(seed)
    count = int(rng.integers(lo, hi + 1))
    if len(pool) < count:
        raise InsufficientPool(f"need {count} foreign samples, pool has {len(pool)}")
    chosen = rng.choice(len(pool), size=count, replace=False)
    state = store.state(project_id)
    existing = {r.record_id for r in state.records}
    rows = []
    for j, pool_idx in enumerate(sorted(int(c) for c in chosen)):
        vector, meta = pool[pool_idx]
        rid = str(meta.get("id", f"foreign-{seed}-{j}"))
        while rid in existing:
            rid = f"{rid}+"
        existing.add(rid)
        rows.append(
            IngestRow(
                record_id=rid,
                vector=np.asarray(vector, dtype=np.float32),
                label=meta.get("label"),
                modality=Modality(meta.get("modality", "text")),
                payload=str(meta.get("payload", "")),
                is_foreign=True,
            )
        )
    store.ingest(project_id, rows)
    return [r.record_id for r in rows]

@dataclass(frozen=True)
class ReportRow:
    method: str
    out_dim: int
    map_adjusted: float | None
    mrr_adjusted: float | None
    fit_seconds: float
    error: str | None = None

@dataclass(frozen=True)
class QualityReport:
    rows: tuple[ReportRow, ...]
    k_eval: int

    def to_csv(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "out_dim", "map_adjusted", "mrr_adjusted", "fit_seconds"])
        for row in self.rows:
            writer.writerow(
                [
                    row.method,
                    row.out_dim,
                    "" if row.map_adjusted is None else f"{row.map_adjusted:.9f}",
                    "" if row.mrr_adjusted is None else f"{row.mrr_adjusted:.9f}",
                    f"{row.fit_seconds:.6f}",
                ]
            )
        return buf.getvalue().encode("utf-8")

    def to_json(self) -> bytes:
        obj = {
            "k_eval": self.k_eval,
            "rows": [
                {
                    "method": r.method,
                    "out_dim": r.out_dim,
                    "map_adjusted": r.map_adjusted,
                    "mrr_adjusted": r.mrr_adjusted,
                    "fit_seconds": r.fit_seconds,
                    "error": r.error,
                }
                for r in self.rows
            ],
        }
        return json.dumps(obj, indent=2).encode("utf-8")

def split_train_test(
    n: int, train_fraction: float = 0.5, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled split into train/test index arrays."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidArgument(f"train_fraction must be in (0,1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    cut = max(1, min(n - 1, int(round(n * train_fraction))))
    return np.sort(perm[:cut]), np.sort(perm[cut:])

def layout_quality_report(
    x: np.ndarray,
    y: Sequence[Any],
    specs: Iterable[ReducerSpec],
    k_eval: int = 100,
    train_fraction: float = 0.5,
    split_seed: int = 0,
) -> QualityReport:
    """Score the full-dimensional baseline and every reducer spec.

    The baseline row always comes first; reducer rows follow in input order.
    A reducer failure annotates its row and the remaining rows still run.
    """
    x = np.asarray(x, dtype=np.float32)
    y = list(y)
    if len(y) != x.shape[0]:
        raise InvalidInput("labels must align with matrix rows")
    train_idx, test_idx = split_train_test(x.shape[0], train_fraction, split_seed)
    train_x, test_x = x[train_idx], x[test_idx]
    train_y = [y[i] for i in train_idx]
    test_y = [y[i] for i in test_idx]

    rows: list[ReportRow] = []
    base = retrieval_eval(train_x, train_y, test_x, test_y, space="full_dim", k_eval=k_eval)
    rows.append(
        ReportRow(
            method="full_dim",
            out_dim=int(x.shape[1]),
            map_adjusted=base.map_adjusted,
            mrr_adjusted=base.mrr_adjusted,
            fit_seconds=0.0,
        )
    )
    for spec in specs:
        start = time.perf_counter()
        try:
            _, fitted = reducers.fit(EmbeddingMatrix(train_x), spec)
            elapsed = time.perf_counter() - start
            scored = retrieval_eval(
                train_x, train_y, test_x, test_y, space="layout", k_eval=k_eval, fitted=fitted
            )
            rows.append(
                ReportRow(
                    method=spec.name,
                    out_dim=spec.out_dim,
                    map_adjusted=scored.map_adjusted,
                    mrr_adjusted=scored.mrr_adjusted,
                    fit_seconds=elapsed,
                )
            )
        except Exception as exc:  # keep scoring the remaining rows
            rows.append(
                ReportRow(
                    method=spec.name,
                    out_dim=spec.out_dim,
                    map_adjusted=None,
                    mrr_adjusted=None,
                    fit_seconds=time.perf_counter() - start,
                    error=str(exc),
                )
            )
    return QualityReport(rows=tuple(rows), k_eval=k_eval)
