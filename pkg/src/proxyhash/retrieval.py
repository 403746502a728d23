"""Hamming-ranking and hash-lookup evaluation.

Two items are relevant to each other when their label rows share at least
one category. Ranking is exhaustive; ties in Hamming distance are broken by
ascending retrieval index so every metric is deterministic.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codespace import BinaryCode, PackedCodes, hamming_matrix
from .errors import DimensionError, InvalidInputError

DEFAULT_CUTOFF = 5000
_CHUNK = 256


@dataclass(frozen=True, eq=False)
class RetrievalSet:
    codes: PackedCodes
    labels: np.ndarray

    def __post_init__(self):
        labels = np.atleast_2d(np.asarray(self.labels)).astype(bool)
        if labels.shape[0] != len(self.codes):
            raise DimensionError(f"{len(self.codes)} codes but {labels.shape[0]} label rows")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.codes)


@dataclass(frozen=True)
class RankedList:
    indices: np.ndarray
    distances: np.ndarray


@dataclass(frozen=True)
class PrPoint:
    radius: int
    precision: float
    recall: float
    retrieved: float  # mean number of items inside the radius per query
    precision_queries: int  # queries with a non-empty retrieval at this radius


@dataclass(frozen=True)
class PrCurve:
    points: list[PrPoint]
    excluded_from_recall: list[int] = field(default_factory=list)


def relevance(query_labels, set_labels) -> np.ndarray:
    q = np.atleast_2d(np.asarray(query_labels)).astype(np.float32)
    s = np.atleast_2d(np.asarray(set_labels)).astype(np.float32)
    if q.shape[1] != s.shape[1]:
        raise DimensionError(f"label widths differ: {q.shape[1]} vs {s.shape[1]}")
    return (q @ s.T) > 0


def _as_packed(query) -> PackedCodes:
    if isinstance(query, BinaryCode):
        return PackedCodes(query.k, query.words[None, :])
    return query


def rank(query: BinaryCode, rset: RetrievalSet) -> RankedList:
    dist = hamming_matrix(_as_packed(query), rset.codes)[0]
    order = np.argsort(dist, kind="stable")
    return RankedList(order, dist[order])


def average_precision(relevant, n: int) -> float:
    """AP over the top ``n`` of a ranked relevance list; 0 when none is relevant.

    >>> round(average_precision([1, 0, 1], 3), 4)
    0.8333
    """
    rel = np.asarray(relevant, dtype=np.float64)
    if n <= 0:
        raise InvalidInputError("AP cutoff must be positive")
    if n > rel.shape[-1]:
        raise InvalidInputError(f"cutoff {n} exceeds list length {rel.shape[-1]}")
    return float(_ap_rows(rel[None, :n])[0])


def _ap_rows(rel: np.ndarray) -> np.ndarray:
    hits = np.cumsum(rel, axis=1)
    prec = hits / np.arange(1, rel.shape[1] + 1)
    found = hits[:, -1]
    total = np.sum(prec * rel, axis=1)
    return np.divide(total, found, out=np.zeros_like(total), where=found > 0)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("PROXYHASH_THREADS", "")))
    except ValueError:
        return os.cpu_count() or 1


def _chunked(fn, nq: int):
    """Apply ``fn(start, stop)`` over query chunks, merged in query order."""
    spans = [(s, min(s + _CHUNK, nq)) for s in range(0, nq, _CHUNK)]
    workers = min(_workers(), len(spans)) or 1
    if workers == 1:
        return [fn(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda span: fn(*span), spans))


def _ranked_relevance(queries: PackedCodes, query_labels, rset: RetrievalSet, start, stop, top):
    dist = hamming_matrix(PackedCodes(queries.k, queries.words[start:stop]), rset.codes)
    order = np.argsort(dist, axis=1, kind="stable")[:, :top]
    rel = relevance(query_labels[start:stop], rset.labels)
    return np.take_along_axis(rel, order, axis=1)


def _check_queries(queries: PackedCodes, query_labels, rset: RetrievalSet):
    query_labels = np.atleast_2d(np.asarray(query_labels)).astype(bool)
    if len(queries) == 0:
        raise InvalidInputError("no queries to evaluate")
    if query_labels.shape[0] != len(queries):
        raise DimensionError(f"{len(queries)} query codes but {query_labels.shape[0]} label rows")
    if queries.k != rset.codes.k:
        raise DimensionError(f"query codes have k={queries.k}, retrieval set k={rset.codes.k}")
    return query_labels


def average_precisions(queries: PackedCodes, query_labels, rset: RetrievalSet, n: int = DEFAULT_CUTOFF):
    """Per-query AP at cutoff ``min(n, len(rset))``."""
    query_labels = _check_queries(queries, query_labels, rset)
    if n <= 0:
        raise InvalidInputError("AP cutoff must be positive")
    top = min(n, len(rset))
    parts = _chunked(
        lambda a, b: _ap_rows(_ranked_relevance(queries, query_labels, rset, a, b, top).astype(np.float64)),
        len(queries),
    )
    return np.concatenate(parts)


def mean_average_precision(queries: PackedCodes, query_labels, rset: RetrievalSet, n: int = DEFAULT_CUTOFF) -> float:
    return float(average_precisions(queries, query_labels, rset, n).mean())


def precision_at_n(query: BinaryCode, query_labels, rset: RetrievalSet, n: int) -> float:
    if n <= 0 or n > len(rset):
        raise InvalidInputError(f"N must lie in [1, {len(rset)}]")
    ranked = rank(query, rset)
    rel = relevance(query_labels, rset.labels)[0][ranked.indices[:n]]
    return float(rel.sum() / n)


def precision_curve(queries: PackedCodes, query_labels, rset: RetrievalSet, cutoffs) -> np.ndarray:
    """Mean precision over queries at each top-``N`` cutoff."""
    query_labels = _check_queries(queries, query_labels, rset)
    cutoffs = np.asarray(cutoffs, dtype=np.int64)
    if np.any(cutoffs <= 0) or np.any(cutoffs > len(rset)):
        raise InvalidInputError(f"cutoffs must lie in [1, {len(rset)}]")
    top = int(cutoffs.max())

    def part(a, b):
        hits = np.cumsum(_ranked_relevance(queries, query_labels, rset, a, b, top), axis=1)
        return hits[:, cutoffs - 1] / cutoffs

    return np.concatenate(_chunked(part, len(queries))).mean(axis=0)


def default_cutoffs(m: int) -> list[int]:
    step = 50 if m >= 100 else 1
    return list(range(step, min(m, 1000) + 1, step))


def pr_curve(queries: PackedCodes, query_labels, rset: RetrievalSet) -> PrCurve:
    """Precision/recall of hash lookup for every radius ``0..k``.

    Precision at a radius averages only queries that retrieve something there;
    recall averages only queries with at least one relevant item in the set.
    """
    query_labels = _check_queries(queries, query_labels, rset)
    k = queries.k
    ret = np.zeros((len(queries), k + 1))
    hit = np.zeros((len(queries), k + 1))

    def part(a, b):
        dist = hamming_matrix(PackedCodes(k, queries.words[a:b]), rset.codes)
        rel = relevance(query_labels[a:b], rset.labels)
        for i in range(b - a):
            ret[a + i] = np.bincount(dist[i], minlength=k + 1)
            hit[a + i] = np.bincount(dist[i], weights=rel[i], minlength=k + 1)

    _chunked(part, len(queries))
    ret = np.cumsum(ret, axis=1)
    hit = np.cumsum(hit, axis=1)
    total_rel = hit[:, -1]
    has_rel = total_rel > 0
    points = []
    for r in range(k + 1):
        nonempty = ret[:, r] > 0
        precision = float(np.mean(hit[nonempty, r] / ret[nonempty, r])) if nonempty.any() else float("nan")
        recall = float(np.mean(hit[has_rel, r] / total_rel[has_rel])) if has_rel.any() else float("nan")
        points.append(PrPoint(r, precision, recall, float(ret[:, r].mean()), int(nonempty.sum())))
    return PrCurve(points, [int(i) for i in np.flatnonzero(~has_rel)])


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_csv(path, header, rows) -> None:
    with open(Path(path), "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_eval_csvs(out_dir, task: str, queries: PackedCodes, query_labels, rset: RetrievalSet, n: int = DEFAULT_CUTOFF):
    """Writes ``map.csv``, ``pn.csv`` and ``pr.csv``; returns the MAP."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    value = mean_average_precision(queries, query_labels, rset, n)
    write_csv(out_dir / "map.csv", ["task", "bits", "map"], [[task, queries.k, value]])
    cutoffs = default_cutoffs(len(rset))
    pn = precision_curve(queries, query_labels, rset, cutoffs)
    write_csv(out_dir / "pn.csv", ["N", "precision"], zip(cutoffs, pn))
    curve = pr_curve(queries, query_labels, rset)
    write_csv(
        out_dir / "pr.csv",
        ["radius", "precision", "recall", "retrieved", "precision_queries"],
        [[p.radius, p.precision, p.recall, p.retrieved, p.precision_queries] for p in curve.points],
    )
    return value
