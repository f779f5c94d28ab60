"""Retrieval evaluation: Recall@K, MAP, distance histograms, LDA score.

Rankings sort by ascending Euclidean distance with ties broken by
ascending database index, so every metric is deterministic.  MAP reduces
per-query precision lists with math.fsum (exactly rounded), which makes
the result independent of summation order.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import DegenerateDistributionError, EvalError
from .model import CascadeModel, extract_descriptor, forward


@dataclass
class HistogramStats:
    """Moments of the positive/negative pair-distance distributions, plus
    optional binned counts (populated by distance_histograms)."""

    m_pos: float
    v_pos: float
    m_neg: float
    v_neg: float
    bins_pos: np.ndarray = None
    bins_neg: np.ndarray = None
    bin_range: tuple = None
    bin_count: int = 0


@dataclass
class EvalReport:
    recall_at: dict
    map_score: float
    histogram: HistogramStats
    lda: float


def _query_distances(query_row: np.ndarray, db: np.ndarray) -> np.ndarray:
    diff = db - query_row
    return np.sqrt(np.einsum("nd,nd->n", diff, diff))


def _rankings(query_desc, db_desc, exclude_self):
    """Yield (query index, db indices in rank order, self excluded)."""
    if not exclude_self and query_desc is db_desc:
        raise EvalError("query set is the database itself; exclude_self must be set")
    query_desc = ops.as_matrix(query_desc, "query_desc")
    db_desc = ops.as_matrix(db_desc, "db_desc")
    if db_desc.shape[0] == 0:
        raise EvalError("database is empty")
    if query_desc.shape[1] != db_desc.shape[1]:
        raise EvalError(
            f"descriptor widths differ: {query_desc.shape[1]} vs {db_desc.shape[1]}"
        )
    if exclude_self and query_desc.shape[0] != db_desc.shape[0]:
        raise EvalError("exclude_self requires query and db sets aligned by index")
    for q in range(query_desc.shape[0]):
        dist = _query_distances(query_desc[q], db_desc)
        if exclude_self:
            dist[q] = np.inf  # finite everywhere else, so self ranks last
        order = np.argsort(dist, kind="stable")
        yield q, (order[:-1] if exclude_self else order)


def recall_at_k(query_desc, db_desc, query_labels, db_labels, ks, exclude_self=False) -> dict:
    """Fraction of queries whose top-K contains a same-label item."""
    ks = [int(k) for k in (ks if np.iterable(ks) else [ks])]
    if not ks or min(ks) < 1:
        raise EvalError(f"every K must be >= 1, got {ks}")
    query_labels = np.asarray(query_labels).reshape(-1)
    db_labels = np.asarray(db_labels).reshape(-1)
    hits = {k: 0 for k in ks}
    n_queries = np.asarray(query_desc).shape[0]
    top = max(ks)
    for q, order in _rankings(query_desc, db_desc, exclude_self):
        match = db_labels[order[:top]] == query_labels[q]
        cumulative = np.cumsum(match)
        if cumulative.size == 0:
            continue
        for k in ks:
            if cumulative[min(k, len(cumulative)) - 1] > 0:
                hits[k] += 1
    return {k: hits[k] / n_queries for k in ks}


def mean_average_precision(
    query_desc, db_desc, query_labels, db_labels, exclude_self=False, skip_undefined=False
) -> float:
    """Mean over queries of average precision over the full ranking."""
    query_labels = np.asarray(query_labels).reshape(-1)
    db_labels = np.asarray(db_labels).reshape(-1)
    aps = []
    for q, order in _rankings(query_desc, db_desc, exclude_self):
        relevant = db_labels[order] == query_labels[q]
        positions = np.flatnonzero(relevant)
        if positions.size == 0:
            if skip_undefined:
                continue
            raise EvalError(f"query {q}: class {query_labels[q]} absent from database")
        precisions = (np.arange(1, positions.size + 1) / (positions + 1)).tolist()
        aps.append(math.fsum(precisions) / positions.size)
    if not aps:
        raise EvalError("no query had a defined average precision")
    return math.fsum(aps) / len(aps)


def descriptor_bin_range(levels: int) -> tuple:
    """Histogram range for a concatenation of `levels` unit embeddings."""
    return (0.0, 2.0 * math.sqrt(levels))


def distance_histograms(desc, labels, bin_count=100, bin_range=(0.0, 2.0)) -> HistogramStats:
    """Moments and binned counts over all unordered pairs, each counted once.

    Means and variances are population statistics; distances outside
    bin_range are clamped into the edge bins.
    """
    desc = ops.as_matrix(desc, "desc")
    labels = np.asarray(labels).reshape(-1)
    n = desc.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    if not same.any() or same.all():
        raise EvalError("need at least one positive and one negative unordered pair")
    pairs = np.stack([iu, ju], axis=1)
    dist = ops.pair_distances(desc, pairs)
    d_pos, d_neg = dist[same], dist[~same]
    lo, hi = float(bin_range[0]), float(bin_range[1])
    clipped_pos = np.clip(d_pos, lo, hi)
    clipped_neg = np.clip(d_neg, lo, hi)
    bins_pos, _ = np.histogram(clipped_pos, bins=bin_count, range=(lo, hi))
    bins_neg, _ = np.histogram(clipped_neg, bins=bin_count, range=(lo, hi))
    return HistogramStats(
        m_pos=float(d_pos.mean()),
        v_pos=float(d_pos.var()),
        m_neg=float(d_neg.mean()),
        v_neg=float(d_neg.var()),
        bins_pos=bins_pos,
        bins_neg=bins_neg,
        bin_range=(lo, hi),
        bin_count=bin_count,
    )


def lda_score(stats: HistogramStats) -> float:
    """Separation of the two distance distributions:
    |m_neg - m_pos|^2 / (v_pos + v_neg)."""
    denom = stats.v_pos + stats.v_neg
    if denom <= 0:
        raise DegenerateDistributionError("total variance is zero")
    return float(abs(stats.m_neg - stats.m_pos) ** 2 / denom)


def lda_from_moments(m_pos: float, v_pos: float, m_neg: float, v_neg: float) -> float:
    return lda_score(HistogramStats(m_pos, v_pos, m_neg, v_neg))


def histogram_overlap(stats: HistogramStats) -> float:
    """Shared area of the two normalized histograms: sum of per-bin minima
    over each polarity's own total."""
    pos = stats.bins_pos / max(1, stats.bins_pos.sum())
    neg = stats.bins_neg / max(1, stats.bins_neg.sum())
    return float(np.minimum(pos, neg).sum())


def model_descriptors(model: CascadeModel, features: np.ndarray, level=None) -> np.ndarray:
    """Concatenated descriptor, or a single level's embedding (1-based)."""
    if level is None:
        return extract_descriptor(model, features)
    levels = model.config.levels
    if not 1 <= level <= levels:
        raise EvalError(f"level must lie in [1, {levels}], got {level}")
    return forward(model, features).embeddings[level - 1]


def evaluate_model(
    model: CascadeModel,
    features: np.ndarray,
    labels,
    ks=(1, 2, 4, 8),
    level=None,
    bin_count=100,
) -> EvalReport:
    """Self-retrieval evaluation: every row queries all the others."""
    desc = model_descriptors(model, features, level=level)
    effective_levels = model.config.levels if level is None else 1
    stats = distance_histograms(
        desc, labels, bin_count=bin_count, bin_range=descriptor_bin_range(effective_levels)
    )
    return EvalReport(
        recall_at=recall_at_k(desc, desc, labels, labels, ks, exclude_self=True),
        map_score=mean_average_precision(desc, desc, labels, labels, exclude_self=True),
        histogram=stats,
        lda=lda_score(stats),
    )


def report_text(report: EvalReport) -> str:
    lines = ["retrieval evaluation", "--------------------"]
    for k in sorted(report.recall_at):
        lines.append(f"recall@{k}: {report.recall_at[k]:.4f}")
    lines.append(f"map: {report.map_score:.4f}")
    h = report.histogram
    lines.append(f"positive pairs: mean {h.m_pos:.4f} variance {h.v_pos:.4f}")
    lines.append(f"negative pairs: mean {h.m_neg:.4f} variance {h.v_neg:.4f}")
    lines.append(f"lda score: {report.lda:.4f}")
    return "\n".join(lines) + "\n"


def write_histogram_csv(stats: HistogramStats, path) -> None:
    """Bin edges plus per-polarity counts, one row per bin."""
    lo, hi = stats.bin_range
    edges = [float(e) for e in np.linspace(lo, hi, stats.bin_count + 1)]
    with open(path, "w") as fh:
        fh.write("bin_lo,bin_hi,positive_count,negative_count\n")
        for b in range(stats.bin_count):
            fh.write(
                f"{edges[b]!r},{edges[b + 1]!r},"
                f"{int(stats.bins_pos[b])},{int(stats.bins_neg[b])}\n"
            )


def write_report_csv(report: EvalReport, recall_path, histogram_path) -> None:
    """recall_path: one `k,recall` row per K plus map and lda rows;
    histogram_path: bin edges and per-polarity counts."""
    with open(recall_path, "w") as fh:
        fh.write("metric,value\n")
        for k in sorted(report.recall_at):
            fh.write(f"recall@{k},{report.recall_at[k]!r}\n")
        fh.write(f"map,{report.map_score!r}\n")
        fh.write(f"lda,{report.lda!r}\n")
    write_histogram_csv(report.histogram, histogram_path)
