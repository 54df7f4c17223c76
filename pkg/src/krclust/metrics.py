"""Clustering quality measures and parameter accounting.

All label-based measures accept arbitrary non-negative integer labels (no
contiguity required) and are invariant under relabeling of the predicted
side.  ARI and NMI are symmetric in their two arguments; purity and ACC are
reported with respect to (predicted, truth) order and need not be symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log, prod

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._validation import as_float_matrix, as_int_labels, check_cardinalities

__all__ = [
    "inertia",
    "purity",
    "ari",
    "nmi",
    "acc",
    "contingency_table",
    "ParamReport",
    "param_report",
]


def inertia(X, centroids, cells) -> float:
    """Total squared Euclidean distance from each point to its assigned centroid."""
    X = as_float_matrix(X)
    centroids = as_float_matrix(centroids, "centroids")
    cells = as_int_labels(cells, n=X.shape[0], name="cells")
    if X.shape[1] != centroids.shape[1]:
        raise ValueError("X and centroids disagree on the feature dimension")
    if cells.size and cells.max() >= centroids.shape[0]:
        raise ValueError("assignment refers to a centroid that does not exist")
    diff = X - centroids[cells]
    return float((diff * diff).sum())


def contingency_table(predicted, truth) -> np.ndarray:
    """Cross-tabulation of two labelings, rows = predicted, cols = truth."""
    predicted = as_int_labels(predicted, name="predicted")
    truth = as_int_labels(truth, n=predicted.shape[0], name="truth")
    _, pi = np.unique(predicted, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def purity(predicted, truth) -> float:
    """Fraction of points matching the majority true label of their cluster."""
    table = contingency_table(predicted, truth)
    return float(table.max(axis=1).sum() / table.sum())


def _comb2(x: np.ndarray) -> np.ndarray:
    return x * (x - 1) / 2.0


def ari(predicted, truth) -> float:
    """Adjusted Rand index: pair-counting agreement corrected for chance."""
    table = contingency_table(predicted, truth)
    n = table.sum()
    if n < 2:
        raise ValueError("ARI needs at least two points")
    sum_cells = _comb2(table.astype(np.float64)).sum()
    sum_rows = _comb2(table.sum(axis=1).astype(np.float64)).sum()
    sum_cols = _comb2(table.sum(axis=0).astype(np.float64)).sum()
    total = _comb2(np.float64(n))
    expected = sum_rows * sum_cols / total
    maximum = 0.5 * (sum_rows + sum_cols)
    if maximum == expected:
        # both partitions trivial in the same way: perfect agreement
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))


def _entropy(counts: np.ndarray, n: int) -> float:
    probs = counts[counts > 0] / n
    return float(-(probs * np.log(probs)).sum())


def nmi(predicted, truth) -> float:
    """Mutual information normalized by the arithmetic mean of the entropies.

    Both partitions trivial (single cluster each) is defined as 1.0.
    """
    table = contingency_table(predicted, truth)
    n = int(table.sum())
    hu = _entropy(table.sum(axis=1), n)
    hv = _entropy(table.sum(axis=0), n)
    if hu == 0.0 and hv == 0.0:
        return 1.0
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = table[i, j]
            if nij > 0:
                mi += (nij / n) * log(n * nij / (rows[i] * cols[j]))
    return float(mi / (0.5 * (hu + hv)))


def acc(predicted, truth) -> float:
    """Best one-to-one label matching fraction (Hungarian assignment).

    The contingency table is zero-padded to square so the matching stays
    defined when the two labelings use different numbers of labels.
    """
    table = contingency_table(predicted, truth)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum() / table.sum())


@dataclass(frozen=True)
class ParamReport:
    """Vector/scalar counts of a data summary relative to the full cell space."""

    model_kind: str
    vector_count: int
    scalar_count: int
    ratio_vs_full: float


def param_report(cardinalities, m: int, model_kind: str = "khatri_rao") -> ParamReport:
    """Parameter accounting for a model over the (h_1, ..., h_p) cell space.

    A protocentroid model stores ``sum(h_q)`` vectors where a plain centroid
    model over the same cells stores ``prod(h_q)``.
    """
    cards = check_cardinalities(cardinalities)
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    full = prod(cards)
    if model_kind == "khatri_rao":
        vectors = sum(cards)
    elif model_kind == "lloyd":
        vectors = full
    else:
        raise ValueError(f"model_kind must be 'khatri_rao' or 'lloyd', got {model_kind!r}")
    return ParamReport(
        model_kind=model_kind,
        vector_count=vectors,
        scalar_count=vectors * m,
        ratio_vs_full=vectors / full,
    )
