"""Baselines: standard Lloyd k-Means and the two-phase decompose-after approach.

The two-phase (naive) approach first runs unconstrained Lloyd k-Means with
``h_1 * h_2`` clusters and then factors the resulting centroid matrix into two
protocentroid sets by alternating exact least-squares half-updates.  It is the
natural straw man: when the unconstrained centroids happen to sit far from any
aggregated structure, the decomposition destroys the phase-1 solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin

from . import core
from ._engine import (
    assign_points,
    derive_seed,
    dsq_sample,
    squared_shift,
)
from .krkmeans import DENOMINATOR_FLOOR, _root_seed
from ._validation import (
    InsufficientDataError,
    as_float_matrix,
    check_aggregator,
    check_cardinalities,
    resolve_num_threads,
)

__all__ = [
    "LloydKMeans",
    "NaiveKhatriRaoKMeans",
    "lloyd_fit",
    "LloydSummary",
    "naive_decompose",
    "NaiveDecomposition",
    "decomposition_residual",
]


class _SingleRun(NamedTuple):
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    converged: bool
    history: list[float]


def _init_centroids(X, k, init, rng) -> np.ndarray:
    n = X.shape[0]
    if n < k:
        raise InsufficientDataError(f"need at least {k} points for k={k}, got {n}")
    if init == "random":
        idx = rng.choice(n, size=k, replace=False)
        return X[idx].copy()
    if init == "plusplus":
        return dsq_sample(X, k, rng)
    raise ValueError(f"init must be 'random' or 'plusplus', got {init!r}")


def _lloyd_single(X, k, init, max_iter, tol, rng, n_threads) -> _SingleRun:
    n, m = X.shape
    centroids = _init_centroids(X, k, init, rng)
    old = centroids.copy()

    def rows():
        return ((j, centroids[j]) for j in range(k))

    history: list[float] = []
    converged = False
    n_iter = 0
    for _ in range(max_iter):
        labels, dmin = assign_points(X, rows, k, n_threads)
        history.append(float(dmin.sum()))
        sums = np.zeros((k, m))
        np.add.at(sums, labels, X)
        counts = np.bincount(labels, minlength=k)
        occupied = counts > 0
        centroids[occupied] = sums[occupied] / counts[occupied, None]
        for j in np.flatnonzero(counts == 0):
            centroids[j] = X[rng.integers(n)]
        n_iter += 1
        delta = 0.0
        for j in range(k):
            delta += squared_shift(centroids[j], old[j])
        if delta < tol:
            converged = True
            break
        old = centroids.copy()
    labels, dmin = assign_points(X, rows, k, n_threads)
    inertia = float(dmin.sum())
    history.append(inertia)
    return _SingleRun(centroids, labels, inertia, n_iter, converged, history)


@dataclass(frozen=True)
class LloydSummary:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    converged: bool
    restart_index: int
    inertia_history: tuple[float, ...]


def lloyd_fit(
    X,
    n_clusters: int,
    *,
    init: str = "random",
    n_restarts: int = 20,
    max_iter: int = 200,
    tol: float = 1e-4,
    random_state=None,
    n_threads=None,
) -> LloydSummary:
    """Standard Lloyd iterations, best of ``n_restarts`` by inertia.

    Empty clusters are reseeded to a random data point.  Restart r derives
    its generator from ``derive_seed(seed, r)``, the same policy as the
    Khatri-Rao engine.
    """
    X = as_float_matrix(X)
    k = int(n_clusters)
    if k < 1:
        raise ValueError("n_clusters must be >= 1")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    threads = resolve_num_threads(n_threads)
    root = _root_seed(random_state)
    best: _SingleRun | None = None
    best_r = 0
    for r in range(n_restarts):
        rng = np.random.default_rng(derive_seed(root, r))
        run = _lloyd_single(X, k, init, max_iter, tol, rng, threads)
        if best is None or run.inertia < best.inertia:
            best, best_r = run, r
    return LloydSummary(
        centroids=best.centroids,
        labels=best.labels,
        inertia=best.inertia,
        n_iter=best.n_iter,
        converged=best.converged,
        restart_index=best_r,
        inertia_history=tuple(best.history),
    )


class LloydKMeans(BaseEstimator, TransformerMixin, ClusterMixin):
    """Plain k-Means via Lloyd iterations with seeded deterministic restarts.

    Attributes after fit: ``cluster_centers_``, ``labels_``, ``inertia_``,
    ``n_iter_``, ``converged_``, ``best_restart_``, ``inertia_history_``.
    """

    def __init__(
        self,
        n_clusters=8,
        *,
        init="random",
        n_restarts=20,
        max_iter=200,
        tol=1e-4,
        random_state=None,
        n_threads=None,
    ):
        self.n_clusters = n_clusters
        self.init = init
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.n_threads = n_threads

    def fit(self, X, y=None):
        result = lloyd_fit(
            X,
            self.n_clusters,
            init=self.init,
            n_restarts=self.n_restarts,
            max_iter=self.max_iter,
            tol=self.tol,
            random_state=self.random_state,
            n_threads=self.n_threads,
        )
        self.cluster_centers_ = result.centroids
        self.labels_ = result.labels
        self.inertia_ = result.inertia
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.best_restart_ = result.restart_index
        self.inertia_history_ = result.inertia_history
        self.n_features_in_ = result.centroids.shape[1]
        return self

    def predict(self, X):
        X = as_float_matrix(X)
        centers = self.cluster_centers_

        def rows():
            return ((j, centers[j]) for j in range(centers.shape[0]))

        labels, _ = assign_points(X, rows, centers.shape[0], resolve_num_threads(self.n_threads))
        return labels

    def transform(self, X):
        X = as_float_matrix(X)
        centers = self.cluster_centers_
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        return np.sqrt(d2)

    def score(self, X, y=None):
        X = as_float_matrix(X)
        centers = self.cluster_centers_

        def rows():
            return ((j, centers[j]) for j in range(centers.shape[0]))

        _, dmin = assign_points(X, rows, centers.shape[0], resolve_num_threads(self.n_threads))
        return -float(dmin.sum())


# ---------------------------------------------------------------------------
# two-phase decomposition


def decomposition_residual(centroids, protosets: core.ProtoSets) -> float:
    """Sum of squared gaps between target centroids and the aggregated cells."""
    centroids = as_float_matrix(centroids, "centroids")
    approx = core.materialize_centroids(protosets)
    if approx.shape != centroids.shape:
        raise ValueError(
            f"centroids have shape {centroids.shape}, protosets materialize to {approx.shape}"
        )
    return float(((centroids - approx) ** 2).sum())


@dataclass(frozen=True)
class NaiveDecomposition:
    protosets: core.ProtoSets
    residual: float
    n_sweeps: int
    residual_history: tuple[float, ...]


def naive_decompose(
    centroids,
    cardinalities,
    aggregator: str = "product",
    *,
    max_iter: int = 5000,
    tol: float = 1e-4,
) -> NaiveDecomposition:
    """Factor a centroid matrix into two protocentroid sets.

    Alternates exact least-squares half-updates (first set, then second)
    until the residual drops below ``tol`` or ``max_iter`` sweeps run.  Row i
    of ``centroids`` is the target for the cell with flat index i.  The first
    set starts from the cells with second index 0; the second set starts at
    the aggregator's neutral element.  Zero-denominator coordinates in the
    product half-updates keep their previous value.
    """
    mu = as_float_matrix(centroids, "centroids")
    cards = check_cardinalities(cardinalities)
    aggregator = check_aggregator(aggregator)
    if len(cards) != 2:
        raise ValueError("naive decomposition supports exactly two sets")
    h1, h2 = cards
    if mu.shape[0] != h1 * h2:
        raise ValueError(
            f"centroids have {mu.shape[0]} rows, expected h1*h2 = {h1 * h2}"
        )
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    m = mu.shape[1]
    target = mu.reshape(h1, h2, m)

    set1 = target[:, 0, :].copy()
    set2 = np.tile(core.neutral_element(aggregator, m), (h2, 1))

    def residual() -> float:
        if aggregator == "sum":
            approx = set1[:, None, :] + set2[None, :, :]
        else:
            approx = set1[:, None, :] * set2[None, :, :]
        return float(((target - approx) ** 2).sum())

    history: list[float] = [residual()]
    n_sweeps = 0
    for _ in range(max_iter):
        if aggregator == "sum":
            set1 = (target - set2[None, :, :]).mean(axis=1)
            history.append(residual())
            set2 = (target - set1[:, None, :]).mean(axis=0)
        else:
            den = (set2 * set2).sum(axis=0)
            num = (target * set2[None, :, :]).sum(axis=1)
            ok = den >= DENOMINATOR_FLOOR
            set1[:, ok] = num[:, ok] / den[ok]
            history.append(residual())
            den = (set1 * set1).sum(axis=0)
            num = (target * set1[:, None, :]).sum(axis=0)
            ok = den >= DENOMINATOR_FLOOR
            set2[:, ok] = num[:, ok] / den[ok]
        history.append(residual())
        n_sweeps += 1
        if history[-1] < tol:
            break
    return NaiveDecomposition(
        protosets=core.ProtoSets((set1, set2), aggregator),
        residual=history[-1],
        n_sweeps=n_sweeps,
        residual_history=tuple(history),
    )


class NaiveKhatriRaoKMeans(BaseEstimator, TransformerMixin, ClusterMixin):
    """Two-phase baseline: Lloyd with ``h1*h2`` clusters, then decompose.

    After the decomposition, points are reassigned to the nearest aggregated
    centroid and ``inertia_`` is reported against those centroids.  Extra
    attributes: ``lloyd_inertia_`` (phase 1), ``decompose_residual_`` and
    ``n_sweeps_`` (phase 2).
    """

    def __init__(
        self,
        cardinalities=(2, 2),
        aggregator="product",
        *,
        descent_max_iter=5000,
        descent_tol=1e-4,
        init="random",
        n_restarts=20,
        max_iter=200,
        tol=1e-4,
        random_state=None,
        n_threads=None,
    ):
        self.cardinalities = cardinalities
        self.aggregator = aggregator
        self.descent_max_iter = descent_max_iter
        self.descent_tol = descent_tol
        self.init = init
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.n_threads = n_threads

    def fit(self, X, y=None):
        X = as_float_matrix(X)
        cards = check_cardinalities(self.cardinalities)
        k = prod(cards)
        if X.shape[0] < k:
            raise InsufficientDataError(
                f"need at least {k} points for h1*h2 = {k}, got {X.shape[0]}"
            )
        phase1 = lloyd_fit(
            X,
            k,
            init=self.init,
            n_restarts=self.n_restarts,
            max_iter=self.max_iter,
            tol=self.tol,
            random_state=self.random_state,
            n_threads=self.n_threads,
        )
        dec = naive_decompose(
            phase1.centroids,
            cards,
            self.aggregator,
            max_iter=self.descent_max_iter,
            tol=self.descent_tol,
        )
        centers = core.materialize_centroids(dec.protosets)

        def rows():
            return ((j, centers[j]) for j in range(centers.shape[0]))

        labels, dmin = assign_points(X, rows, k, resolve_num_threads(self.n_threads))
        self.protosets_ = dec.protosets
        self.labels_ = labels
        self.inertia_ = float(dmin.sum())
        self.lloyd_inertia_ = phase1.inertia
        self.lloyd_centroids_ = phase1.centroids
        self.decompose_residual_ = dec.residual
        self.n_sweeps_ = dec.n_sweeps
        self.best_restart_ = phase1.restart_index
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def cluster_centers_(self) -> np.ndarray:
        return core.materialize_centroids(self.protosets_)

    def predict(self, X):
        X = as_float_matrix(X)
        centers = self.cluster_centers_

        def rows():
            return ((j, centers[j]) for j in range(centers.shape[0]))

        labels, _ = assign_points(X, rows, centers.shape[0], resolve_num_threads(self.n_threads))
        return labels

    def transform(self, X):
        X = as_float_matrix(X)
        centers = self.cluster_centers_
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        return np.sqrt(d2)
