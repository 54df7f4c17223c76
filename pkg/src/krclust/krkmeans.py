"""Khatri-Rao k-Means: cluster with centroids built from protocentroid sets.

The estimator alternates nearest-centroid assignment over all cells with
closed-form per-set protocentroid updates (exact least-squares given the
assignment and the other sets), reseeds protocentroids whose incident cells
are all empty, and stops once the total squared movement of the materialized
centroids falls below ``tol``.  ``n_restarts`` independent restarts are run
and the one with the smallest inertia wins.

Two storage modes are available.  "memory" never materializes the full
centroid matrix: centroids are aggregated on the fly cell by cell, so
centroid storage stays proportional to ``sum(h_q) * m``.  "time" caches the
materialized ``prod(h_q) x m`` matrix once per iteration.  Both modes share
every kernel and produce bit-identical results.
"""

from __future__ import annotations

import json
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
    record_centroid_alloc,
    squared_shift,
    track_centroid_allocations,
    track_distance_evals,
)
from ._validation import (
    InsufficientDataError,
    as_float_matrix,
    as_generator,
    as_int_labels,
    check_aggregator,
    check_cardinalities,
    resolve_num_threads,
)

__all__ = [
    "KhatriRaoKMeans",
    "FitSummary",
    "init_random",
    "init_plus_plus",
    "assign",
    "update_protosets",
    "handle_empty",
    "save_model",
    "load_model",
    "track_distance_evals",
    "track_centroid_allocations",
]

STORAGE_MODES = ("memory", "time")

# Product-aggregator update guard: coordinates whose denominator falls below
# this are left unchanged instead of dividing by (near) zero.
DENOMINATOR_FLOOR = 1e-12

# k-means++-style seeding guard for the product aggregator: the divisor's
# magnitude is floored here, and guarded coordinates get a small jitter
# (std 1e-3, i.e. variance 1e-6).
_SEED_DIV_FLOOR = 1e-9
_SEED_JITTER_STD = 1e-3


def _root_seed(random_state) -> int:
    if random_state is None:
        return int(np.random.SeedSequence().entropy) & ((1 << 64) - 1)
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(1 << 63))
    return int(random_state) & ((1 << 64) - 1)


# ---------------------------------------------------------------------------
# initialization


def _init_random_sets(X, cards, rng) -> list[np.ndarray]:
    n = X.shape[0]
    if n < max(cards):
        raise InsufficientDataError(
            f"need at least {max(cards)} points to draw a protocentroid set, got {n}"
        )
    sets = []
    for h in cards:
        idx = rng.choice(n, size=h, replace=False)
        mat = X[idx].copy()
        record_centroid_alloc(mat.size)
        sets.append(mat)
    return sets


def _init_plusplus_sets(X, cards, aggregator, rng) -> list[np.ndarray]:
    n, m = X.shape
    n_seeds = 1 + sum(h - 1 for h in cards)
    if n < n_seeds:
        raise InsufficientDataError(
            f"k-means++ style seeding needs {n_seeds} points, got {n}"
        )
    seeds = dsq_sample(X, n_seeds, rng)
    set0 = seeds[: cards[0]].copy()
    record_centroid_alloc(set0.size)
    sets = [set0]
    base = set0[0]
    if aggregator == "product":
        guarded = np.abs(base) < _SEED_DIV_FLOOR
        divisor = np.where(guarded, np.where(base < 0, -_SEED_DIV_FLOOR, _SEED_DIV_FLOOR), base)
    t = cards[0]
    for q in range(1, len(cards)):
        mat = np.empty((cards[q], m))
        record_centroid_alloc(mat.size)
        mat[0] = core.neutral_element(aggregator, m)
        for j in range(1, cards[q]):
            c = seeds[t]
            t += 1
            if aggregator == "sum":
                mat[j] = c - base
            else:
                row = c / divisor
                if guarded.any():
                    row[guarded] += rng.normal(0.0, _SEED_JITTER_STD, int(guarded.sum()))
                mat[j] = row
        sets.append(mat)
    return sets


def _init_sets(X, cards, aggregator, init, rng) -> list[np.ndarray]:
    if init == "random":
        return _init_random_sets(X, cards, rng)
    if init == "plusplus":
        return _init_plusplus_sets(X, cards, aggregator, rng)
    raise ValueError(f"init must be 'random' or 'plusplus', got {init!r}")


# ---------------------------------------------------------------------------
# assignment / update / empty handling on raw set lists


def _assign_sets(X, sets, aggregator, storage, n_threads=1):
    cards = tuple(s.shape[0] for s in sets)
    n_cells = prod(cards)
    grids = np.unravel_index(np.arange(n_cells), cards)
    op = np.add if aggregator == "sum" else np.multiply

    if storage == "time":
        cache = sets[0][grids[0]]
        for q in range(1, len(sets)):
            cache = op(cache, sets[q][grids[q]])
        record_centroid_alloc(cache.size)

        def rows():
            return ((j, cache[j]) for j in range(n_cells))

    else:

        def rows():
            def gen():
                for flat in range(n_cells):
                    mu = sets[0][grids[0][flat]]
                    for q in range(1, len(sets)):
                        mu = op(mu, sets[q][grids[q][flat]])
                    yield flat, mu

            return gen()

    return assign_points(X, rows, n_cells, n_threads)


def _update_sets_inplace(sets, X, labels, aggregator) -> None:
    """Sequential exact least-squares update of every set, in set order.

    Set q's update uses the latest values of all other sets.  Protocentroids
    with no assigned points (sum) or an all-below-floor denominator
    coordinate (product) keep their previous value.
    """
    cards = tuple(s.shape[0] for s in sets)
    axes = np.unravel_index(labels, cards)
    p = len(sets)
    m = X.shape[1]
    for q in range(p):
        aq = axes[q]
        h = cards[q]
        others = [q2 for q2 in range(p) if q2 != q]
        if not others:
            num = np.zeros((h, m))
            record_centroid_alloc(num.size)
            np.add.at(num, aq, X)
            cnt = np.bincount(aq, minlength=h)
            upd = cnt > 0
            sets[q][upd] = num[upd] / cnt[upd, None]
        elif aggregator == "sum":
            rest = sets[others[0]][axes[others[0]]]
            for q2 in others[1:]:
                rest = rest + sets[q2][axes[q2]]
            num = np.zeros((h, m))
            record_centroid_alloc(num.size)
            np.add.at(num, aq, X - rest)
            cnt = np.bincount(aq, minlength=h)
            upd = cnt > 0
            sets[q][upd] = num[upd] / cnt[upd, None]
        else:
            rest = sets[others[0]][axes[others[0]]]
            for q2 in others[1:]:
                rest = rest * sets[q2][axes[q2]]
            num = np.zeros((h, m))
            den = np.zeros((h, m))
            record_centroid_alloc(num.size + den.size)
            np.add.at(num, aq, X * rest)
            np.add.at(den, aq, rest * rest)
            ok = den >= DENOMINATOR_FLOOR
            sets[q][ok] = num[ok] / den[ok]


def _reseed_empty_inplace(sets, counts_nd, X, rng) -> None:
    """Resample any protocentroid all of whose incident cells are empty."""
    n = X.shape[0]
    p = counts_nd.ndim
    for q in range(p):
        marginal = counts_nd.sum(axis=tuple(a for a in range(p) if a != q))
        for j in np.flatnonzero(marginal == 0):
            sets[q][j] = X[rng.integers(n)]


def _delta_materialized(old_sets, new_sets, aggregator, cards) -> float:
    """Total squared movement of the materialized centroids, cell by cell."""
    n_cells = prod(cards)
    grids = np.unravel_index(np.arange(n_cells), cards)
    op = np.add if aggregator == "sum" else np.multiply
    acc = 0.0
    p = len(cards)
    for flat in range(n_cells):
        old = old_sets[0][grids[0][flat]]
        new = new_sets[0][grids[0][flat]]
        for q in range(1, p):
            old = op(old, old_sets[q][grids[q][flat]])
            new = op(new, new_sets[q][grids[q][flat]])
        acc += squared_shift(new, old)
    return acc


class _SingleRun(NamedTuple):
    sets: list[np.ndarray]
    labels: np.ndarray
    inertia: float
    n_iter: int
    converged: bool
    history: list[float]


def _run_single(X, cards, aggregator, init, max_iter, tol, rng, storage, n_threads) -> _SingleRun:
    sets = _init_sets(X, cards, aggregator, init, rng)
    old_sets = [s.copy() for s in sets]
    n_cells = prod(cards)
    history: list[float] = []
    converged = False
    n_iter = 0
    for _ in range(max_iter):
        labels, dmin = _assign_sets(X, sets, aggregator, storage, n_threads)
        history.append(float(dmin.sum()))
        _update_sets_inplace(sets, X, labels, aggregator)
        counts = np.bincount(labels, minlength=n_cells).reshape(cards)
        _reseed_empty_inplace(sets, counts, X, rng)
        n_iter += 1
        if _delta_materialized(old_sets, sets, aggregator, cards) < tol:
            converged = True
            break
        old_sets = [s.copy() for s in sets]
    labels, dmin = _assign_sets(X, sets, aggregator, storage, n_threads)
    inertia = float(dmin.sum())
    history.append(inertia)
    return _SingleRun(sets, labels, inertia, n_iter, converged, history)


# ---------------------------------------------------------------------------
# public functional API


def init_random(X, cardinalities, aggregator: str = "sum", random_state=None) -> core.ProtoSets:
    """Draw each set's protocentroids uniformly without replacement from X."""
    X = as_float_matrix(X)
    cards = check_cardinalities(cardinalities)
    rng = as_generator(random_state)
    return core.ProtoSets(tuple(_init_random_sets(X, cards, rng)), check_aggregator(aggregator))


def init_plus_plus(X, cardinalities, aggregator: str = "sum", random_state=None) -> core.ProtoSets:
    """Distance-proportional seeding adapted to the protocentroid structure.

    Samples ``1 + sum(h_q - 1)`` far-apart points by D^2 sampling, places the
    first ``h_1`` in set 1, gives every other set a neutral first slot, and
    fills remaining slots so that exactly that many materialized cells
    coincide with the sampled points.
    """
    X = as_float_matrix(X)
    cards = check_cardinalities(cardinalities)
    rng = as_generator(random_state)
    return core.ProtoSets(
        tuple(_init_plusplus_sets(X, cards, check_aggregator(aggregator), rng)),
        aggregator,
    )


def assign(X, protosets: core.ProtoSets, storage: str = "memory", n_threads=None):
    """Map each point to the cell with the nearest materialized centroid.

    Ties break toward the smallest flat index.  Returns (cells, sqdist).
    """
    X = as_float_matrix(X)
    if storage not in STORAGE_MODES:
        raise ValueError(f"storage must be one of {STORAGE_MODES}, got {storage!r}")
    if X.shape[1] != protosets.m:
        raise ValueError(f"X has {X.shape[1]} features, protosets expect {protosets.m}")
    return _assign_sets(
        X, list(protosets.sets), protosets.aggregator, storage, resolve_num_threads(n_threads)
    )


def update_protosets(X, cells, protosets: core.ProtoSets) -> core.ProtoSets:
    """One round of sequential closed-form updates given an assignment."""
    X = as_float_matrix(X)
    cells = as_int_labels(cells, n=X.shape[0], name="cells")
    if cells.size and cells.max() >= protosets.n_cells:
        raise ValueError("cell index out of range for the given protosets")
    sets = [s.copy() for s in protosets.sets]
    _update_sets_inplace(sets, X, cells, protosets.aggregator)
    return core.ProtoSets(tuple(sets), protosets.aggregator)


def handle_empty(protosets: core.ProtoSets, cells, X, random_state=None) -> core.ProtoSets:
    """Resample protocentroids whose incident cells are all empty."""
    X = as_float_matrix(X)
    cells = as_int_labels(cells, n=X.shape[0], name="cells")
    rng = as_generator(random_state)
    counts = np.bincount(cells, minlength=protosets.n_cells).reshape(protosets.cardinalities)
    sets = [s.copy() for s in protosets.sets]
    _reseed_empty_inplace(sets, counts, X, rng)
    return core.ProtoSets(tuple(sets), protosets.aggregator)


@dataclass(frozen=True)
class FitSummary:
    """Outcome of a fit: winning model plus restart provenance."""

    protosets: core.ProtoSets
    cells: np.ndarray
    inertia: float
    n_iter: int
    converged: bool
    restart_index: int
    inertia_history: tuple[float, ...]


def fit_khatri_rao(
    X,
    cardinalities,
    aggregator: str = "sum",
    *,
    init: str = "random",
    n_restarts: int = 20,
    max_iter: int = 200,
    tol: float = 1e-4,
    storage: str = "memory",
    random_state=None,
    n_threads=None,
) -> FitSummary:
    """Functional fit: best of ``n_restarts`` independent runs by inertia.

    Restart r draws its generator from ``derive_seed(seed, r)`` so restarts
    are independent yet reproducible.
    """
    X = as_float_matrix(X)
    cards = check_cardinalities(cardinalities)
    aggregator = check_aggregator(aggregator)
    if storage not in STORAGE_MODES:
        raise ValueError(f"storage must be one of {STORAGE_MODES}, got {storage!r}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    threads = resolve_num_threads(n_threads)
    root = _root_seed(random_state)
    best: _SingleRun | None = None
    best_r = 0
    for r in range(n_restarts):
        rng = np.random.default_rng(derive_seed(root, r))
        run = _run_single(X, cards, aggregator, init, max_iter, tol, rng, storage, threads)
        if best is None or run.inertia < best.inertia:
            best, best_r = run, r
    return FitSummary(
        protosets=core.ProtoSets(tuple(best.sets), aggregator),
        cells=best.labels,
        inertia=best.inertia,
        n_iter=best.n_iter,
        converged=best.converged,
        restart_index=best_r,
        inertia_history=tuple(best.history),
    )


# ---------------------------------------------------------------------------
# estimator


class KhatriRaoKMeans(BaseEstimator, TransformerMixin, ClusterMixin):
    """k-Means whose centroids are aggregations of small protocentroid sets.

    Parameters
    ----------
    cardinalities : sequence of int, default=(2, 2)
        Sizes (h_1, ..., h_p) of the protocentroid sets.  The model can
        represent up to ``prod(h_q)`` centroids with ``sum(h_q)`` vectors.
    aggregator : {"sum", "product"}, default="sum"
        Elementwise operation combining one protocentroid per set into a
        centroid.
    init : {"random", "plusplus"}, default="random"
        "random" samples data points per set; "plusplus" uses D^2 seeding.
    n_restarts : int, default=20
        Independent restarts; the smallest-inertia run wins.
    max_iter : int, default=200
    tol : float, default=1e-4
        Stop once the materialized centroids move less than this (total
        squared movement) in one iteration.
    storage : {"memory", "time"}, default="memory"
        "memory" aggregates centroids on the fly; "time" caches the full
        centroid matrix per iteration.  Results are bit-identical.
    random_state : int, Generator or None
    n_threads : int or None
        Threads for the assignment step; the KRCLUST_THREADS environment
        variable caps the effective value.  Results do not depend on it.

    Attributes
    ----------
    protosets_ : ProtoSets
    labels_ : (n,) flat cell index per training point
    cell_counts_ : (prod h_q,) occupancy per cell
    inertia_ : float
    n_iter_ : int
        Iterations of the winning restart.
    converged_ : bool
    best_restart_ : int
    inertia_history_ : tuple of float
        Inertia at each assignment step of the winning restart.
    """

    def __init__(
        self,
        cardinalities=(2, 2),
        aggregator="sum",
        *,
        init="random",
        n_restarts=20,
        max_iter=200,
        tol=1e-4,
        storage="memory",
        random_state=None,
        n_threads=None,
    ):
        self.cardinalities = cardinalities
        self.aggregator = aggregator
        self.init = init
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol
        self.storage = storage
        self.random_state = random_state
        self.n_threads = n_threads

    def fit(self, X, y=None):
        result = fit_khatri_rao(
            X,
            self.cardinalities,
            self.aggregator,
            init=self.init,
            n_restarts=self.n_restarts,
            max_iter=self.max_iter,
            tol=self.tol,
            storage=self.storage,
            random_state=self.random_state,
            n_threads=self.n_threads,
        )
        self.protosets_ = result.protosets
        self.labels_ = result.cells
        self.cell_counts_ = np.bincount(result.cells, minlength=result.protosets.n_cells)
        self.inertia_ = result.inertia
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.best_restart_ = result.restart_index
        self.inertia_history_ = result.inertia_history
        self.n_features_in_ = result.protosets.m
        return self

    @property
    def cluster_centers_(self) -> np.ndarray:
        """Materialized centroids of all cells, in flat-index order."""
        return core.materialize_centroids(self.protosets_)

    def predict(self, X):
        X = as_float_matrix(X)
        labels, _ = assign(X, self.protosets_, storage="time", n_threads=self.n_threads)
        return labels

    def transform(self, X):
        """Euclidean distances from each point to every cell centroid."""
        X = as_float_matrix(X)
        centers = self.cluster_centers_
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        return np.sqrt(d2)

    def score(self, X, y=None):
        X = as_float_matrix(X)
        _, dmin = assign(X, self.protosets_, storage="time", n_threads=self.n_threads)
        return -float(dmin.sum())


# ---------------------------------------------------------------------------
# model document I/O


def save_model(protosets: core.ProtoSets, path) -> None:
    """Write a protocentroid model as a JSON document.

    Fields: aggregator, p, cardinalities, m, sets.  Floats are written as
    shortest exact decimal (at most 17 significant digits), so a read
    round-trips bit for bit.
    """
    doc = {
        "aggregator": protosets.aggregator,
        "p": protosets.p,
        "cardinalities": list(protosets.cardinalities),
        "m": protosets.m,
        "sets": [[[float(v) for v in row] for row in s] for s in protosets.sets],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_model(path) -> core.ProtoSets:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for field in ("aggregator", "p", "cardinalities", "m", "sets"):
        if field not in doc:
            raise ValueError(f"model document missing field {field!r}")
    sets = tuple(np.asarray(s, dtype=np.float64) for s in doc["sets"])
    ps = core.ProtoSets(sets, doc["aggregator"])
    if ps.p != doc["p"] or list(ps.cardinalities) != list(doc["cardinalities"]) or ps.m != doc["m"]:
        raise ValueError("model document header inconsistent with its sets")
    return ps
