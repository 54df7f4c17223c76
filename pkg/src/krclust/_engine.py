"""Low-level kernels shared by the clustering engines.

Everything here is deliberately order-deterministic: assignments walk cells
in ascending flat order (ties go to the lowest index), per-cell statistics
accumulate in point order, and restart seeds derive from a splitmix64 mix so
independent runs are reproducible bit for bit.
"""

from __future__ import annotations

import contextlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream indices >= this constant are reserved for non-restart uses
# (e.g. the federated partition stream) so they never collide with
# restart streams 0..n_restarts-1.
AUX_STREAM_BASE = 1 << 32

# Instrumentation hooks.  When a list is installed, the kernels append to it;
# the overhead is a single `is not None` check otherwise.
_DIST_EVALS: list | None = None
_CENTROID_ALLOCS: list | None = None


@contextlib.contextmanager
def track_distance_evals():
    """Record the number of point-to-centroid distance evaluations per pass."""
    global _DIST_EVALS
    prev, _DIST_EVALS = _DIST_EVALS, []
    try:
        yield _DIST_EVALS
    finally:
        _DIST_EVALS = prev


@contextlib.contextmanager
def track_centroid_allocations():
    """Record element counts of centroid/protocentroid buffer allocations."""
    global _CENTROID_ALLOCS
    prev, _CENTROID_ALLOCS = _CENTROID_ALLOCS, []
    try:
        yield _CENTROID_ALLOCS
    finally:
        _CENTROID_ALLOCS = prev


def record_centroid_alloc(n_elements: int) -> None:
    if _CENTROID_ALLOCS is not None:
        _CENTROID_ALLOCS.append(int(n_elements))


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, stream: int) -> int:
    """Child seed for an independent stream (restart index, partitioner, ...)."""
    return splitmix64((splitmix64(seed & _MASK64) + stream) & _MASK64)


def _assign_block(X, rows, dmin, labels):
    """Update running nearest-cell state for one block of points, in place.

    ``rows`` yields (flat_index, centroid) pairs in ascending flat order;
    strict `<` keeps ties at the lowest flat index.
    """
    for j, mu in rows:
        diff = X - mu
        d = np.einsum("ij,ij->i", diff, diff)
        better = d < dmin
        labels[better] = j
        dmin[better] = d[better]


def assign_points(X, centroid_rows, n_cells, n_threads: int = 1):
    """Nearest-centroid assignment over all cells.

    Parameters
    ----------
    X : (n, m) array
    centroid_rows : callable
        ``centroid_rows()`` returns an iterator of (flat_index, row) pairs.
        Called once per thread, so on-the-fly aggregation stays thread-local.
    n_cells : int
    n_threads : int
        Points are split into contiguous chunks processed in parallel; every
        point's result is independent of the chunking, so the output is
        bit-identical for any thread count.

    Returns
    -------
    labels : (n,) int64 flat cell indices
    dmin : (n,) float64 squared distance to the assigned centroid
    """
    n = X.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    dmin = np.full(n, np.inf)
    if _DIST_EVALS is not None:
        _DIST_EVALS.append(n * n_cells)
    if n_threads <= 1 or n < 2 * n_threads:
        _assign_block(X, centroid_rows(), dmin, labels)
        return labels, dmin

    bounds = np.linspace(0, n, n_threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        futures = [
            pool.submit(
                _assign_block,
                X[lo:hi],
                centroid_rows(),
                dmin[lo:hi],
                labels[lo:hi],
            )
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        for f in futures:
            f.result()
    return labels, dmin


def squared_shift(new_row: np.ndarray, old_row: np.ndarray) -> float:
    d = new_row - old_row
    return float((d * d).sum())


def dsq_sample(X: np.ndarray, n_seeds: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seed sampling: first uniform, then D^2-proportional."""
    n = X.shape[0]
    chosen = np.empty(n_seeds, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for t in range(1, n_seeds):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            idx = rng.choice(n, p=probs)
        else:
            # all remaining mass at distance zero (duplicate-heavy data)
            idx = rng.integers(n)
        chosen[t] = idx
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()
