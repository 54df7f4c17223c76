"""Input validation helpers shared across the package."""

from __future__ import annotations

import os

import numpy as np

AGGREGATORS = ("sum", "product")


class InsufficientDataError(ValueError):
    """Raised when a dataset is too small for the requested initialization."""


class DataFormatError(ValueError):
    """Raised when an input file cannot be parsed."""


def as_float_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a C-contiguous (n, m) float64 matrix with finite entries."""
    arr = np.ascontiguousarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_int_labels(y, n: int | None = None, name: str = "labels") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional")
    if not np.issubdtype(arr.dtype, np.integer):
        cast = arr.astype(np.int64)
        if not np.array_equal(cast, arr):
            raise ValueError(f"{name} must be integers")
        arr = cast
    else:
        arr = arr.astype(np.int64)
    if (arr < 0).any():
        raise ValueError(f"{name} must be non-negative")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def check_cardinalities(cardinalities) -> tuple[int, ...]:
    cards = tuple(int(h) for h in np.atleast_1d(cardinalities))
    if len(cards) < 1:
        raise ValueError("cardinalities must contain at least one set size")
    if any(h < 1 for h in cards):
        raise ValueError(f"cardinalities must all be >= 1, got {cards}")
    return cards


def check_aggregator(aggregator: str) -> str:
    if aggregator not in AGGREGATORS:
        raise ValueError(
            f"aggregator must be one of {AGGREGATORS}, got {aggregator!r}"
        )
    return aggregator


def as_generator(random_state) -> np.random.Generator:
    """Accept None, an int seed, or a Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def resolve_num_threads(n_threads: int | None) -> int:
    """Resolve a thread count, honoring the KRCLUST_THREADS cap."""
    requested = 1 if n_threads is None else max(1, int(n_threads))
    cap = os.environ.get("KRCLUST_THREADS")
    if cap:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            pass
    return requested
