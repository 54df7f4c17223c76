"""Data model, aggregator algebra, and the cell-index bijection.

A clustering model here is a collection of ``p`` ordered protocentroid sets.
Every choice of one protocentroid per set identifies a *cell*; the cell's
centroid is the elementwise aggregation (sum or product) of the chosen
protocentroids.  Cells are addressed either by their index tuple
``(j_1, ..., j_p)`` or by a flat mixed-radix index with the last index
varying fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from ._validation import (
    as_float_matrix,
    as_int_labels,
    check_aggregator,
    check_cardinalities,
)

__all__ = [
    "Dataset",
    "ProtoSets",
    "aggregate",
    "neutral_element",
    "cell_to_flat",
    "flat_to_cell",
    "cell_strides",
    "cell_counts",
    "materialize_centroids",
    "materialize_cell",
]


@dataclass(frozen=True)
class Dataset:
    """An (n, m) matrix of points with optional integer ground-truth labels."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = as_float_matrix(self.points, "points")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = as_int_labels(self.labels, n=pts.shape[0])
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class ProtoSets:
    """Ordered protocentroid sets plus the aggregator combining them.

    ``sets[q]`` is an (h_q, m) matrix whose row j is the j-th protocentroid
    of set q.  All sets share the feature dimension m.
    """

    sets: tuple[np.ndarray, ...] = field()
    aggregator: str = "sum"

    def __post_init__(self):
        mats = tuple(as_float_matrix(s, f"sets[{q}]") for q, s in enumerate(self.sets))
        if len(mats) < 1:
            raise ValueError("ProtoSets needs at least one set")
        m = mats[0].shape[1]
        for q, s in enumerate(mats):
            if s.shape[1] != m:
                raise ValueError(
                    f"sets[{q}] has {s.shape[1]} columns, expected {m}"
                )
        object.__setattr__(self, "sets", mats)
        object.__setattr__(self, "aggregator", check_aggregator(self.aggregator))

    @property
    def p(self) -> int:
        return len(self.sets)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(s.shape[0] for s in self.sets)

    @property
    def m(self) -> int:
        return self.sets[0].shape[1]

    @property
    def n_cells(self) -> int:
        return prod(self.cardinalities)

    @property
    def n_vectors(self) -> int:
        return sum(self.cardinalities)


def aggregate(vectors, aggregator: str) -> np.ndarray:
    """Combine vectors elementwise: sum for "sum", Hadamard for "product".

    A singleton list is returned unchanged (as a copy).
    """
    check_aggregator(aggregator)
    vecs = [np.asarray(v, dtype=np.float64) for v in vectors]
    if not vecs:
        raise ValueError("aggregate needs at least one vector")
    shape = vecs[0].shape
    for q, v in enumerate(vecs):
        if v.shape != shape:
            raise ValueError(
                f"vector {q} has shape {v.shape}, expected {shape}"
            )
    out = vecs[0].copy()
    op = np.add if aggregator == "sum" else np.multiply
    for v in vecs[1:]:
        out = op(out, v)
    return out


def neutral_element(aggregator: str, m: int) -> np.ndarray:
    """Identity vector of the aggregator: zeros for sum, ones for product."""
    check_aggregator(aggregator)
    return np.zeros(m) if aggregator == "sum" else np.ones(m)


def cell_strides(radices) -> tuple[int, ...]:
    """Mixed-radix strides: stride[q] = prod of radices after q."""
    radices = check_cardinalities(radices)
    strides = []
    acc = 1
    for h in reversed(radices):
        strides.append(acc)
        acc *= h
    return tuple(reversed(strides))


def cell_to_flat(index_tuple, radices) -> int:
    """Encode a cell tuple as its flat index (last index fastest)."""
    radices = check_cardinalities(radices)
    idx = tuple(int(j) for j in index_tuple)
    if len(idx) != len(radices):
        raise ValueError(
            f"tuple length {len(idx)} does not match {len(radices)} radices"
        )
    flat = 0
    for j, h in zip(idx, radices):
        if not 0 <= j < h:
            raise IndexError(f"index {j} out of range for radix {h}")
        flat = flat * h + j
    return flat


def flat_to_cell(flat: int, radices) -> tuple[int, ...]:
    """Decode a flat index back into its cell tuple."""
    radices = check_cardinalities(radices)
    total = prod(radices)
    flat = int(flat)
    if not 0 <= flat < total:
        raise IndexError(f"flat index {flat} out of range [0, {total})")
    out = []
    for h in reversed(radices):
        out.append(flat % h)
        flat //= h
    return tuple(reversed(out))


def cell_counts(cells, n_cells: int) -> np.ndarray:
    """Per-cell occupancy of a flat assignment vector."""
    cells = as_int_labels(cells, name="cells")
    if cells.size and cells.max() >= n_cells:
        raise ValueError("cell index out of range")
    return np.bincount(cells, minlength=n_cells)


def materialize_centroids(protosets: ProtoSets) -> np.ndarray:
    """All cell centroids as a (prod h_q, m) matrix in flat-index order."""
    cards = protosets.cardinalities
    total = prod(cards)
    grids = np.unravel_index(np.arange(total), cards)
    out = protosets.sets[0][grids[0]].copy()
    op = np.add if protosets.aggregator == "sum" else np.multiply
    for q in range(1, protosets.p):
        out = op(out, protosets.sets[q][grids[q]])
    return out


def materialize_cell(protosets: ProtoSets, index_tuple) -> np.ndarray:
    """Centroid of a single cell, without touching the other cells."""
    idx = tuple(int(j) for j in index_tuple)
    if len(idx) != protosets.p:
        raise ValueError(f"tuple length {len(idx)} does not match p={protosets.p}")
    rows = [protosets.sets[q][j] for q, j in enumerate(idx)]
    return aggregate(rows, protosets.aggregator)
