"""Simulated federated clustering with exact communication accounting.

One round: the server broadcasts the current model, every client assigns its
shard to the nearest materialized centroid and returns per-cell coordinate
sums and counts, and the server applies the exact closed-form update to those
aggregated statistics.  With full participation this reproduces centralized
iterations, so the only difference between broadcasting centroids (k vectors)
and protocentroid sets (sum of h_q vectors) is the downstream traffic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from . import core
from ._engine import AUX_STREAM_BASE, assign_points, derive_seed
from .krkmeans import DENOMINATOR_FLOOR, _init_sets
from .baselines import _init_centroids
from ._validation import (
    as_float_matrix,
    check_aggregator,
    check_cardinalities,
    resolve_num_threads,
)

__all__ = [
    "FederatedConfig",
    "RoundRecord",
    "CommLedger",
    "FederatedResult",
    "partition",
    "client_stats",
    "server_update",
    "run_federated",
    "write_ledger_csv",
]

MODEL_KINDS = ("lloyd", "khatri_rao")

# rng stream for the shard partitioner, disjoint from model restart streams
_PARTITION_STREAM = AUX_STREAM_BASE + 1


@dataclass(frozen=True)
class FederatedConfig:
    """Simulation settings: who participates, what model, and for how long."""

    n_clients: int
    rounds: int
    model_kind: str
    k: int | None = None
    cardinalities: tuple[int, ...] | None = None
    aggregator: str = "sum"
    init: str = "random"
    seed: int = 0
    bytes_per_scalar: int = 8
    partition: str = "uniform"

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
        if self.model_kind == "lloyd":
            if self.k is None or self.k < 1:
                raise ValueError("lloyd model needs k >= 1")
        else:
            object.__setattr__(
                self, "cardinalities", check_cardinalities(self.cardinalities)
            )
            check_aggregator(self.aggregator)
        if self.bytes_per_scalar < 1:
            raise ValueError("bytes_per_scalar must be >= 1")
        if self.partition != "uniform":
            raise ValueError("only the uniform random partition is implemented")

    @property
    def n_cells(self) -> int:
        return self.k if self.model_kind == "lloyd" else prod(self.cardinalities)

    @property
    def broadcast_vectors(self) -> int:
        return self.k if self.model_kind == "lloyd" else sum(self.cardinalities)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    server_to_clients_bytes: int
    clients_to_server_bytes: int
    inertia_after_round: float


@dataclass
class CommLedger:
    rows: list[RoundRecord] = field(default_factory=list)

    @property
    def cumulative_downstream(self) -> list[int]:
        out, acc = [], 0
        for r in self.rows:
            acc += r.server_to_clients_bytes
            out.append(acc)
        return out


def write_ledger_csv(ledger: CommLedger, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("round,s2c_bytes,c2s_bytes,inertia\n")
        for r in ledger.rows:
            fh.write(
                f"{r.round},{r.server_to_clients_bytes},"
                f"{r.clients_to_server_bytes},{format(r.inertia_after_round, '.17g')}\n"
            )


def partition(X, n_clients: int, seed: int = 0) -> list[np.ndarray]:
    """Uniform random split into shards whose sizes differ by at most one."""
    X = as_float_matrix(X)
    n = X.shape[0]
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if n_clients > n:
        raise ValueError(f"cannot split {n} points across {n_clients} clients")
    rng = np.random.default_rng(derive_seed(seed, _PARTITION_STREAM))
    order = rng.permutation(n)
    sizes = np.full(n_clients, n // n_clients, dtype=np.int64)
    sizes[: n % n_clients] += 1
    shards, start = [], 0
    for size in sizes:
        shards.append(X[order[start : start + size]].copy())
        start += size
    return shards


def _centroid_matrix(model) -> np.ndarray:
    if isinstance(model, core.ProtoSets):
        return core.materialize_centroids(model)
    return np.asarray(model, dtype=np.float64)


def client_stats(shard, model, n_threads=None):
    """Per-cell coordinate sums and counts of one client's shard.

    ``model`` is either a centroid matrix or a ProtoSets.  Stats are additive
    across clients: summing them reproduces the whole-dataset statistics.
    """
    centers = _centroid_matrix(model)
    n_cells = centers.shape[0]
    sums = np.zeros((n_cells, centers.shape[1]))
    counts = np.zeros(n_cells, dtype=np.int64)
    if shard is None or len(shard) == 0:
        return sums, counts
    shard = as_float_matrix(shard, "shard")

    def rows():
        return ((j, centers[j]) for j in range(n_cells))

    labels, _ = assign_points(shard, rows, n_cells, resolve_num_threads(n_threads))
    np.add.at(sums, labels, shard)
    counts += np.bincount(labels, minlength=n_cells)
    return sums, counts


def server_update(sums, counts, model, reseed_pool=None, rng=None):
    """Apply the exact closed-form update to aggregated per-cell statistics.

    For a centroid model each occupied cell becomes its mean.  For a
    protocentroid model the sets are updated sequentially; because the
    cross-set factor is constant within a cell, per-cell sums and counts
    carry exactly the information the closed-form update needs.

    Cells or protocentroids left without any point are reseeded from
    ``reseed_pool`` when given, mirroring the centralized policy.
    """
    sums = np.asarray(sums, dtype=np.float64)
    counts = np.asarray(counts)
    if isinstance(model, core.ProtoSets):
        sets = [s.copy() for s in model.sets]
        cards = model.cardinalities
        counts_nd = counts.reshape(cards)
        sums_nd = sums.reshape(*cards, model.m)
        p = len(cards)
        for q in range(p):
            other_axes = tuple(a for a in range(p) if a != q)
            if model.aggregator == "sum" or p == 1:
                if p == 1:
                    offset = 0.0
                else:
                    offset = _other_aggregate(sets, cards, q, "sum")
                num = (sums_nd - counts_nd[..., None] * offset).sum(axis=other_axes)
                cnt = counts_nd.sum(axis=other_axes)
                upd = cnt > 0
                sets[q][upd] = num[upd] / cnt[upd][:, None]
            else:
                rest = _other_aggregate(sets, cards, q, "product")
                num = (sums_nd * rest).sum(axis=other_axes)
                den = (counts_nd[..., None] * rest * rest).sum(axis=other_axes)
                ok = den >= DENOMINATOR_FLOOR
                sets[q][ok] = num[ok] / den[ok]
        if reseed_pool is not None and rng is not None:
            for q in range(p):
                marginal = counts_nd.sum(axis=tuple(a for a in range(p) if a != q))
                for j in np.flatnonzero(marginal == 0):
                    sets[q][j] = reseed_pool[rng.integers(reseed_pool.shape[0])]
        return core.ProtoSets(tuple(sets), model.aggregator)

    centers = np.asarray(model, dtype=np.float64).copy()
    occupied = counts > 0
    centers[occupied] = sums[occupied] / counts[occupied][:, None]
    if reseed_pool is not None and rng is not None:
        for j in np.flatnonzero(counts == 0):
            centers[j] = reseed_pool[rng.integers(reseed_pool.shape[0])]
    return centers


def _other_aggregate(sets, cards, q, aggregator):
    """Aggregate of all sets except q, broadcast over the full cell grid."""
    p = len(cards)
    m = sets[0].shape[1]
    out = None
    for q2 in range(p):
        if q2 == q:
            continue
        shape = [1] * p + [m]
        shape[q2] = cards[q2]
        piece = sets[q2].reshape(shape)
        if out is None:
            out = piece
        elif aggregator == "sum":
            out = out + piece
        else:
            out = out * piece
    return np.broadcast_to(out, tuple(cards) + (m,))


@dataclass(frozen=True)
class FederatedResult:
    model_kind: str
    protosets: core.ProtoSets | None
    centroids: np.ndarray
    cells: np.ndarray
    inertia: float
    rounds: int


def run_federated(X, cfg: FederatedConfig, n_threads=None) -> tuple[FederatedResult, CommLedger]:
    """Run the round loop with exact byte accounting.

    Per round, downstream traffic is ``n_clients * V * m * bytes_per_scalar``
    where V is the number of broadcast vectors (k for a centroid model, the
    total protocentroid count otherwise); upstream traffic is
    ``n_clients * (n_cells * m + n_cells) * bytes_per_scalar`` and is the same
    for both model kinds.  The ledger records inertia after every round.
    """
    X = as_float_matrix(X)
    n, m = X.shape
    threads = resolve_num_threads(n_threads)
    shards = partition(X, cfg.n_clients, cfg.seed)

    # model stream matches restart 0 of a centralized fit with the same seed
    rng = np.random.default_rng(derive_seed(cfg.seed, 0))
    if cfg.model_kind == "lloyd":
        model = _init_centroids(X, cfg.k, cfg.init, rng)
    else:
        sets = _init_sets(X, cfg.cardinalities, cfg.aggregator, cfg.init, rng)
        model = core.ProtoSets(tuple(sets), cfg.aggregator)

    n_cells = cfg.n_cells
    s2c = cfg.n_clients * cfg.broadcast_vectors * m * cfg.bytes_per_scalar
    c2s = cfg.n_clients * (n_cells * m + n_cells) * cfg.bytes_per_scalar

    ledger = CommLedger()
    labels = np.zeros(n, dtype=np.int64)
    for rnd in range(1, cfg.rounds + 1):
        total_sums = np.zeros((n_cells, m))
        total_counts = np.zeros(n_cells, dtype=np.int64)
        for shard in shards:
            sums, counts = client_stats(shard, model, n_threads=threads)
            total_sums += sums
            total_counts += counts
        model = server_update(total_sums, total_counts, model, reseed_pool=X, rng=rng)
        centers = _centroid_matrix(model)

        def rows():
            return ((j, centers[j]) for j in range(n_cells))

        labels, dmin = assign_points(X, rows, n_cells, threads)
        ledger.rows.append(
            RoundRecord(
                round=rnd,
                server_to_clients_bytes=s2c,
                clients_to_server_bytes=c2s,
                inertia_after_round=float(dmin.sum()),
            )
        )

    centers = _centroid_matrix(model)
    result = FederatedResult(
        model_kind=cfg.model_kind,
        protosets=model if isinstance(model, core.ProtoSets) else None,
        centroids=centers,
        cells=labels,
        inertia=ledger.rows[-1].inertia_after_round,
        rounds=cfg.rounds,
    )
    return result, ledger
