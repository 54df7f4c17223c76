"""Calculators for sizing a protocentroid model before fitting.

Covers: splitting a target cluster count into the two closest factors,
choosing how many equal-size sets a vector budget should be split into,
bounding the number of sets guaranteed to represent k centroids, and the
parameter/rank accounting of elementwise products of low-rank factorizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import prod
from typing import NamedTuple

import numpy as np

from ._validation import as_float_matrix

__all__ = [
    "BalancedPair",
    "balanced_factor_pair",
    "OptimalSets",
    "optimal_num_sets",
    "SetCountBounds",
    "set_count_bounds",
    "divisors",
    "HadamardFactorization",
    "HadamardReconstruction",
    "hadamard_reconstruct",
]


class BalancedPair(NamedTuple):
    h1: int
    h2: int
    no_compression: bool


def balanced_factor_pair(k: int) -> BalancedPair:
    """The two factors of k closest in value, larger first.

    A prime (or 1) yields ``(k, 1)`` with ``no_compression=True``: storing
    k + 1 vectors to represent k centroids saves nothing.
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    h2 = 1
    for d in range(math.isqrt(k), 0, -1):
        if k % d == 0:
            h2 = d
            break
    h1 = k // h2
    return BalancedPair(h1, h2, no_compression=h2 == 1)


def divisors(b: int) -> list[int]:
    b = int(b)
    if b < 1:
        raise ValueError("b must be >= 1")
    small, large = [], []
    for d in range(1, math.isqrt(b) + 1):
        if b % d == 0:
            small.append(d)
            if d != b // d:
                large.append(b // d)
    return small + large[::-1]


class OptimalSets(NamedTuple):
    p: int
    representable: int


def optimal_num_sets(b: int) -> OptimalSets:
    """Split a budget of b vectors into p equal sets maximizing (b/p)^p.

    Only divisors p of b are admissible.  The winner is one of the two
    divisors nearest b/e; ties go to the smaller p (fewer sets keep the
    optimization easier).
    """
    best_p = 1
    best_val = 0
    for p in divisors(b):
        val = (b // p) ** p  # exact integer arithmetic
        if val > best_val:
            best_p, best_val = p, val
    return OptimalSets(best_p, best_val)


class SetCountBounds(NamedTuple):
    lower: float
    upper: int


def set_count_bounds(k: int, h_min: int) -> SetCountBounds:
    """Bounds on the number of sets guaranteed to represent k centroids,
    when every set holds at least h_min protocentroids.
    """
    k = int(k)
    h_min = int(h_min)
    if k < 1:
        raise ValueError("k must be >= 1")
    if h_min < 2:
        raise ValueError("h_min must be >= 2")
    lower = math.log(k) / math.log(h_min)
    upper = -(-k // (h_min - 1))
    return SetCountBounds(lower, upper)


@dataclass(frozen=True)
class HadamardFactorization:
    """A d x m matrix expressed as the elementwise product of low-rank products.

    ``factors[i]`` is a pair (A_i, B_i) with A_i of shape (d, r_i) and B_i of
    shape (r_i, m).
    """

    factors: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        if len(self.factors) < 1:
            raise ValueError("need at least one factor pair")
        pairs = []
        d = m = None
        for i, (a, b) in enumerate(self.factors):
            a = as_float_matrix(a, f"A[{i}]")
            b = as_float_matrix(b, f"B[{i}]")
            if a.shape[1] != b.shape[0]:
                raise ValueError(
                    f"factor {i}: A has {a.shape[1]} columns but B has {b.shape[0]} rows"
                )
            if d is None:
                d, m = a.shape[0], b.shape[1]
            elif a.shape[0] != d or b.shape[1] != m:
                raise ValueError(f"factor {i} is not conformable to {d}x{m}")
            pairs.append((a, b))
        object.__setattr__(self, "factors", tuple(pairs))

    @property
    def q(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.factors[0][0].shape[0], self.factors[0][1].shape[1])

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(a.shape[1] for a, _ in self.factors)


@dataclass(frozen=True)
class HadamardReconstruction:
    matrix: np.ndarray
    param_count: int
    full_param_count: int
    rank_bound: int


def hadamard_reconstruct(hf: HadamardFactorization) -> HadamardReconstruction:
    """Evaluate the elementwise product of the factor products, with accounting.

    The reconstruction stores ``sum_i r_i * (d + m)`` scalars instead of
    ``d * m`` and its rank never exceeds ``prod(r_i)`` (an upper bound, not a
    guarantee of attainment).
    """
    d, m = hf.shape
    out = hf.factors[0][0] @ hf.factors[0][1]
    for a, b in hf.factors[1:]:
        out = out * (a @ b)
    return HadamardReconstruction(
        matrix=out,
        param_count=sum(r * (d + m) for r in hf.ranks),
        full_param_count=d * m,
        rank_bound=prod(hf.ranks),
    )
