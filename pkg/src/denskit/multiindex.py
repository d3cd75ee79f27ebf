"""Multi-index arithmetic for partial derivatives in several variables.

All counting is exact integer arithmetic; no floats enter anywhere.
"""
from __future__ import annotations

import itertools
import math
from typing import Iterable, Iterator


class MultiIndex:
    """An immutable tuple of non-negative integers with componentwise arithmetic."""

    __slots__ = ("entries",)

    def __init__(self, entries: Iterable[int]):
        ent = tuple(int(e) for e in entries)
        if any(e < 0 for e in ent):
            raise ValueError(f"multi-index entries must be non-negative, got {ent}")
        object.__setattr__(self, "entries", ent)

    def __setattr__(self, name, value):
        raise AttributeError("MultiIndex is immutable")

    @property
    def dimension(self) -> int:
        return len(self.entries)

    def _check_dim(self, other: "MultiIndex") -> None:
        if self.dimension != other.dimension:
            raise ValueError(
                f"dimension mismatch: {self.dimension} vs {other.dimension}"
            )

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        self._check_dim(other)
        return MultiIndex(a + b for a, b in zip(self.entries, other.entries))

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        self._check_dim(other)
        # ValueError from the constructor if any entry would go negative
        return MultiIndex(a - b for a, b in zip(self.entries, other.entries))

    def __getitem__(self, i: int) -> int:
        return self.entries[i]

    def __iter__(self) -> Iterator[int]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, MultiIndex) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def __repr__(self) -> str:
        return f"MultiIndex{self.entries}"

    @staticmethod
    def zero(dimension: int) -> "MultiIndex":
        return MultiIndex((0,) * dimension)

    @staticmethod
    def unit(dimension: int, axis: int) -> "MultiIndex":
        e = [0] * dimension
        e[axis] = 1
        return MultiIndex(e)


def order(alpha: MultiIndex) -> int:
    """Total order |alpha|, the number of elementary derivatives."""
    return sum(alpha.entries)


def leq(beta: MultiIndex, alpha: MultiIndex) -> bool:
    """Componentwise partial order beta <= alpha."""
    beta._check_dim(alpha)
    return all(b <= a for b, a in zip(beta.entries, alpha.entries))


def multi_binomial(alpha: MultiIndex, beta: MultiIndex) -> int:
    """Product of componentwise binomial coefficients; zero unless beta <= alpha."""
    alpha._check_dim(beta)
    if not leq(beta, alpha):
        return 0
    out = 1
    for a, b in zip(alpha.entries, beta.entries):
        out *= math.comb(a, b)
    return out


def leibniz_expansion(alpha: MultiIndex) -> list[tuple[MultiIndex, MultiIndex, int]]:
    """All splittings of a product-rule derivative of order alpha.

    Returns every (beta, alpha - beta, multi_binomial(alpha, beta)) with
    beta <= alpha.  The number of entries is prod(alpha_i + 1) and the
    coefficients sum to 2**order(alpha).
    """
    ranges = [range(a + 1) for a in alpha.entries]
    out = []
    for combo in itertools.product(*ranges):
        beta = MultiIndex(combo)
        out.append((beta, alpha - beta, multi_binomial(alpha, beta)))
    return out


def fixed_order_count(alpha: MultiIndex, b: int) -> int:
    """Sum of multi_binomial(alpha, beta) over beta <= alpha with order(beta) == b.

    Computed by convolving the per-axis binomial rows, i.e. collecting the
    beta-sum axis by axis, so exact integers throughout.
    """
    if b < 0 or b > order(alpha):
        return 0
    coeffs = [1]
    for a in alpha.entries:
        row = [math.comb(a, k) for k in range(a + 1)]
        new = [0] * (len(coeffs) + a)
        for i, c in enumerate(coeffs):
            for k, r in enumerate(row):
                new[i + k] += c * r
        coeffs = new
    return coeffs[b]


def indices_up_to(dimension: int, max_order: int) -> list[MultiIndex]:
    """All multi-indices of the given dimension with total order <= max_order."""
    out = []
    for total in range(max_order + 1):
        out.extend(_indices_of_order(dimension, total))
    return out


def _indices_of_order(dimension: int, total: int) -> list[MultiIndex]:
    if dimension == 1:
        return [MultiIndex((total,))]
    out = []
    for first in range(total + 1):
        for rest in _indices_of_order(dimension - 1, total - first):
            out.append(MultiIndex((first,) + rest.entries))
    return out
