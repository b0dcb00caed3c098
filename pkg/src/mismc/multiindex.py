"""Multi-index combinatorics for mixed-difference estimators.

A multi-index alpha assigns a resolution exponent to each refinement axis
(resolution 2**-alpha_i along axis i).  The mixed difference at alpha is a
signed sum over the "corners" obtained by decrementing any subset of the
nonzero coordinates; terms whose decrement would go below zero vanish.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence


@dataclass(frozen=True, order=True)
class MultiIndex:
    """Vector of non-negative resolution exponents."""

    entries: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.entries, tuple):
            object.__setattr__(self, "entries", tuple(int(e) for e in self.entries))
        if any(e < 0 for e in self.entries):
            raise ValueError(f"multi-index entries must be non-negative: {self.entries}")

    @property
    def dim(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> int:
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    def __add__(self, other: "MultiIndex | Sequence[int]") -> "MultiIndex":
        other_entries = tuple(other)
        return MultiIndex(tuple(a + b for a, b in zip(self.entries, other_entries)))

    def __repr__(self) -> str:
        return f"MultiIndex{self.entries}"


def mi(*entries: int) -> MultiIndex:
    """Shorthand constructor: mi(1, 2) == MultiIndex((1, 2))."""
    return MultiIndex(tuple(entries))


@dataclass(frozen=True)
class SignedCorner:
    """One term of the mixed difference: a neighboring index and its sign."""

    index: MultiIndex
    sign: int


def corners(alpha: MultiIndex) -> list[SignedCorner]:
    """All surviving corners of the mixed difference at alpha, with signs.

    The sign is (-1)**(number of decremented coordinates).  Corners whose
    decrement crosses below zero are omitted (their terms are identically
    zero), so the list has 2**#{i: alpha_i > 0} entries.  Order is
    decreasing lexicographic from alpha, so the first corner is alpha itself.
    """
    active = [i for i, a in enumerate(alpha) if a > 0]
    out = []
    for subset in itertools.product((0, 1), repeat=len(active)):
        entries = list(alpha.entries)
        for i, dec in zip(active, subset):
            entries[i] -= dec
        out.append(SignedCorner(MultiIndex(tuple(entries)), -1 if sum(subset) % 2 else 1))
    out.sort(key=lambda c: c.index.entries, reverse=True)
    return out


def mixed_difference(values: Mapping[MultiIndex, float], alpha: MultiIndex) -> float:
    """Signed corner sum of a deterministic map at alpha."""
    total = 0.0
    for c in corners(alpha):
        if c.index not in values:
            raise KeyError(f"missing corner value at {c.index}")
        total += c.sign * values[c.index]
    return total


@dataclass(frozen=True)
class IndexSet:
    """Ordered collection of multi-indices (lexicographic)."""

    kind: str
    members: tuple[MultiIndex, ...]

    def __iter__(self):
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, alpha: MultiIndex) -> bool:
        return alpha in set(self.members)

    def all_corners(self) -> tuple[MultiIndex, ...]:
        """Union of members and their corner indices, sorted."""
        seen = set()
        for alpha in self.members:
            for c in corners(alpha):
                seen.add(c.index)
        return tuple(sorted(seen))


def tensor_product_set(L: Sequence[int]) -> IndexSet:
    """All alpha with alpha_i <= L_i."""
    L = tuple(int(v) for v in L)
    if any(v < 0 for v in L):
        raise ValueError(f"tensor-product bounds must be non-negative: {L}")
    members = tuple(
        MultiIndex(entries) for entries in itertools.product(*(range(v + 1) for v in L))
    )
    return IndexSet("tensor_product", tuple(sorted(members)))


def total_degree_set(L: float, delta: Sequence[float]) -> IndexSet:
    """All alpha with sum_i delta_i * alpha_i <= L.

    The weights must satisfy sum(delta) == 1 (to 1e-12) with each
    delta_i in (0, 1].
    """
    delta = tuple(float(d) for d in delta)
    if abs(sum(delta) - 1.0) > 1e-12:
        raise ValueError(f"total-degree weights must sum to 1, got {sum(delta)}")
    if any(d <= 0.0 or d > 1.0 for d in delta):
        raise ValueError(f"total-degree weights must lie in (0, 1]: {delta}")
    bounds = [math.floor(L / d + 1e-12) for d in delta]
    members = []
    for entries in itertools.product(*(range(b + 1) for b in bounds)):
        if sum(d * a for d, a in zip(delta, entries)) <= L + 1e-12:
            members.append(MultiIndex(entries))
    return IndexSet("total_degree", tuple(sorted(members)))


def delta_from_rates(s: Sequence[float]) -> tuple[float, ...]:
    """Total-degree weights proportional to the bias decay rates."""
    s = [float(v) for v in s]
    if any(v <= 0 for v in s):
        raise ValueError("rates must be positive")
    total = sum(s)
    return tuple(v / total for v in s)
