"""Permutations, cycle types, and the two permutation models.

Permutations on ``{0, ..., n-1}`` are stored in one-line notation as tuples:
``p[x]`` is the image of ``x``.  ``compose(p, q)`` is "q first": the right
action of a transposition swaps images at two positions, matching the pair
construction ``pi'' = pi' . tau_IJ``; conjugation relabels two values in the
cycle structure, matching ``pi'' = tau_IJ . pi' . tau_IJ``.

The two models are the uniform law on the symmetric group and the uniform
law on a single fixed-point-free conjugacy class (a cycle type).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import SupportCapExceeded

__all__ = [
    "Permutation",
    "CycleType",
    "PermutationModel",
    "identity",
    "compose",
    "inverse",
    "apply_transposition",
    "conjugate_by_transposition",
    "cycle_type_of",
    "cycle_length_at",
    "canonical_cycles",
    "DEFAULT_SUPPORT_CAP",
]

Permutation = tuple  # one-line notation, tuple[int, ...]

DEFAULT_SUPPORT_CAP = math.factorial(8)


def identity(n: int) -> Permutation:
    return tuple(range(n))


def compose(p: Permutation, q: Permutation) -> Permutation:
    """(p . q)(x) = p[q[x]]."""
    return tuple(p[q[x]] for x in range(len(p)))


def inverse(p: Permutation) -> Permutation:
    out = [0] * len(p)
    for x, y in enumerate(p):
        out[y] = x
    return tuple(out)


def apply_transposition(p: Permutation, i: int, j: int) -> Permutation:
    """Right action p . tau_ij: swap the images at positions i and j."""
    out = list(p)
    out[i], out[j] = out[j], out[i]
    return tuple(out)


def conjugate_by_transposition(p: Permutation, i: int, j: int) -> Permutation:
    """tau_ij . p . tau_ij: interchange the values i and j in cycle form."""
    out = list(p)
    n = len(p)
    t = list(range(n))
    t[i], t[j] = j, i
    for x in range(n):
        out[x] = t[p[t[x]]]
    return tuple(out)


def cycle_length_at(p: Permutation, x: int) -> int:
    length = 1
    y = p[x]
    while y != x:
        y = p[y]
        length += 1
    return length


def canonical_cycles(p: Permutation) -> tuple[tuple[int, ...], ...]:
    """Cycle decomposition, each cycle led by its minimum, cycles sorted by
    (length, leading element)."""
    seen = [False] * len(p)
    cycles = []
    for x in range(len(p)):
        if seen[x]:
            continue
        cyc = [x]
        seen[x] = True
        y = p[x]
        while y != x:
            cyc.append(y)
            seen[y] = True
            y = p[y]
        m = cyc.index(min(cyc))
        cycles.append(tuple(cyc[m:] + cyc[:m]))
    cycles.sort(key=lambda c: (len(c), c[0]))
    return tuple(cycles)


@dataclass(frozen=True)
class CycleType:
    """Multiset of cycle lengths, stored as sorted (length, count) pairs."""

    counts: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple(sorted((int(q), int(c)) for q, c in self.counts if c))
        if any(q < 1 or c < 1 for q, c in pairs):
            raise ValueError("cycle lengths and counts must be positive")
        if len({q for q, _ in pairs}) != len(pairs):
            raise ValueError("duplicate cycle length in counts")
        object.__setattr__(self, "counts", pairs)

    @classmethod
    def from_lengths(cls, lengths) -> "CycleType":
        uniq = sorted(set(lengths))
        return cls(tuple((q, list(lengths).count(q)) for q in uniq))

    @property
    def n(self) -> int:
        return sum(q * c for q, c in self.counts)

    def count(self, q: int) -> int:
        return dict(self.counts).get(q, 0)

    @property
    def lengths(self) -> tuple[int, ...]:
        out = []
        for q, c in self.counts:
            out.extend([q] * c)
        return tuple(out)

    @property
    def has_fixed_points(self) -> bool:
        return self.count(1) > 0

    def class_size(self) -> int:
        size = math.factorial(self.n)
        for q, c in self.counts:
            size //= q ** c * math.factorial(c)
        return size


def cycle_type_of(p: Permutation) -> CycleType:
    return CycleType.from_lengths([len(c) for c in canonical_cycles(p)])


@dataclass(frozen=True)
class PermutationModel:
    """Uniform law on S_n (``cycle_type is None``) or on a conjugacy class.

    The class model requires n >= 4 and no fixed points; the uniform model
    requires n >= 3 (the exchangeable-pair shrinkage 2/(n-1) must lie in
    (0, 1]).
    """

    n: int
    cycle_type: CycleType | None = None

    def __post_init__(self):
        if self.cycle_type is None:
            if self.n < 3:
                raise ValueError("uniform model needs n >= 3")
        else:
            if self.cycle_type.n != self.n:
                raise ValueError("cycle type does not fill n")
            if self.n < 4:
                raise ValueError("cycle-type model needs n >= 4")
            if self.cycle_type.has_fixed_points:
                raise ValueError("cycle-type model must have no fixed points")

    @property
    def is_uniform(self) -> bool:
        return self.cycle_type is None

    def support_size(self) -> int:
        if self.is_uniform:
            return math.factorial(self.n)
        return self.cycle_type.class_size()

    def contains(self, p: Permutation) -> bool:
        if len(p) != self.n or sorted(p) != list(range(self.n)):
            return False
        if self.is_uniform:
            return True
        return cycle_type_of(p) == self.cycle_type

    # -- sampling -----------------------------------------------------------

    def sample(self, rng: np.random.Generator) -> Permutation:
        if self.is_uniform:
            return tuple(int(x) for x in rng.permutation(self.n))
        return self._fill_template(rng.permutation(self.n))

    def sample_batch(self, rng: np.random.Generator, reps: int) -> np.ndarray:
        """(reps, n) array of independent draws."""
        orderings = np.argsort(rng.random((reps, self.n)), axis=1)
        if self.is_uniform:
            return orderings
        out = np.empty((reps, self.n), dtype=np.int64)
        for r in range(reps):
            out[r] = self._fill_template(orderings[r])
        return out

    def _fill_template(self, arrangement) -> Permutation:
        """Write a uniform arrangement into fixed cycle slots.

        Every class element arises from the same number of arrangements,
        so the result is uniform on the class.
        """
        out = [0] * self.n
        pos = 0
        for q in self.cycle_type.lengths:
            slot = arrangement[pos:pos + q]
            for a, b in zip(slot, np.roll(slot, -1)):
                out[int(a)] = int(b)
            pos += q
        return tuple(out)

    # -- enumeration --------------------------------------------------------

    def enumerate_support(self, cap: int = DEFAULT_SUPPORT_CAP) -> Iterator[Permutation]:
        """All support points, each carrying probability 1/support_size().

        Enumeration walks the ambient n! permutations (the class model
        filters them), so the cap is checked against n!.
        """
        ambient = math.factorial(self.n)
        if ambient > cap:
            raise SupportCapExceeded(
                f"enumeration over {ambient} permutations exceeds cap {cap}")
        if self.is_uniform:
            yield from itertools.permutations(range(self.n))
            return
        want = self.cycle_type
        for p in itertools.permutations(range(self.n)):
            if cycle_type_of(p) == want:
                yield p
