"""Permutation models: cycle types, class enumeration, sampling."""
import math
from collections import Counter

import numpy as np
import pytest

from steincouplings.errors import ConfigError, SupportCapExceeded
from steincouplings.permutations import (CycleType, PermutationModel, compose,
                                         conjugate_by_transposition,
                                         cycle_type_of, identity, inverse)
from steincouplings.seeds import substream


def test_cycle_type_basics():
    ct = CycleType.from_lengths([2, 4])
    assert ct.n == 6
    assert sorted(ct.lengths) == [2, 4]
    assert ct.count(2) == 1 and ct.count(4) == 1 and ct.count(3) == 0
    assert not ct.has_fixed_points
    assert CycleType.from_lengths([1, 3]).has_fixed_points


def test_class_sizes_match_formula():
    # n! / prod(q^{c_q} c_q!)
    for lengths, expected in [([2, 2], 3), ([4], 6), ([2, 4], 90),
                              ([3, 3], 40), ([6], 120), ([2, 3], 20)]:
        ct = CycleType.from_lengths(lengths)
        n = ct.n
        denom = 1
        for q in set(lengths):
            c = lengths.count(q)
            denom *= q ** c * math.factorial(c)
        assert ct.class_size() == math.factorial(n) // denom == expected


def test_uniform_model_support_and_sampling():
    model = PermutationModel(4)
    assert model.is_uniform
    assert model.support_size() == 24
    support = list(model.enumerate_support())
    assert len(support) == 24
    rng = substream(21, 0)
    for _ in range(50):
        assert model.contains(model.sample(rng))


def test_cycle_type_model_support_and_sampling():
    ct = CycleType.from_lengths([2, 4])
    model = PermutationModel(6, cycle_type=ct)
    support = list(model.enumerate_support())
    assert len(support) == 90 == model.support_size()
    assert all(cycle_type_of(p) == ct for p in support)
    rng = substream(22, 0)
    draws = [tuple(model.sample(rng)) for _ in range(9000)]
    assert all(model.contains(list(d)) for d in draws[:200])
    counts = Counter(draws)
    assert len(counts) == 90
    # uniformity over the class: chi-square with 89 dof
    expected = len(draws) / 90
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 89 + 5 * math.sqrt(2 * 89)


def test_sample_batch_matches_contains():
    ct = CycleType.from_lengths([3, 3])
    model = PermutationModel(6, cycle_type=ct)
    batch = model.sample_batch(substream(23, 0), 64)
    assert batch.shape == (64, 6)
    for row in batch:
        assert model.contains([int(v) for v in row])


def test_enumeration_cap():
    model = PermutationModel(9)
    with pytest.raises(SupportCapExceeded):
        list(model.enumerate_support(cap=1000))


def test_group_helpers():
    n = 6
    rng = substream(24, 0)
    perm = list(rng.permutation(n))
    assert compose(perm, inverse(perm)) == identity(n)
    conj = conjugate_by_transposition(perm, 1, 4)
    assert cycle_type_of(conj) == cycle_type_of(perm)


def test_fixed_point_free_conjugation_never_touches_diagonal():
    # tau pi tau maps the class to itself, so pi''(i) != i holds whenever
    # pi has no fixed points: the statistic never reads diagonal scores.
    ct = CycleType.from_lengths([2, 4])
    model = PermutationModel(6, cycle_type=ct)
    for perm in model.enumerate_support():
        for i in range(6):
            for j in range(6):
                if i == j:
                    continue
                conj = conjugate_by_transposition(list(perm), i, j)
                assert all(conj[k] != k for k in range(6))
