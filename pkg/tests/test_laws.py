"""Discrete laws, their bias transforms, and seeded stream splitting."""
import math

import numpy as np
import pytest

from steincouplings.errors import ConfigError, DegenerateModelError
from steincouplings.laws import AliasTable, DiscreteLaw, rademacher
from steincouplings.seeds import root_stream, substream


def test_law_moments_and_validation():
    law = DiscreteLaw([-1.0, 3.0], [0.75, 0.25])
    assert law.mean == pytest.approx(0.0)
    assert law.variance == pytest.approx(3.0)
    with pytest.raises((ConfigError, ValueError)):
        DiscreteLaw([1.0, 2.0], [0.5, 0.6])
    with pytest.raises((ConfigError, ValueError)):
        DiscreteLaw([1.0], [0.5, 0.5])


def test_law_rejects_duplicate_atoms():
    with pytest.raises((ConfigError, ValueError)):
        DiscreteLaw([1.0, 1.0, 2.0], [0.25, 0.25, 0.5])


def test_rademacher_factory():
    law = rademacher()
    assert sorted(law.values.tolist()) == [-1.0, 1.0]
    assert law.mean == pytest.approx(0.0)
    assert law.variance == pytest.approx(1.0)
    scaled = rademacher(2.5)
    assert scaled.variance == pytest.approx(6.25)


def test_size_biased_law():
    law = DiscreteLaw([0.0, 1.0, 3.0], [0.5, 0.3, 0.2])
    biased = law.size_biased()
    mu = law.mean
    # zero atom drops out; remaining mass is y * p / mu
    assert 0.0 not in biased.values.tolist()
    assert dict(zip(biased.values, biased.probs))[1.0] == pytest.approx(0.3 / mu)
    assert dict(zip(biased.values, biased.probs))[3.0] == pytest.approx(0.6 / mu)
    with pytest.raises(DegenerateModelError):
        DiscreteLaw([0.0], [1.0]).size_biased()


def test_zero_bias_of_rademacher_is_uniform():
    # E[Y f(Y)] = E f'(Y*) forces Y* ~ uniform(-1, 1) for +-1 signs.
    law = rademacher()
    draws = law.zero_bias_sample(substream(11, 0), 200_000)
    assert draws.min() >= -1.0 and draws.max() <= 1.0
    hist, _ = np.histogram(draws, bins=8, range=(-1.0, 1.0))
    expected = draws.size / 8
    chi2 = float(((hist - expected) ** 2 / expected).sum())
    assert chi2 < 40.0  # dof 7; generous against false alarms
    # moment identity: E (Y*)^2 = E Y^3+... for signs: E(Y*)^2 = 1/3
    assert draws.var() == pytest.approx(1.0 / 3.0, rel=0.02)


def test_zero_bias_moment_identity_asymmetric():
    # E[(Y*)^k] = E[Y^{k+2}] / ((k+1) sigma^2) characterizes the transform.
    law = DiscreteLaw([-1.0, 3.0], [0.75, 0.25])
    sigma_sq = law.variance
    draws = law.zero_bias_sample(substream(12, 0), 400_000)
    for k in (1, 2, 3):
        target = float((law.values ** (k + 2)) @ law.probs) / ((k + 1) * sigma_sq)
        got = float((draws ** k).mean())
        scale = max(1.0, abs(target))
        assert abs(got - target) / scale < 0.02, (k, got, target)


def test_alias_table_matches_weights():
    weights = np.array([1.0, 2.0, 3.0, 4.0])
    table = AliasTable(weights)
    draws = table.draw(substream(13, 0), 200_000)
    freq = np.bincount(draws, minlength=4) / draws.size
    np.testing.assert_allclose(freq, weights / weights.sum(), atol=0.01)


def test_substreams_are_deterministic_and_distinct():
    a1 = substream(99, 0).normal(size=5)
    a2 = substream(99, 0).normal(size=5)
    b = substream(99, 1).normal(size=5)
    c = root_stream(99).normal(size=5)
    np.testing.assert_array_equal(a1, a2)
    assert not np.allclose(a1, b)
    assert not np.allclose(a1, c)
    with pytest.raises((ConfigError, ValueError)):
        substream(99, -1)
