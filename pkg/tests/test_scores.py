"""Score arrays: centering maps, flag contracts, statistics, moments."""
import math

import numpy as np
import pytest

from steincouplings.errors import ConfigError
from steincouplings.permutations import CycleType, PermutationModel
from steincouplings.scores import (MomentSummary, ScoreArray,
                                   center_for_cycle_type, center_for_uniform,
                                   exact_moments, load_score_csv, mc_moments,
                                   permutation_statistic)
from steincouplings.seeds import substream


def test_center_for_uniform_rows_sum_to_zero():
    raw = substream(31, 0).normal(size=(5, 5))
    scores = center_for_uniform(raw)
    assert scores.row_centered
    np.testing.assert_allclose(np.asarray(scores.a).sum(axis=1), 0.0,
                               atol=1e-12)
    # centering shifts the statistic by a permutation-independent constant,
    # so it never changes Y - EY; the uniform mean is exactly zero.
    model = PermutationModel(5)
    moments = exact_moments(model, scores)
    assert moments.mean == pytest.approx(0.0, abs=1e-12)


def test_center_for_cycle_type_full_contract():
    raw = substream(32, 0).normal(size=(6, 6))
    scores = center_for_cycle_type(raw)
    arr = np.asarray(scores.a)
    assert scores.symmetric_centered
    np.testing.assert_allclose(arr, arr.T, atol=1e-12)
    np.testing.assert_allclose(np.diagonal(arr), 0.0, atol=1e-12)
    assert abs(arr.sum()) < 1e-9


def test_flag_contract_rejects_false_claims():
    n = 5
    raw = substream(33, 0).normal(size=(n, n))
    with pytest.raises(ConfigError):
        ScoreArray(raw, row_centered=True, symmetric_centered=False)
    with pytest.raises(ConfigError):
        ScoreArray(raw, row_centered=False, symmetric_centered=True)
    # a symmetric, centered array with a nonzero diagonal still violates
    # the symmetric_centered contract
    sym = raw + raw.T
    sym = sym - sym.mean()
    np.fill_diagonal(sym, 1.0)
    with pytest.raises(ConfigError):
        ScoreArray(sym, row_centered=False, symmetric_centered=True)


def test_flag_tolerance_scales_with_array():
    n = 4
    arr = center_for_uniform(substream(34, 0).normal(size=(n, n)))
    perturbed = np.asarray(arr.a).copy()
    # within tolerance 1e-12 * n * max|a|: accepted
    perturbed[0, 0] += 0.5e-12 * n * np.abs(perturbed).max()
    ScoreArray(perturbed, row_centered=True, symmetric_centered=False)
    worse = np.asarray(arr.a).copy()
    worse[0, 0] += 1e-6
    with pytest.raises(ConfigError):
        ScoreArray(worse, row_centered=True, symmetric_centered=False)


def test_permutation_statistic_is_trace_along_permutation():
    raw = np.arange(16, dtype=float).reshape(4, 4)
    scores = ScoreArray(raw, row_centered=False, symmetric_centered=False)
    perm = [2, 0, 3, 1]
    expected = raw[0, 2] + raw[1, 0] + raw[2, 3] + raw[3, 1]
    assert permutation_statistic(scores, perm) == pytest.approx(expected)


def test_exact_moments_small_uniform():
    # the 3x3 block array: Y over uniform S_3 has mean 0, variance 2
    arr = np.array([[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    scores = ScoreArray(arr, row_centered=True, symmetric_centered=False)
    moments = exact_moments(PermutationModel(3), scores)
    assert moments.exact
    assert moments.mean == pytest.approx(0.0, abs=1e-15)
    assert moments.variance == pytest.approx(2.0, abs=1e-14)
    assert moments.support_size == 6


def test_mc_moments_agree_with_exact():
    raw = substream(35, 0).normal(size=(6, 6))
    scores = center_for_cycle_type(raw)
    model = PermutationModel(6, cycle_type=CycleType.from_lengths([2, 4]))
    exact = exact_moments(model, scores)
    mc = mc_moments(model, scores, 60_000, substream(35, 1))
    assert not mc.exact and mc.reps == 60_000
    assert mc.mean == pytest.approx(exact.mean, abs=5 * mc.mean_stderr)
    assert mc.variance == pytest.approx(exact.variance, rel=0.05)


def test_load_score_csv(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("1.0, 2.0\n3.0, 4.0\n")
    np.testing.assert_allclose(load_score_csv(path), [[1.0, 2.0], [3.0, 4.0]])
    bad = tmp_path / "rect.csv"
    bad.write_text("1.0, 2.0\n3.0, 4.0\n5.0, 6.0\n")
    with pytest.raises((ConfigError, ValueError)):
        load_score_csv(bad)
