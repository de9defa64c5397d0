"""Size-bias couplings: local models, dependency geometry, oracles, proxies."""
import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from steincouplings.verify import frequency_check

from steincouplings.errors import DegenerateModelError
from steincouplings.laws import DiscreteLaw
from steincouplings.seeds import substream
from steincouplings.size_bias import (HypercubeMaxModel, PermPatternModel,
                                      TorusPatternModel, WindowModel,
                                      bernoulli_sum_size_bias,
                                      build_dependency_structure,
                                      circular_ascent_model,
                                      delta_proxy_estimate, directional_oracle,
                                      exact_delta_quantities, exact_y_pmf,
                                      size_bias_discrete_oracle,
                                      size_bias_draw, size_bias_draws,
                                      size_bias_independent_sum,
                                      subgraph_count_model)


def test_circular_ascent_3_exact_laws():
    model = circular_ascent_model(3)
    pmf = exact_y_pmf(model)
    assert dict(zip(pmf.values, pmf.probs)) == pytest.approx({1.0: 0.5,
                                                              2.0: 0.5})
    oracle = size_bias_discrete_oracle(pmf)
    # P(Y^s = k) = k P(Y = k) / E Y with E Y = 3/2
    assert dict(zip(oracle.values, oracle.probs)) == pytest.approx(
        {1.0: 1 / 3, 2.0: 2 / 3})


def test_circular_ascent_3_sampler_matches_size_biased_law():
    model = circular_ascent_model(3)
    structure = build_dependency_structure(model)
    draws = size_bias_draws(model, structure, 40_000, substream(60, 0))
    frac_two = float((draws["y_s"] == 2.0).mean())
    stderr = math.sqrt((2 / 3) * (1 / 3) / 40_000)
    assert abs(frac_two - 2 / 3) < 4 * stderr
    assert set(np.unique(draws["y_s"])) <= {1.0, 2.0}


def test_delta_proxy_matches_exact_value_circular_ascent():
    model = circular_ascent_model(3)
    structure = build_dependency_structure(model)
    exact = exact_delta_quantities(model, structure)
    proxy = delta_proxy_estimate(model, structure, outer=400, inner=30,
                                 rng=substream(61, 0))
    assert abs(proxy.estimate - exact["delta_proxy"]) < 4 * proxy.stderr
    assert proxy.stderr > 0
    assert proxy.outer == 400 and proxy.inner == 30


def test_delta_proxy_rejects_tiny_designs():
    model = circular_ascent_model(3)
    structure = build_dependency_structure(model)
    with pytest.raises(ValueError):
        delta_proxy_estimate(model, structure, outer=1, inner=10,
                             rng=substream(61, 1))
    with pytest.raises(ValueError):
        delta_proxy_estimate(model, structure, outer=10, inner=1,
                             rng=substream(61, 2))


def test_window_dependency_geometry():
    model = WindowModel(100, 2, "ascent")
    structure = build_dependency_structure(model)
    assert structure.b == 3
    assert structure.rho == 1
    assert structure.v_table == {1: 3, 3: 7}
    assert structure.distance_regular
    assert structure.pair_count_geometric == 700
    # identically distributed directions: uniform selection weights
    assert structure.max_p() == pytest.approx(1 / 100)
    # sharp pair ingredient: 700 pairs x (1/100)^2 x 3 x 3 = 0.63
    assert structure.pair_weight_sum() == pytest.approx(0.63)


def test_window_draw_contracts():
    model = WindowModel(100, 2, "ascent")
    structure = build_dependency_structure(model)
    draws = size_bias_draws(model, structure, 40_000, substream(62, 0))
    assert draws["gap"].max() <= structure.b * model.value_cap + 1e-12
    assert draws["y"].mean() == pytest.approx(50.0, rel=0.02)
    # E Y^s = (Var Y + (E Y)^2) / E Y; for n circular length-2 ascent
    # windows of distinct uniforms, E Y = n/2 and Var Y = n/12
    mu, var = 50.0, 100.0 / 12.0
    target = mu + var / mu
    stderr = draws["y_s"].std(ddof=1) / math.sqrt(draws["y_s"].size)
    assert abs(draws["y_s"].mean() - target) < 5 * stderr
    # the margin actually distinguishes Y^s from Y at this rep count
    assert target - mu > 5 * stderr


def test_reference_and_bulk_window_samplers_agree():
    model = WindowModel(30, 2, "ascent")
    structure = build_dependency_structure(model)
    bulk = size_bias_draws(model, structure, 20_000, substream(63, 0))
    rng = substream(63, 1)
    ref = np.array([size_bias_draw(model, structure, rng).y_s
                    for _ in range(4_000)])
    z = (bulk["y_s"].mean() - ref.mean()) / math.sqrt(
        bulk["y_s"].var() / bulk["y_s"].size + ref.var() / ref.size)
    assert abs(z) < 5


def test_torus_pattern_exact_mean_and_geometry():
    model = TorusPatternModel(7, 1, [0.5, 0.5],
                              vertex_target={(0,): 1, (1,): 1},
                              edge_target={((0,), (1,)): 1})
    structure = build_dependency_structure(model)
    assert structure.rho == 1
    assert structure.v_table == {1: 3, 3: 7}
    pmf = exact_y_pmf(model)
    assert pmf.mean == pytest.approx(7 / 8, abs=1e-12)
    draws = size_bias_draws(model, structure, 10_000, substream(64, 0))
    assert draws["gap"].max() <= structure.b + 1e-12


def test_directional_oracle_conditions_on_marked_site():
    model = TorusPatternModel(7, 1, [0.5, 0.5],
                              vertex_target={(0,): 1, (1,): 1},
                              edge_target={((0,), (1,)): 1})
    oracle = directional_oracle(model, (0,))
    assert oracle
    assert all(key[0] == 1.0 for key in oracle)
    assert sum(oracle.values()) == pytest.approx(1.0, abs=1e-12)


def test_degenerate_subgraph_count_is_constant():
    model = subgraph_count_model(5, 1, 1.0)
    structure = build_dependency_structure(model)
    draws = size_bias_draws(model, structure, 500, substream(65, 0))
    assert np.all(draws["y"] == 5.0)
    assert np.all(draws["y_s"] == 5.0)


def test_hypercube_geometry_and_mean():
    model = HypercubeMaxModel(4)
    structure = build_dependency_structure(model)
    assert structure.rho == 2
    assert structure.b == 1 + 4 + 6
    draws = size_bias_draws(model, structure, 30_000, substream(66, 0))
    # E Y = 2^p * P(site is a local max) = 2^p / (p + 1) = 16/5
    stderr = draws["y"].std(ddof=1) / math.sqrt(draws["y"].size)
    assert abs(draws["y"].mean() - 16 / 5) < 5 * stderr
    assert draws["gap"].max() <= structure.b + 1e-12


def test_perm_pattern_size_bias_mean_identity():
    model = PermPatternModel(8, 3, (0, 1, 2))
    structure = build_dependency_structure(model)
    draws = size_bias_draws(model, structure, 30_000, substream(67, 0))
    pmf = exact_y_pmf(model)
    mu = pmf.mean
    target = float((pmf.values ** 2) @ pmf.probs) / mu
    stderr = draws["y_s"].std(ddof=1) / math.sqrt(draws["y_s"].size)
    assert abs(draws["y_s"].mean() - target) < 5 * stderr


def test_independent_sum_size_bias_mean_identity():
    base = DiscreteLaw(np.array([0.0, 1.0]), np.array([0.7, 0.3]))
    draws = size_bias_independent_sum([base] * 10, 60_000, substream(68, 0))
    mu, var = 3.0, 10 * 0.3 * 0.7
    target = (var + mu * mu) / mu
    stderr = draws["y_s"].std(ddof=1) / math.sqrt(draws["y_s"].size)
    assert abs(draws["y_s"].mean() - target) < 5 * stderr
    assert draws["gap"].max() <= 1.0 + 1e-12


def test_bernoulli_fast_path_matches_exact_marginals():
    n, p, reps = 40, 0.3, 200_000
    draws = bernoulli_sum_size_bias(n, p, reps, substream(69, 0))

    def check(values, binom_n):
        counts = Counter(float(v) for v in values)
        probs = {float(k): float(stats.binom(binom_n, p).pmf(k))
                 for k in range(binom_n + 1)}
        report = frequency_check(dict(counts), probs)
        assert report.passed, report

    check(draws["y"], n)                 # Y ~ Binomial(n, p)
    check(draws["y_s"] - 1.0, n - 1)     # Y^s - 1 ~ Binomial(n - 1, p)
    assert draws["gap"].max() <= 1.0


def test_bernoulli_fast_path_agrees_with_generic_coupling():
    n, p = 25, 0.4
    base = DiscreteLaw(np.array([0.0, 1.0]), np.array([1 - p, p]))
    fast = bernoulli_sum_size_bias(n, p, 120_000, substream(70, 0))
    slow = size_bias_independent_sum([base] * n, 120_000, substream(70, 1))
    for field in ("y", "y_s"):
        a, b = fast[field], slow[field]
        z = (a.mean() - b.mean()) / math.sqrt(a.var() / a.size
                                              + b.var() / b.size)
        assert abs(z) < 5, (field, z)


def test_bernoulli_fast_path_rejects_degenerate_probability():
    with pytest.raises(DegenerateModelError):
        bernoulli_sum_size_bias(10, 0.0, 100, substream(71, 0))
    with pytest.raises(DegenerateModelError):
        bernoulli_sum_size_bias(10, 1.0, 100, substream(71, 1))
