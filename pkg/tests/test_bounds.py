"""Explicit-constant bound formulas: frozen values, scaling laws, inputs."""
import math

import numpy as np
import pytest

from steincouplings.bounds import (HALF_LINES_A, INTERVALS_A, LocalBoundInputs,
                                   SmoothnessClass, combinatorial_bound,
                                   local_bound_inputs, size_bias_bound,
                                   zero_bias_bound)
from steincouplings.errors import ConfigError
from steincouplings.permutations import CycleType, PermutationModel
from steincouplings.scores import center_for_cycle_type, center_for_uniform
from steincouplings.seeds import substream
from steincouplings.size_bias import (HypercubeMaxModel, WindowModel,
                                      build_dependency_structure,
                                      torus_full_pattern_model)

TOL = 1e-12


def test_named_smoothing_constants():
    assert HALF_LINES_A == pytest.approx(math.sqrt(2 / math.pi), abs=0)
    assert INTERVALS_A == pytest.approx(2 * math.sqrt(2 / math.pi), abs=0)
    assert SmoothnessClass.half_lines().a == HALF_LINES_A
    assert SmoothnessClass.intervals().a == INTERVALS_A
    assert SmoothnessClass.custom(3.5).a == 3.5
    with pytest.raises(ConfigError):
        SmoothnessClass("half-lines", 1.0)  # wrong constant for named class
    with pytest.raises(ConfigError):
        SmoothnessClass.custom(-1.0)
    with pytest.raises(ConfigError):
        SmoothnessClass("sobolev", 1.0)


# frozen regression points, derived by hand from the printed formulas
ZERO_POINT = dict(sigma=1.0, gap_bound=1.0 / 24.0)  # scaled gap A = 1/12
ZERO_FROZEN = {
    "main": 10.613589234160077,
    "half-line": 128.0 / 12.0,
    "interval": 217.0 / 12.0,
    "alt": 11.776521776367957,
}
SIZE_POINT = dict(mu=1e6, sigma=1000.0, gap_bound=1.0, delta=0.01)
SIZE_FROZEN = {
    "main": 0.2940844776853619,
    "half-line": 0.294404,
    "interval": 0.339804,
    "alt": 0.22138105369874297,
}


@pytest.mark.parametrize("variant,expected", sorted(ZERO_FROZEN.items()))
def test_zero_bias_bound_frozen_values(variant, expected):
    report = zero_bias_bound(variant=variant, **ZERO_POINT)
    assert report.bound == pytest.approx(expected, abs=TOL)
    assert report.scaled_gap == pytest.approx(1.0 / 12.0, abs=TOL)
    assert report.vacuous  # all four exceed 1 at this gap
    # boundary case: gap exactly sigma/24 satisfies the main hypothesis
    assert report.precondition_ok == (variant != "alt")


@pytest.mark.parametrize("variant,expected", sorted(SIZE_FROZEN.items()))
def test_size_bias_bound_frozen_values(variant, expected):
    report = size_bias_bound(variant=variant, **SIZE_POINT)
    assert report.bound == pytest.approx(expected, abs=TOL)
    assert report.scaled_gap == pytest.approx(1e-3, abs=TOL)
    assert not report.vacuous
    assert report.precondition_ok  # 1 <= 1000^1.5 / sqrt(6e6) ~ 12.9
    assert report.mu == 1e6 and report.delta == 0.01


def test_zero_bias_bound_monotone_and_scale_invariant():
    base = zero_bias_bound(2.0, 0.05).bound
    assert zero_bias_bound(2.0, 0.06).bound > base
    assert zero_bias_bound(2.5, 0.05).bound < base
    # the formula depends on (sigma, gap) only through their ratio
    scaled = zero_bias_bound(20.0, 0.5)
    assert scaled.bound == pytest.approx(base, rel=TOL)
    assert scaled.precondition_ok


def test_size_bias_bound_monotone_in_delta_and_gap():
    r0 = size_bias_bound(100.0, 10.0, 0.5, 0.0)
    r1 = size_bias_bound(100.0, 10.0, 0.5, 0.2)
    assert r1.bound > r0.bound
    assert r1.bound - r0.bound == pytest.approx(23.0 * 100.0 * 0.2 / 100.0,
                                                rel=TOL)
    assert size_bias_bound(100.0, 10.0, 0.6, 0.0).bound > r0.bound


def test_variant_class_consistency_rules():
    # the rounded per-class displays refuse the other named class
    with pytest.raises(ConfigError):
        zero_bias_bound(1.0, 0.01, SmoothnessClass.intervals(),
                        variant="half-line")
    with pytest.raises(ConfigError):
        size_bias_bound(10.0, 2.0, 0.1, 0.0, SmoothnessClass.half_lines(),
                        variant="interval")
    # matching class is accepted, as are spelling variants
    a = zero_bias_bound(1.0, 0.01, SmoothnessClass.intervals(),
                        variant="intervals")
    b = zero_bias_bound(1.0, 0.01, variant="interval")
    assert a.bound == b.bound
    with pytest.raises(ConfigError):
        zero_bias_bound(1.0, 0.01, variant="bogus")


def test_input_validation():
    with pytest.raises(ConfigError):
        zero_bias_bound(-1.0, 0.1)
    with pytest.raises(ConfigError):
        zero_bias_bound(1.0, 0.0)
    with pytest.raises(ConfigError):
        size_bias_bound(0.0, 1.0, 0.1, 0.0)
    with pytest.raises(ConfigError):
        size_bias_bound(1.0, 1.0, 0.1, -0.01)
    with pytest.raises(ConfigError):
        size_bias_bound(1.0, 1.0, 0.1, math.inf)


def test_vacuous_flag_reports_but_never_clamps():
    report = zero_bias_bound(1.0, 10.0)
    assert report.vacuous and report.bound > 100
    assert report.as_dict()["vacuous"] is True
    small = size_bias_bound(1e6, 1e3, 1.0, 0.0, variant="alt")
    assert not small.vacuous and small.as_dict()["vacuous"] is False


def test_combinatorial_bound_delegates_to_zero_bias_exactly():
    rng = substream(80, 0)
    scores_u = center_for_uniform(rng.normal(size=(6, 6)))
    model_u = PermutationModel(6)
    sigma = 3.0
    for variant in ("main", "half-line", "interval", "alt"):
        comb = combinatorial_bound(scores_u, model_u, sigma, variant=variant)
        direct = zero_bias_bound(sigma, 4.0 * scores_u.sup_norm,
                                 variant=variant)
        assert comb.bound == direct.bound  # exact float reproduction
        assert comb.formula == f"combinatorial_uniform/{variant}"
        assert comb.scaled_gap == pytest.approx(
            8.0 * scores_u.sup_norm / sigma, abs=0)

    scores_c = center_for_cycle_type(rng.normal(size=(6, 6)))
    model_c = PermutationModel(6, CycleType.from_lengths([2, 4]))
    comb = combinatorial_bound(scores_c, model_c, sigma)
    direct = zero_bias_bound(sigma, 20.0 * scores_c.sup_norm)
    assert comb.bound == direct.bound
    assert comb.formula == "combinatorial_uniform/main".replace(
        "uniform", "cycle_type")
    assert comb.scaled_gap == pytest.approx(40.0 * scores_c.sup_norm / sigma,
                                            abs=0)


def test_combinatorial_bound_precondition_thresholds():
    scores = center_for_uniform(np.array([[1.0, -1.0, 0.0],
                                          [-1.0, 1.0, 0.0],
                                          [0.0, 0.0, 0.0]]))
    model = PermutationModel(3)
    c = scores.sup_norm
    at_cap = combinatorial_bound(scores, model, 12.0 * 8.0 * c)
    assert at_cap.precondition_ok
    below = combinatorial_bound(scores, model, 12.0 * 8.0 * c * 0.999)
    assert not below.precondition_ok
    alt = combinatorial_bound(scores, model, 24.0 * 8.0 * c, variant="alt")
    assert alt.precondition_ok


def test_combinatorial_bound_centering_contracts():
    rng = substream(81, 0)
    raw = rng.normal(size=(5, 5))
    uniform_scores = center_for_uniform(raw)
    cycle_scores = center_for_cycle_type(raw)
    with pytest.raises(ConfigError):
        combinatorial_bound(cycle_scores, PermutationModel(5), 1.0)
    with pytest.raises(ConfigError):
        combinatorial_bound(uniform_scores,
                            PermutationModel(5, CycleType.from_lengths([5])),
                            1.0)
    with pytest.raises(ConfigError):
        combinatorial_bound(uniform_scores, PermutationModel(6), 1.0)


def test_local_bound_inputs_window():
    structure = build_dependency_structure(WindowModel(100, 2, "ascent"))
    inputs = local_bound_inputs(structure)
    assert isinstance(inputs, LocalBoundInputs)
    assert inputs.gap_bound == 3.0
    assert inputs.neighborhood_max == 3
    assert inputs.index_count == 100
    assert inputs.dependent_pair_count == 700
    target = 3.0 * math.sqrt(7.0) / 10.0
    # vertex-transitive ring: sharp, coarse, and ball-volume forms agree
    assert inputs.delta_bound == pytest.approx(target, abs=TOL)
    assert inputs.delta_bound_coarse == pytest.approx(target, abs=TOL)
    assert inputs.gap_bound_regular == 3.0
    assert inputs.delta_bound_regular == pytest.approx(target, abs=TOL)


@pytest.mark.parametrize("n,p", [(7, 1), (9, 1), (7, 2)])
def test_local_bound_inputs_torus(n, p):
    model = torus_full_pattern_model(n, p)
    structure = build_dependency_structure(model)
    inputs = local_bound_inputs(structure, model.value_cap)
    assert inputs.gap_bound == 3.0 ** p
    assert inputs.delta_bound_regular == pytest.approx((63.0 / n) ** (p / 2),
                                                       abs=TOL)
    assert inputs.delta_bound == pytest.approx(inputs.delta_bound_regular,
                                               abs=TOL)


@pytest.mark.parametrize("p,expected_b", [(3, 7), (4, 11), (5, 16)])
def test_local_bound_inputs_hypercube(p, expected_b):
    structure = build_dependency_structure(HypercubeMaxModel(p))
    inputs = local_bound_inputs(structure)
    assert inputs.gap_bound == float(expected_b)
    assert inputs.neighborhood_max == expected_b == 1 + p + math.comb(p, 2)
    assert inputs.index_count == 2 ** p
    # vertex-transitive: the three delta forms coincide
    assert inputs.delta_bound == pytest.approx(inputs.delta_bound_coarse,
                                               abs=TOL)
    assert inputs.delta_bound == pytest.approx(inputs.delta_bound_regular,
                                               abs=TOL)


def test_coarse_delta_dominates_sharp():
    for structure in (
            build_dependency_structure(WindowModel(23, 3, "ascent")),
            build_dependency_structure(HypercubeMaxModel(3)),
            build_dependency_structure(torus_full_pattern_model(8, 1, 0.7)),
    ):
        inputs = local_bound_inputs(structure, 2.5)
        assert inputs.delta_bound <= inputs.delta_bound_coarse + TOL
        assert inputs.gap_bound == structure.b * 2.5


def test_value_cap_scales_all_outputs_linearly():
    structure = build_dependency_structure(WindowModel(40, 2, "ascent"))
    one = local_bound_inputs(structure, 1.0)
    three = local_bound_inputs(structure, 3.0)
    assert three.gap_bound == pytest.approx(3 * one.gap_bound, rel=TOL)
    assert three.delta_bound == pytest.approx(3 * one.delta_bound, rel=TOL)
    assert three.delta_bound_coarse == pytest.approx(
        3 * one.delta_bound_coarse, rel=TOL)
    assert three.delta_bound_regular == pytest.approx(
        3 * one.delta_bound_regular, rel=TOL)
    with pytest.raises(ConfigError):
        local_bound_inputs(structure, 0.0)
