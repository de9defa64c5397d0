"""Distributional couplings for normal approximation with computable bounds.

The package turns two classical coupling constructions into executable
samplers — the zero-bias transform for mean-zero statistics (independent
sums and permutation statistics) and the size-bias transform for sums of
nonnegative local statistics — evaluates the explicit Kolmogorov-distance
bounds those couplings certify, and verifies every testable identity by
exact enumeration at small scale and seeded Monte Carlo at large scale.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import (ConfigError, DegenerateModelError, RejectionCapExceeded,
                     SupportCapExceeded)
from .laws import AliasTable, DiscreteLaw, rademacher
from .permutations import CycleType, PermutationModel
from .scores import (MomentSummary, ScoreArray, center_for_cycle_type,
                     center_for_uniform, exact_moments, load_score_csv,
                     mc_moments, permutation_statistic)
from .seeds import root_stream, substream
from .zero_bias import (CycleTypeZeroBiasSampler, DRAW_FIELDS,
                        ExchangeablePairSpec, IndependentSumDraws,
                        UniformZeroBiasSampler, ZeroBiasDraw,
                        exchangeable_pair_cycle_type,
                        exchangeable_pair_uniform, rademacher_sum_zero_bias,
                        read_spool, square_bias_oracle, write_spool,
                        zero_bias_independent_sum)
from .size_bias import (DependencyStructure, DeltaProxyResult,
                        HypercubeMaxModel, LocalStatModel, PermPatternModel,
                        SizeBiasDraw, TorusPatternModel, WindowModel,
                        bernoulli_sum_size_bias, build_dependency_structure,
                        circular_ascent_model, delta_proxy_estimate,
                        directional_oracle, exact_delta_quantities,
                        exact_y_pmf, size_bias_discrete_oracle,
                        size_bias_draw, size_bias_draws,
                        size_bias_independent_sum, subgraph_count_model,
                        torus_full_pattern_model)
from .bounds import (BoundReport, HALF_LINES_A, INTERVALS_A, LocalBoundInputs,
                     SmoothnessClass, combinatorial_bound, local_bound_inputs,
                     size_bias_bound, zero_bias_bound)
from .verify import (CheckReport, DistanceEstimate, characterizing_check_size,
                     characterizing_check_zero, delta_vs_bound,
                     dkw_half_width, exchangeability_check, frequency_check,
                     gap_audit, interval_distance, kolmogorov_distance,
                     linearity_check, pair_moment_check, standardize)
from .experiments import (ExperimentConfig, RunReport, run, run_sweep,
                          validate_report)

__all__ = [
    "__version__",
    # errors
    "ConfigError", "DegenerateModelError", "RejectionCapExceeded",
    "SupportCapExceeded",
    # laws / permutations / scores / seeds
    "AliasTable", "DiscreteLaw", "rademacher",
    "CycleType", "PermutationModel",
    "MomentSummary", "ScoreArray", "center_for_cycle_type",
    "center_for_uniform", "exact_moments", "load_score_csv", "mc_moments",
    "permutation_statistic",
    "root_stream", "substream",
    # zero-bias couplings
    "CycleTypeZeroBiasSampler", "DRAW_FIELDS", "ExchangeablePairSpec",
    "IndependentSumDraws", "UniformZeroBiasSampler", "ZeroBiasDraw",
    "exchangeable_pair_cycle_type", "exchangeable_pair_uniform",
    "rademacher_sum_zero_bias", "read_spool", "square_bias_oracle",
    "write_spool", "zero_bias_independent_sum",
    # size-bias couplings
    "DependencyStructure", "DeltaProxyResult", "HypercubeMaxModel",
    "LocalStatModel", "PermPatternModel", "SizeBiasDraw", "TorusPatternModel",
    "WindowModel", "bernoulli_sum_size_bias", "build_dependency_structure",
    "circular_ascent_model", "delta_proxy_estimate", "directional_oracle",
    "exact_delta_quantities", "exact_y_pmf", "size_bias_discrete_oracle",
    "size_bias_draw", "size_bias_draws", "size_bias_independent_sum",
    "subgraph_count_model", "torus_full_pattern_model",
    # bounds
    "BoundReport", "HALF_LINES_A", "INTERVALS_A", "LocalBoundInputs",
    "SmoothnessClass", "combinatorial_bound", "local_bound_inputs",
    "size_bias_bound", "zero_bias_bound",
    # verification
    "CheckReport", "DistanceEstimate", "characterizing_check_size",
    "characterizing_check_zero", "delta_vs_bound", "dkw_half_width",
    "exchangeability_check", "frequency_check", "gap_audit",
    "interval_distance", "kolmogorov_distance", "linearity_check",
    "pair_moment_check", "standardize",
    # experiments
    "ExperimentConfig", "RunReport", "run", "run_sweep", "validate_report",
]
