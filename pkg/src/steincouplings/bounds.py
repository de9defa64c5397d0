"""Explicit normal-approximation error bounds for the coupling constructions.

Every bound here has the same shape: a polynomial in the scaled coupling
gap ``A`` (the almost-sure gap measured in units of the standard
deviation), weighted by the smoothing constant ``a`` of the test-function
class, plus — for size-bias couplings — a term charging ``delta``, the
mean conditional variability of the shift.  Formulas are evaluated
exactly as displayed, with their fixed decimal constants; inputs outside
a formula's precondition and vacuous results (bound >= 1 says nothing
about a Kolmogorov distance) are reported with flags, never clamped and
never rejected.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .errors import ConfigError
from .permutations import PermutationModel
from .scores import ScoreArray
from .size_bias import DependencyStructure

__all__ = [
    "HALF_LINES_A",
    "INTERVALS_A",
    "SmoothnessClass",
    "BoundReport",
    "LocalBoundInputs",
    "zero_bias_bound",
    "size_bias_bound",
    "combinatorial_bound",
    "local_bound_inputs",
]

#: Smoothing constant for indicators of half-lines: sqrt(2/pi).
HALF_LINES_A = math.sqrt(2.0 / math.pi)

#: Smoothing constant for indicators of finite intervals: 2*sqrt(2/pi).
INTERVALS_A = 2.0 * math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class SmoothnessClass:
    """A test-function class, identified by its smoothing constant ``a``.

    The two named classes are indicators of half-lines (a = sqrt(2/pi))
    and indicators of bounded intervals (a = 2*sqrt(2/pi)); ``custom``
    admits any positive constant.
    """

    kind: str
    a: float

    def __post_init__(self):
        if self.kind not in ("half-lines", "intervals", "custom"):
            raise ConfigError(f"unknown smoothness class kind {self.kind!r}")
        if not (math.isfinite(self.a) and self.a > 0):
            raise ConfigError("smoothing constant must be positive and finite")
        expected = {"half-lines": HALF_LINES_A, "intervals": INTERVALS_A}.get(self.kind)
        if expected is not None and abs(self.a - expected) > 1e-15:
            raise ConfigError(
                f"class {self.kind!r} requires a = {expected!r}, got {self.a!r}"
            )

    @classmethod
    def half_lines(cls) -> "SmoothnessClass":
        return cls("half-lines", HALF_LINES_A)

    @classmethod
    def intervals(cls) -> "SmoothnessClass":
        return cls("intervals", INTERVALS_A)

    @classmethod
    def custom(cls, a: float) -> "SmoothnessClass":
        return cls("custom", float(a))


@dataclass(frozen=True)
class BoundReport:
    """One evaluated bound, with every input echoed.

    ``bound`` is the claimed upper limit on the distribution distance;
    ``vacuous`` marks values >= 1 (trivially true for Kolmogorov-type
    distances, hence uninformative); ``precondition_ok`` records whether
    the inputs satisfy the hypothesis under which the formula was proved.
    The value is reported either way — consumers decide what to trust.
    """

    bound: float
    scaled_gap: float
    gap_bound: float
    smoothing_constant: float
    sigma: float
    formula: str
    precondition_ok: bool
    precondition_text: str
    mu: float | None = None
    delta: float | None = None

    @property
    def vacuous(self) -> bool:
        return self.bound >= 1.0

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["vacuous"] = self.vacuous
        return out


_VARIANTS = {
    "main": "main",
    "half-line": "half-line",
    "half-lines": "half-line",
    "half_line": "half-line",
    "half_lines": "half-line",
    "interval": "interval",
    "intervals": "interval",
    "alt": "alt",
}

#: Rounded per-class displays fold the smoothing constant into their
#: decimal coefficients, so they are tied to one named class each.
_VARIANT_CLASS = {"half-line": "half-lines", "interval": "intervals"}


def _resolve_variant(variant: str) -> str:
    try:
        return _VARIANTS[variant]
    except KeyError:
        raise ConfigError(
            f"unknown bound variant {variant!r}; expected one of "
            "main, half-line, interval, alt"
        ) from None


def _resolve_smoothness(variant: str, smoothness: SmoothnessClass | None) -> SmoothnessClass:
    pinned = _VARIANT_CLASS.get(variant)
    if pinned is not None:
        if smoothness is not None and smoothness.kind != pinned:
            raise ConfigError(
                f"variant {variant!r} evaluates the {pinned} display; "
                f"got smoothness class {smoothness.kind!r}"
            )
        return SmoothnessClass(pinned, HALF_LINES_A if pinned == "half-lines" else INTERVALS_A)
    return smoothness if smoothness is not None else SmoothnessClass.half_lines()


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not (math.isfinite(value) and value > 0):
            raise ConfigError(f"{name} must be positive and finite, got {value!r}")


def zero_bias_bound(
    sigma: float,
    gap_bound: float,
    smoothness: SmoothnessClass | None = None,
    variant: str = "main",
) -> BoundReport:
    """Distribution-distance bound from a zero-bias coupling.

    ``gap_bound`` is an almost-sure bound on the coupling gap |Y* - Y|;
    the bound is a polynomial in A = 2*gap_bound/sigma.  The ``main``
    and per-class rounded variants hold for gap_bound <= sigma/24, the
    ``alt`` variant (smaller leading constant, larger tail constant) for
    gap_bound <= sigma/48.
    """
    sigma = float(sigma)
    gap_bound = float(gap_bound)
    _require_positive(sigma=sigma, gap_bound=gap_bound)
    variant = _resolve_variant(variant)
    smoothness = _resolve_smoothness(variant, smoothness)

    big_a = 2.0 * gap_bound / sigma
    a = smoothness.a
    if variant == "main":
        bound = big_a * (37.0 + 12.0 * big_a + 112.0 * a)
    elif variant == "half-line":
        bound = big_a * (127.0 + 12.0 * big_a)
    elif variant == "interval":
        bound = big_a * (216.0 + 12.0 * big_a)
    else:  # alt
        bound = big_a * (145.0 * a + 7.5 * big_a + 25.0)

    divisor = 48.0 if variant == "alt" else 24.0
    return BoundReport(
        bound=bound,
        scaled_gap=big_a,
        gap_bound=gap_bound,
        smoothing_constant=a,
        sigma=sigma,
        formula=f"zero_bias/{variant}",
        precondition_ok=gap_bound <= sigma / divisor,
        precondition_text=f"gap_bound <= sigma/{divisor:g}",
    )


def size_bias_bound(
    mu: float,
    sigma: float,
    gap_bound: float,
    delta: float,
    smoothness: SmoothnessClass | None = None,
    variant: str = "main",
) -> BoundReport:
    """Distribution-distance bound from a bounded size-bias coupling.

    ``gap_bound`` bounds |Y^s - Y| almost surely and ``delta`` bounds (or
    estimates) the mean conditional standard deviation of the shift; the
    bound is a polynomial in A = gap_bound/sigma plus a delta term.  The
    ``main`` and rounded variants hold for gap_bound <= sigma^{3/2} /
    sqrt(6*mu), the ``alt`` variant for gap_bound <= sigma^{3/2} /
    sqrt(12*mu).
    """
    mu = float(mu)
    sigma = float(sigma)
    gap_bound = float(gap_bound)
    delta = float(delta)
    _require_positive(mu=mu, sigma=sigma, gap_bound=gap_bound)
    if not (math.isfinite(delta) and delta >= 0):
        raise ConfigError(f"delta must be nonnegative and finite, got {delta!r}")
    variant = _resolve_variant(variant)
    smoothness = _resolve_smoothness(variant, smoothness)

    big_a = gap_bound / sigma
    a = smoothness.a
    ratio = mu / sigma
    if variant == "main":
        bound = a * big_a / 2.0 + ratio * ((19.0 + 56.0 * a) * big_a**2 + 4.0 * big_a**3)
        bound += 23.0 * mu * delta / sigma**2
    elif variant == "half-line":
        bound = 0.4 * big_a + ratio * (64.0 * big_a**2 + 4.0 * big_a**3)
        bound += 23.0 * mu * delta / sigma**2
    elif variant == "interval":
        bound = 0.8 * big_a + ratio * (109.0 * big_a**2 + 4.0 * big_a**3)
        bound += 23.0 * mu * delta / sigma**2
    else:  # alt
        bound = a * big_a / 6.0 + ratio * ((13.0 + 73.0 * a) * big_a**2 + 2.5 * big_a**3)
        bound += 15.0 * mu * delta / sigma**2

    root = 12.0 if variant == "alt" else 6.0
    return BoundReport(
        bound=bound,
        scaled_gap=big_a,
        gap_bound=gap_bound,
        smoothing_constant=a,
        sigma=sigma,
        formula=f"size_bias/{variant}",
        precondition_ok=gap_bound <= sigma**1.5 / math.sqrt(root * mu),
        precondition_text=f"gap_bound <= sigma^(3/2)/sqrt({root:g}*mu)",
        mu=mu,
        delta=delta,
    )


def combinatorial_bound(
    scores: ScoreArray,
    model: PermutationModel,
    sigma: float,
    smoothness: SmoothnessClass | None = None,
    variant: str = "main",
) -> BoundReport:
    """Zero-bias bound for a permutation statistic, from the score sup norm.

    The scaled gap is A = 8*C/sigma under the uniform model and
    A = 40*C/sigma under a fixed-cycle-type model, with C the largest
    absolute score; both require A <= 1/12 (alt variant: A <= 1/24).
    The score array must carry the centering flag its model requires.
    """
    sigma = float(sigma)
    _require_positive(sigma=sigma)
    if scores.n != model.n:
        raise ConfigError(f"score array is {scores.n}x{scores.n} but model has n={model.n}")
    if model.is_uniform:
        if not scores.row_centered:
            raise ConfigError("uniform model requires a row-centered score array")
        constant, kind = 8.0, "combinatorial_uniform"
    else:
        if not scores.symmetric_centered:
            raise ConfigError(
                "cycle-type model requires a symmetric, zero-diagonal, "
                "globally centered score array"
            )
        constant, kind = 40.0, "combinatorial_cycle_type"
    c_max = scores.sup_norm
    if c_max <= 0:
        raise ConfigError("score array is identically zero")

    big_a = constant * c_max / sigma
    report = zero_bias_bound(sigma, big_a * sigma / 2.0, smoothness, variant)
    cap = 24.0 if report.formula.endswith("alt") else 12.0
    return dataclasses.replace(
        report,
        formula=f"{kind}/{report.formula.split('/')[1]}",
        precondition_text=f"{constant:g}*max_score/sigma <= 1/{cap:g}",
    )


@dataclass(frozen=True)
class LocalBoundInputs:
    """Bound inputs derived from a dependency structure and a value cap ``m``.

    ``gap_bound``/``delta_bound``/``delta_bound_coarse`` always exist:
    the gap is (largest neighborhood size) * m, the sharp delta bound is
    m * sqrt(sum over dependent index pairs of p1*p2*|B1|*|B2|), and the
    coarse one replaces each factor by its maximum.  When the structure
    is distance-regular the ball-volume forms are filled in as well:
    gap v(rho)*m and delta m*|indices|^(-1/2)*v(rho)*sqrt(v(3*rho)).
    """

    gap_bound: float
    delta_bound: float
    delta_bound_coarse: float
    gap_bound_regular: float | None
    delta_bound_regular: float | None
    value_cap: float
    neighborhood_max: int
    index_count: int
    dependent_pair_count: int

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def local_bound_inputs(structure: DependencyStructure, value_cap: float = 1.0) -> LocalBoundInputs:
    """Evaluate the coupling-gap and delta bounds a dependency structure implies.

    ``value_cap`` is an almost-sure bound on a single summand (1 for
    indicator statistics).  An empty dependent-pair set yields delta
    bounds of zero — a valid degenerate case, not an error.
    """
    value_cap = float(value_cap)
    _require_positive(value_cap=value_cap)

    gap_bound = structure.b * value_cap
    delta_bound = value_cap * math.sqrt(structure.pair_weight_sum())
    pair_count = len(structure.pairs)
    delta_coarse = structure.max_p() * structure.b * value_cap * math.sqrt(pair_count)

    gap_regular = delta_regular = None
    if structure.distance_regular:
        v_rho = structure.v_table[structure.rho]
        v_3rho = structure.v_table[3 * structure.rho]
        gap_regular = v_rho * value_cap
        delta_regular = (
            value_cap * len(structure.indices) ** -0.5 * v_rho * math.sqrt(v_3rho)
        )

    return LocalBoundInputs(
        gap_bound=gap_bound,
        delta_bound=delta_bound,
        delta_bound_coarse=delta_coarse,
        gap_bound_regular=gap_regular,
        delta_bound_regular=delta_regular,
        value_cap=value_cap,
        neighborhood_max=structure.b,
        index_count=len(structure.indices),
        dependent_pair_count=pair_count,
    )
