"""Verification harness for the coupling constructions.

Empirical distance metrics with distribution-free confidence bands,
characterizing-equation testers for the two bias transforms, exact
pair checks (exchangeability, conditional linearity, the squared-gap
moment identity), coupling-gap audits, frequency comparisons against
enumeration oracles, and the bound-versus-empirical comparison.  Every
check returns a :class:`CheckReport` that serializes to one JSON line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2

from .errors import ConfigError
from .permutations import DEFAULT_SUPPORT_CAP, PermutationModel
from .scores import ScoreArray
from .zero_bias import ExchangeablePairSpec

__all__ = [
    "DistanceEstimate",
    "CheckReport",
    "normal_cdf",
    "dkw_half_width",
    "standardize",
    "kolmogorov_distance",
    "interval_distance",
    "characterizing_check_zero",
    "characterizing_check_size",
    "linearity_check",
    "exchangeability_check",
    "pair_moment_check",
    "gap_audit",
    "delta_vs_bound",
    "frequency_check",
    "Z_THRESHOLD",
    "DKW_CONFIDENCE",
]

#: Two-sided z threshold for Monte Carlo identity checks; |z| > 4 has
#: probability ~6e-5 per test under the null, small against the dozens
#: of checks a suite run performs.
Z_THRESHOLD = 4.0

#: Confidence level for the distribution-free (DKW) band on empirical
#: distances.
DKW_CONFIDENCE = 0.99


def normal_cdf(x):
    """Standard normal CDF, accurate to ~1e-15 (complementary error function)."""
    return ndtr(x)


def dkw_half_width(sample_count: int, confidence: float = DKW_CONFIDENCE) -> float:
    """Distribution-free band: sqrt(ln(2/(1-confidence)) / (2 N))."""
    if sample_count < 1:
        raise ConfigError("need a nonempty sample")
    if not 0 < confidence < 1:
        raise ConfigError("confidence must be in (0, 1)")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * sample_count))


@dataclass(frozen=True)
class DistanceEstimate:
    """Empirical distance to the standard normal over one metric class."""

    metric: str  # "half-line" | "interval"
    value: float
    sample_count: int
    dkw_band: float

    def as_dict(self) -> dict:
        return {
            "metric": self.metric,
            "value": self.value,
            "sample_count": self.sample_count,
            "dkw_band": self.dkw_band,
        }


@dataclass(frozen=True)
class CheckReport:
    """One named check: pass/fail plus the statistic that decided it.

    ``passed`` is exactly ``observed <= threshold`` (direction "<=") or
    ``observed >= threshold`` (direction ">=", used for p-values).
    """

    name: str
    passed: bool
    observed: float
    threshold: float
    direction: str = "<="
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "observed": self.observed,
            "threshold": self.threshold,
            "direction": self.direction,
            "details": self.details,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def _report(name: str, observed: float, threshold: float,
            direction: str = "<=", details: dict | None = None) -> CheckReport:
    if direction == "<=":
        passed = observed <= threshold
    elif direction == ">=":
        passed = observed >= threshold
    else:
        raise ConfigError(f"unknown comparison direction {direction!r}")
    return CheckReport(name=name, passed=bool(passed), observed=float(observed),
                       threshold=float(threshold), direction=direction,
                       details=details or {})


# -- empirical distances ------------------------------------------------------


def standardize(values, mean: float, sigma: float) -> np.ndarray:
    """(values - mean) / sigma, validating sigma > 0."""
    if not sigma > 0:
        raise ConfigError("sigma must be positive")
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ConfigError("need a nonempty sample")
    return (values - mean) / sigma


def kolmogorov_distance(standardized) -> DistanceEstimate:
    """sup_x |empirical CDF - normal CDF| over a standardized sample."""
    x = np.sort(np.asarray(standardized, dtype=float))
    n = x.size
    if n == 0:
        raise ConfigError("need a nonempty sample")
    phi = normal_cdf(x)
    grid = np.arange(1, n + 1) / n
    value = float(np.maximum(np.abs(grid - phi), np.abs(grid - 1.0 / n - phi)).max())
    return DistanceEstimate("half-line", value, n, dkw_half_width(n))


def interval_distance(standardized) -> DistanceEstimate:
    """sup over intervals [c, d], c < d sample points or infinite, of
    |empirical mass - normal mass|.

    The sup splits at the endpoints: deviation([c, d]) = g(d) + h(c) with
    g(x_j) = j/N - Phi(x_j) and h(x_i) = Phi(x_i) - (i-1)/N, so a prefix
    maximum over the sorted sample gives the exact value in O(N log N).
    Infinite endpoints (half-lines) enter as zero sentinels.
    """
    x = np.sort(np.asarray(standardized, dtype=float))
    n = x.size
    if n == 0:
        raise ConfigError("need a nonempty sample")
    phi = normal_cdf(x)
    g = np.arange(1, n + 1) / n - phi        # right-endpoint deviation
    h = phi - np.arange(0, n) / n            # left-endpoint deviation
    # best h strictly before each right endpoint, with the -inf sentinel 0
    h_prefix = np.concatenate(([0.0], np.maximum.accumulate(h)[:-1]))
    h_prefix = np.maximum(h_prefix, 0.0)
    over = float((g + h_prefix).max())
    over = max(over, max(0.0, float(h.max())))      # d = +inf sentinel
    neg_prefix = np.concatenate(([0.0], np.maximum.accumulate(-h)[:-1]))
    neg_prefix = np.maximum(neg_prefix, 0.0)
    under = float((-g + neg_prefix).max())
    under = max(under, max(0.0, float((-h).max())))
    value = max(over, under, 0.0)
    return DistanceEstimate("interval", value, n, dkw_half_width(n))


# -- characterizing equations -------------------------------------------------

_ZERO_FAMILY = {
    "identity": (lambda x: x, lambda x: np.ones_like(x)),
    "square": (lambda x: x ** 2, lambda x: 2.0 * x),
    "cube": (lambda x: x ** 3, lambda x: 3.0 * x ** 2),
    "cosine": (np.cos, lambda x: -np.sin(x)),
}

_SIZE_FAMILY = {
    "identity": lambda x: x,
    "square": lambda x: x ** 2,
    "cosine": np.cos,
}


def _identity_z(diffs: np.ndarray, coeff_mean: float, coeff_stderr: float) -> float:
    """z-statistic of a mean-zero hypothesis from paired per-draw values.

    ``coeff_stderr`` propagates the uncertainty of an estimated constant
    (sigma^2 or mu) multiplying a term with per-draw mean ``coeff_mean``;
    it is zero when the constant is enumeration-exact.
    """
    n = diffs.size
    if n < 2:
        raise ConfigError("need at least two draws")
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    se = math.sqrt(sd * sd / n + (coeff_mean * coeff_stderr) ** 2)
    if se == 0.0:
        return 0.0 if mean == 0.0 else math.inf
    return mean / se


def characterizing_check_zero(y, y_star, sigma_sq: float,
                              threshold: float = Z_THRESHOLD,
                              sigma_sq_stderr: float = 0.0) -> CheckReport:
    """Test E[Y f(Y)] = sigma^2 E[f'(Y*)] over the fixed function family.

    ``y`` and ``y_star`` must be aligned per-draw, so the difference
    Y f(Y) - sigma^2 f'(Y*) is a paired mean-zero variable under the
    null and its z-statistic is valid without a two-sample correction.
    A Monte Carlo ``sigma_sq`` must pass its standard error so the z
    denominators account for it.
    """
    y = np.asarray(y, dtype=float)
    y_star = np.asarray(y_star, dtype=float)
    if y.shape != y_star.shape or y.ndim != 1:
        raise ConfigError("y and y_star must be aligned 1-d arrays")
    if not sigma_sq > 0:
        raise ConfigError("sigma_sq must be positive")
    zs = {}
    for name, (f, fprime) in _ZERO_FAMILY.items():
        deriv = fprime(y_star)
        diffs = y * f(y) - sigma_sq * deriv
        zs[name] = _identity_z(diffs, float(np.mean(deriv)), sigma_sq_stderr)
    observed = max(abs(z) for z in zs.values())
    return _report("characterizing_zero", observed, threshold,
                   details={"z_by_function": zs, "draws": int(y.size),
                            "sigma_sq": sigma_sq,
                            "sigma_sq_stderr": sigma_sq_stderr})


def characterizing_check_size(y, y_s, mu: float,
                              threshold: float = Z_THRESHOLD,
                              mu_stderr: float = 0.0) -> CheckReport:
    """Test E[Y f(Y)] = mu E[f(Y^s)] over the fixed function family."""
    y = np.asarray(y, dtype=float)
    y_s = np.asarray(y_s, dtype=float)
    if y.shape != y_s.shape or y.ndim != 1:
        raise ConfigError("y and y_s must be aligned 1-d arrays")
    if not mu > 0:
        raise ConfigError("mu must be positive")
    zs = {}
    for name, f in _SIZE_FAMILY.items():
        transformed = f(y_s)
        diffs = y * f(y) - mu * transformed
        zs[name] = _identity_z(diffs, float(np.mean(transformed)), mu_stderr)
    observed = max(abs(z) for z in zs.values())
    return _report("characterizing_size", observed, threshold,
                   details={"z_by_function": zs, "draws": int(y.size),
                            "mu": mu, "mu_stderr": mu_stderr})


# -- exact pair checks --------------------------------------------------------


def _pair_for_model(raw_scores, model: PermutationModel) -> ExchangeablePairSpec:
    """Build the model's exchangeable pair, enforcing the score contract."""
    if isinstance(raw_scores, ScoreArray):
        scores = raw_scores
        want = "row_centered" if model.is_uniform else "symmetric_centered"
        if not getattr(scores, want):
            raise ConfigError(f"score array lacks the {want} contract")
    elif model.is_uniform:
        scores = ScoreArray(raw_scores, row_centered=True)
    else:
        scores = ScoreArray(raw_scores, symmetric_centered=True)
    kind = "uniform" if model.is_uniform else "cycle"
    return ExchangeablePairSpec(scores, model, kind)


def linearity_check(raw_scores, model: PermutationModel, reps: int,
                    rng: np.random.Generator,
                    rel_tol: float = 1e-10) -> CheckReport:
    """Exact conditional-linearity test: for sampled permutations, the
    average of Y'' over all n(n-1) ordered index pairs must equal
    (1 - lambda) Y' to ``rel_tol``, relative to the statistic scale n*C.

    The score contract (row centering for the uniform model; symmetry,
    zero diagonal, and global centering for a cycle-type model) is a
    hypothesis of the identity, so a violating array fails the check
    rather than raising.
    """
    name = "linearity_uniform" if model.is_uniform else "linearity_cycle_type"
    try:
        pair = _pair_for_model(raw_scores, model)
    except ConfigError as exc:
        return CheckReport(name=name, passed=False, observed=math.inf,
                           threshold=rel_tol,
                           details={"score_contract_violation": str(exc)})
    n = model.n
    scale = max(n * pair.scores.sup_norm, 1e-300)
    shrink = 1.0 - pair.lam
    worst = 0.0
    for _ in range(reps):
        perm = model.sample(rng)
        y_prime = pair.statistic(perm)
        total = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    total += pair.statistic(pair.second_permutation(perm, i, j))
        avg = total / (n * (n - 1))
        worst = max(worst, abs(avg - shrink * y_prime) / scale)
    return _report(name, worst, rel_tol,
                   details={"reps": reps, "n": n, "lambda": pair.lam})


def exchangeability_check(pair: ExchangeablePairSpec,
                          cap: int = DEFAULT_SUPPORT_CAP,
                          tol: float = 1e-12) -> CheckReport:
    """Exact joint-atom symmetry |P(y1, y2) - P(y2, y1)| <= tol for all atoms."""
    atoms = pair.enumerate_joint(cap=cap)
    worst = 0.0
    for (y1, y2), p in atoms.items():
        worst = max(worst, abs(p - atoms.get((y2, y1), 0.0)))
    return _report("exchangeability", worst, tol,
                   details={"atoms": len(atoms), "kind": pair.kind})


def pair_moment_check(pair: ExchangeablePairSpec,
                      cap: int = DEFAULT_SUPPORT_CAP,
                      rel_tol: float = 1e-10) -> CheckReport:
    """Exact squared-gap identity E(Y' - Y'')^2 = 2 lambda sigma^2.

    Both sides come from the same joint enumeration, so agreement is a
    nontrivial consistency statement, not a tautology.
    """
    atoms = pair.enumerate_joint(cap=cap)
    gap_sq = sum(p * (y1 - y2) ** 2 for (y1, y2), p in atoms.items())
    mean = sum(p * y1 for (y1, _), p in atoms.items())
    second = sum(p * y1 ** 2 for (y1, _), p in atoms.items())
    sigma_sq = second - mean ** 2
    target = 2.0 * pair.lam * sigma_sq
    observed = abs(gap_sq - target) / max(abs(target), 1.0)
    return _report("pair_squared_gap", observed, rel_tol,
                   details={"enumerated": gap_sq, "two_lambda_sigma_sq": target,
                            "sigma_sq": sigma_sq, "lambda": pair.lam})


# -- gap audits and bound comparisons ----------------------------------------


def gap_audit(gaps, declared_bound: float, name: str = "gap_audit") -> CheckReport:
    """Every per-draw coupling gap must be within the declared bound.

    A float slack of 1e-9 * max(1, bound) absorbs accumulation error in
    the gap evaluation itself; genuine violations are orders larger.
    """
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size == 0:
        raise ConfigError("need a nonempty gap stream")
    slack = 1e-9 * max(1.0, abs(declared_bound))
    threshold = declared_bound + slack
    observed = float(gaps.max())
    violations = int((gaps > threshold).sum())
    return _report(name, observed, threshold,
                   details={"declared_bound": declared_bound,
                            "float_slack": slack,
                            "violations": violations,
                            "draws": int(gaps.size)})


def delta_vs_bound(estimate: DistanceEstimate, bound_report) -> CheckReport:
    """Empirical distance minus its DKW band must be within min(bound, 1)."""
    threshold = min(bound_report.bound, 1.0)
    observed = estimate.value - estimate.dkw_band
    return _report("delta_vs_bound", observed, threshold,
                   details={"metric": estimate.metric,
                            "distance": estimate.value,
                            "dkw_band": estimate.dkw_band,
                            "bound": bound_report.bound,
                            "formula": bound_report.formula,
                            "vacuous": bound_report.vacuous,
                            "precondition_ok": bound_report.precondition_ok,
                            "sample_count": estimate.sample_count})


# -- frequency comparison against exact oracles -------------------------------


def frequency_check(counts: dict, probs: dict, alpha: float = 0.001,
                    name: str = "frequency_vs_oracle") -> CheckReport:
    """Chi-square goodness of fit of observed counts against exact atom
    probabilities; passes when the p-value is >= ``alpha``.

    Any observed key outside the oracle support fails outright (the
    oracle is exact, so off-support mass is a correctness bug, not
    noise).  Bins with expected count < 5 are pooled for validity.
    """
    support = {k: p for k, p in probs.items() if p > 0}
    if not support:
        raise ConfigError("oracle support is empty")
    total = sum(counts.values())
    if total == 0:
        raise ConfigError("need a nonempty sample")
    off_support = sum(c for k, c in counts.items() if k not in support)
    if off_support:
        return _report(name, 0.0, alpha, direction=">=",
                       details={"off_support_draws": int(off_support),
                                "draws": int(total)})

    observed = np.array([counts.get(k, 0) for k in support], dtype=float)
    expected = np.array([p * total for p in support.values()], dtype=float)
    # pool the small-expectation bins; fold a still-small pool into the
    # smallest regular bin so every final bin has expected >= 5
    small = expected < 5.0
    if small.any():
        if (~small).sum() == 0:
            obs_b = np.array([observed.sum()])
            exp_b = np.array([expected.sum()])
        else:
            obs_b = np.append(observed[~small], observed[small].sum())
            exp_b = np.append(expected[~small], expected[small].sum())
            if exp_b[-1] < 5.0 and exp_b.size > 1:
                k = int(np.argmin(exp_b[:-1]))
                obs_b[k] += obs_b[-1]
                exp_b[k] += exp_b[-1]
                obs_b, exp_b = obs_b[:-1], exp_b[:-1]
    else:
        obs_b, exp_b = observed, expected

    dof = exp_b.size - 1
    if dof == 0:
        p_value = 1.0
        stat = 0.0
    else:
        # normalize expected to the observed total (guards atom rounding)
        exp_b = exp_b * (obs_b.sum() / exp_b.sum())
        stat = float((((obs_b - exp_b) ** 2) / exp_b).sum())
        p_value = float(chi2.sf(stat, dof))
    return _report(name, p_value, alpha, direction=">=",
                   details={"chi_square": stat, "dof": int(dof),
                            "bins": int(exp_b.size), "draws": int(total)})
