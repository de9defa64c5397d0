"""Score arrays for permutation statistics Y = sum_i a[i, pi(i)].

Centering puts an array into the form each coupling requires:

* uniform model: every row sums to zero (then E Y = 0 and the exchangeable
  pair satisfies the exact shrinkage identity);
* cycle-type model: symmetric, zero diagonal, off-diagonal entries summing
  to zero (then E Y = 0 for any fixed-point-free class).

Moments come from exact support enumeration when it fits the cap, or from
seeded Monte Carlo with a recorded standard error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .permutations import DEFAULT_SUPPORT_CAP, PermutationModel

__all__ = [
    "ScoreArray",
    "MomentSummary",
    "center_for_uniform",
    "center_for_cycle_type",
    "load_score_csv",
    "exact_moments",
    "mc_moments",
    "permutation_statistic",
]


@dataclass(frozen=True)
class ScoreArray:
    """n x n float array plus the centering contract it satisfies."""

    a: np.ndarray
    row_centered: bool = False
    symmetric_centered: bool = False

    def __post_init__(self):
        arr = np.asarray(self.a, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("score array must be square")
        if not np.all(np.isfinite(arr)):
            raise ValueError("score array must be finite")
        n = arr.shape[0]
        tol = 1e-12 * n * float(np.abs(arr).max())
        if self.row_centered and float(np.abs(arr.sum(axis=1)).max()) > tol:
            raise ConfigError("row_centered flag set but some row does not sum to zero")
        if self.symmetric_centered:
            if float(np.abs(arr - arr.T).max()) > tol:
                raise ConfigError("symmetric_centered flag set but array is not symmetric")
            if float(np.abs(np.diagonal(arr)).max()) > tol:
                raise ConfigError("symmetric_centered flag set but diagonal is not zero")
            if abs(float(arr.sum())) > tol:
                raise ConfigError("symmetric_centered flag set but entries do not sum to zero")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "a", arr)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.a).max())


def center_for_uniform(a) -> ScoreArray:
    """Subtract row means; rows of the result sum to zero."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 2:
        raise ValueError("need a square array with n >= 2")
    out = arr - arr.mean(axis=1, keepdims=True)
    return ScoreArray(out, row_centered=True)


def center_for_cycle_type(a) -> ScoreArray:
    """Symmetrize, zero the diagonal, and center the off-diagonal mean.

    The result is symmetric with zero diagonal and off-diagonal sum zero,
    the form the conjugation coupling requires.  Rows are in general not
    centered.
    """
    arr = np.asarray(a, dtype=float)
    n = arr.shape[0]
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or n < 4:
        raise ValueError("need a square array with n >= 4")
    sym = (arr + arr.T) / 2.0
    np.fill_diagonal(sym, 0.0)
    off_mean = sym.sum() / (n * (n - 1))
    sym = sym - off_mean
    np.fill_diagonal(sym, 0.0)
    return ScoreArray(sym, symmetric_centered=True)


def load_score_csv(path) -> np.ndarray:
    """Read a square numeric array from a comma-separated file."""
    arr = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"CSV at {path} is not square: shape {arr.shape}")
    return arr


def permutation_statistic(scores: ScoreArray, perm) -> float:
    """Y(pi) = sum_i a[i, pi(i)]."""
    a = scores.a
    return float(sum(a[i, perm[i]] for i in range(len(perm))))


@dataclass(frozen=True)
class MomentSummary:
    """Mean and variance of Y, with provenance."""

    mean: float
    variance: float
    exact: bool
    support_size: int | None = None
    reps: int | None = None
    mean_stderr: float | None = None


def exact_moments(model: PermutationModel, scores: ScoreArray,
                  cap: int = DEFAULT_SUPPORT_CAP) -> MomentSummary:
    """Mean and variance of Y by full support enumeration."""
    if scores.n != model.n:
        raise ValueError("score array size does not match model")
    a = scores.a
    idx = np.arange(model.n)
    total = 0.0
    total_sq = 0.0
    count = 0
    for perm in model.enumerate_support(cap=cap):
        y = float(a[idx, perm].sum())
        total += y
        total_sq += y * y
        count += 1
    mean = total / count
    return MomentSummary(mean=mean, variance=total_sq / count - mean * mean,
                         exact=True, support_size=count)


def mc_moments(model: PermutationModel, scores: ScoreArray, reps: int,
               rng: np.random.Generator) -> MomentSummary:
    """Monte Carlo mean and variance of Y with the mean's standard error."""
    if scores.n != model.n:
        raise ValueError("score array size does not match model")
    if reps < 2:
        raise ValueError("need at least two replicates")
    perms = model.sample_batch(rng, reps)
    ys = scores.a[np.arange(model.n)[None, :], perms].sum(axis=1)
    mean = float(ys.mean())
    var = float(ys.var(ddof=1))
    return MomentSummary(mean=mean, variance=var, exact=False, reps=reps,
                         mean_stderr=float(np.sqrt(var / reps)))
