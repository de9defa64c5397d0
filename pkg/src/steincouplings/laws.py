"""Finite discrete laws and their bias transforms.

A :class:`DiscreteLaw` holds atoms and probabilities.  It exposes the two
distributional transforms the couplings are built from:

* size biasing (law on non-negative atoms reweighted by the atom value),
* zero biasing (for a mean-zero law: the absolutely continuous law with
  density ``E[Y 1(Y > t)] / Var(Y)``, piecewise constant between atoms).

Sampling uses a vectorized alias table so bulk draws cost O(1) per draw.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateModelError

__all__ = ["AliasTable", "DiscreteLaw", "rademacher"]

_ATOL = 1e-12


class AliasTable:
    """Walker/Vose alias table for repeated discrete sampling.

    Build is O(K); each draw consumes one uniform index and one uniform
    accept variate, so vectorized batches are O(size).
    """

    def __init__(self, weights: np.ndarray):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise DegenerateModelError("all-zero weight table")
        self.probs = w / total
        k = w.size
        scaled = self.probs * k
        accept = np.ones(k)
        alias = np.arange(k)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        scaled = scaled.copy()
        while small and large:
            s = small.pop()
            g = large.pop()
            accept[s] = scaled[s]
            alias[s] = g
            scaled[g] -= 1.0 - scaled[s]
            (small if scaled[g] < 1.0 else large).append(g)
        self._accept = accept
        self._alias = alias

    def draw(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray | int:
        n = 1 if size is None else size
        idx = rng.integers(0, self._accept.size, size=n)
        take_alias = rng.random(n) >= self._accept[idx]
        idx[take_alias] = self._alias[idx[take_alias]]
        return int(idx[0]) if size is None else idx


@dataclass(frozen=True)
class DiscreteLaw:
    """Finite discrete law with distinct sorted atoms."""

    values: np.ndarray
    probs: np.ndarray
    _alias: AliasTable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1:
            raise ValueError("values and probs must be 1-d arrays of equal length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be non-negative and sum to one")
        order = np.argsort(v)
        v, p = v[order], p[order]
        if np.any(np.diff(v) <= 0):
            raise ValueError("atoms must be distinct")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p / p.sum())
        object.__setattr__(self, "_alias", AliasTable(self.probs))

    @property
    def mean(self) -> float:
        return float(self.values @ self.probs)

    @property
    def variance(self) -> float:
        m = self.mean
        return float(((self.values - m) ** 2) @ self.probs)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        idx = self._alias.draw(rng, size)
        return self.values[idx]

    def size_biased(self) -> "DiscreteLaw":
        """Law with probabilities proportional to ``value * prob``.

        Requires non-negative atoms and positive mean.
        """
        if np.any(self.values < -_ATOL):
            raise DegenerateModelError("size biasing needs non-negative atoms")
        w = np.clip(self.values, 0.0, None) * self.probs
        if w.sum() <= 0:
            raise DegenerateModelError("size biasing needs positive mean")
        keep = w > 0
        return DiscreteLaw(self.values[keep], w[keep] / w.sum())

    def zero_bias_segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Segments ``(left, right, weight)`` of the zero-biased density.

        For a mean-zero law with atoms ``y_1 < ... < y_k`` the zero-biased
        law has density ``E[Y 1(Y > t)] / Var(Y)``, constant on each
        ``(y_i, y_{i+1})`` and zero outside ``[y_1, y_k]``; weights sum to 1.
        """
        if abs(self.mean) > 1e-9 * max(1.0, float(np.abs(self.values).max())):
            raise DegenerateModelError("zero biasing needs a mean-zero law")
        var = self.variance
        if var <= 0:
            raise DegenerateModelError("zero biasing needs positive variance")
        v, p = self.values, self.probs
        tail = np.cumsum((v * p)[::-1])[::-1]  # tail[i] = E[Y 1(Y >= y_i)]
        heights = tail[1:] / var               # density on (y_i, y_{i+1})
        widths = np.diff(v)
        weights = np.clip(heights, 0.0, None) * widths
        return v[:-1], v[1:], weights

    def zero_bias_sample(self, rng: np.random.Generator, size: int | None = None):
        """Inverse-transform draw from the zero-biased law.

        Picks a segment proportional to its mass, then a uniform point
        inside it.  For the two-point law at ±c this is uniform(-c, c).
        """
        left, right, weights = self.zero_bias_segments()
        table = AliasTable(weights)
        idx = table.draw(rng, 1 if size is None else size)
        u = rng.random(np.shape(idx))
        out = left[idx] + u * (right[idx] - left[idx])
        return float(out[0]) if size is None else out


def rademacher(c: float = 1.0) -> DiscreteLaw:
    """Two-point law at ±c with equal mass."""
    if c <= 0:
        raise ValueError("c must be positive")
    return DiscreteLaw(np.array([-c, c]), np.array([0.5, 0.5]))
