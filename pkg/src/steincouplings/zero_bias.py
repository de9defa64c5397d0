"""Zero-bias couplings.

For a mean-zero, variance ``sigma^2`` variable ``Y``, the zero-biased law
``Y*`` is defined by ``E[Y f(Y)] = sigma^2 E[f'(Y*)]`` for smooth ``f``.
This module builds ``Y*`` on the same probability space as ``Y`` three ways:

* independent sums: replace one summand, chosen with probability
  proportional to its variance, by a draw from its zero-biased law;
* uniform random permutations: an exchangeable pair ``(Y', Y'')`` from a
  transposed permutation, square biased via a four-index table, realized by
  a small surgery on the permutation;
* fixed-point-free cycle-type permutations: an exchangeable pair from a
  conjugated permutation, square biased case by case, realized by a
  conjugation surgery.

In the pair constructions, ``Y* = U Y_dagger + (1 - U) Y_ddagger`` where
``(Y_dagger, Y_ddagger)`` carries the square bias of ``(Y', Y'')`` and
``U`` is an independent uniform.  Each draw certifies the coupling gap:
``|Y* - Y| <= 8 C`` for the uniform model and ``|Y* - Y| <= 40 C`` for the
cycle-type model, with ``C`` the sup norm of the centered score array and
at most 4 (respectively 20) permutation positions touched.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModelError, SupportCapExceeded
from .laws import AliasTable, DiscreteLaw
from .permutations import (DEFAULT_SUPPORT_CAP, CycleType, PermutationModel,
                           apply_transposition, canonical_cycles,
                           conjugate_by_transposition)
from .scores import ScoreArray

__all__ = [
    "ZeroBiasDraw",
    "IndependentSumDraws",
    "ExchangeablePairSpec",
    "exchangeable_pair_uniform",
    "exchangeable_pair_cycle_type",
    "square_bias_oracle",
    "zero_bias_independent_sum",
    "rademacher_sum_zero_bias",
    "UniformZeroBiasSampler",
    "CycleTypeZeroBiasSampler",
    "rejection_square_bias_pairs",
    "assemble_y_star",
    "DRAW_FIELDS",
    "write_spool",
    "read_spool",
    "DEFAULT_TUPLE_CAP",
]

DEFAULT_TUPLE_CAP = 10 ** 7

#: Spooled record layout: little-endian float64, one value per field, in
#: this order.  ``touched`` is spooled as its cardinality.
DRAW_FIELDS = ("y", "y_dagger", "y_ddagger", "y_star", "u", "s", "t_prime",
               "t_dagger", "t_ddagger", "touched_size", "gap")


@dataclass(frozen=True)
class ZeroBiasDraw:
    """One coupled draw (Y, Y*) with its decomposition certificate.

    ``s`` is the score sum over positions outside the touched set; the
    ``t`` values are the touched-position sums for the original and the two
    surgical permutations, so ``y = s + t_prime``, ``y_dagger = s +
    t_dagger``, ``y_ddagger = s + t_ddagger``.
    """

    y: float
    y_dagger: float
    y_ddagger: float
    y_star: float
    u: float
    s: float
    t_prime: float
    t_dagger: float
    t_ddagger: float
    touched: tuple
    gap: float


def assemble_y_star(y_dagger: float, y_ddagger: float, u: float) -> float:
    """Uniform mixture along the segment between the square-biased pair."""
    return u * y_dagger + (1.0 - u) * y_ddagger


# ---------------------------------------------------------------------------
# independent sums
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndependentSumDraws:
    """Bulk coupled draws for a sum of independent mean-zero summands."""

    y: np.ndarray
    y_star: np.ndarray
    picked: np.ndarray
    gap_bound: float

    @property
    def gaps(self) -> np.ndarray:
        return np.abs(self.y_star - self.y)


def zero_bias_independent_sum(laws: list[DiscreteLaw], reps: int,
                              rng: np.random.Generator) -> IndependentSumDraws:
    """Couple Y = sum X_a with Y* = Y - X_I + X_I*, P(I = a) ~ Var(X_a).

    Each summand law must be mean zero.  The per-draw gap is bounded by
    twice the largest atom magnitude among the summands.
    """
    if not laws:
        raise ValueError("need at least one summand law")
    variances = np.array([law.variance for law in laws])
    if variances.sum() <= 0:
        raise DegenerateModelError("all summands have zero variance")
    for law in laws:
        if abs(law.mean) > 1e-9 * max(1.0, float(np.abs(law.values).max())):
            raise DegenerateModelError("summands must be mean zero")
    picker = AliasTable(variances)
    draws = np.stack([law.sample(rng, reps) for law in laws])  # (m, reps)
    y = draws.sum(axis=0)
    picked = picker.draw(rng, reps)
    x_old = draws[picked, np.arange(reps)]
    x_new = np.empty(reps)
    for a, law in enumerate(laws):
        mask = picked == a
        count = int(mask.sum())
        if count:
            x_new[mask] = law.zero_bias_sample(rng, count)
    gap_bound = 2.0 * max(float(np.abs(law.values).max()) for law in laws)
    return IndependentSumDraws(y=y, y_star=y - x_old + x_new, picked=picked,
                               gap_bound=gap_bound)


def rademacher_sum_zero_bias(n_summands: int, reps: int,
                             rng: np.random.Generator) -> IndependentSumDraws:
    """Fast path for Y = sum of n iid +-1 signs.

    Y is drawn from its exact binomial law and the replaced sign from its
    exact conditional law given Y (P(+1 | Y) = K / n with K the number of
    positive signs), which reproduces the generic coupling's joint law
    without materializing the summands.  Gap bound 2 (B = 1).
    """
    if n_summands < 1:
        raise ValueError("need at least one summand")
    k = rng.binomial(n_summands, 0.5, size=reps)
    y = 2.0 * k - n_summands
    eps = np.where(rng.random(reps) < k / n_summands, 1.0, -1.0)
    x_new = rng.uniform(-1.0, 1.0, size=reps)
    picked = np.zeros(reps, dtype=np.int64)
    return IndependentSumDraws(y=y, y_star=y - eps + x_new, picked=picked,
                               gap_bound=2.0)


# ---------------------------------------------------------------------------
# exchangeable pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExchangeablePairSpec:
    """An exchangeable pair (Y', Y'') over a permutation model.

    ``kind`` is ``"uniform"`` (second coordinate from a position
    transposition, shrinkage 2/(n-1)) or ``"cycle"`` (second coordinate from
    a value conjugation, shrinkage 4/n).  The pair satisfies
    ``E(Y'' | pi') = (1 - lam) Y'`` exactly for suitably centered scores.
    """

    scores: ScoreArray
    model: PermutationModel
    kind: str

    def __post_init__(self):
        if self.kind not in ("uniform", "cycle"):
            raise ValueError("kind must be 'uniform' or 'cycle'")
        if self.scores.n != self.model.n:
            raise ValueError("score array size does not match model")

    @property
    def lam(self) -> float:
        if self.kind == "uniform":
            return 2.0 / (self.model.n - 1)
        return 4.0 / self.model.n

    def second_permutation(self, perm, i: int, j: int):
        if self.kind == "uniform":
            return apply_transposition(perm, i, j)
        return conjugate_by_transposition(perm, i, j)

    def statistic(self, perm) -> float:
        a = self.scores.a
        return float(sum(a[x, perm[x]] for x in range(len(perm))))

    def pair_values(self, perm, i: int, j: int) -> tuple[float, float]:
        return (self.statistic(perm),
                self.statistic(self.second_permutation(perm, i, j)))

    def sample_pair(self, rng: np.random.Generator) -> tuple[float, float]:
        perm = self.model.sample(rng)
        i, j = _ordered_distinct_pair(rng, self.model.n)
        return self.pair_values(perm, i, j)

    def enumerate_joint(self, cap: int = DEFAULT_SUPPORT_CAP) -> dict:
        """Exact joint law of (Y', Y''), atoms keyed to 12 decimals."""
        joint: dict = {}
        support = 0
        n = self.model.n
        for perm in self.model.enumerate_support(cap=cap):
            support += 1
            y1 = self.statistic(perm)
            for i, j in itertools.permutations(range(n), 2):
                y2 = self.statistic(self.second_permutation(perm, i, j))
                key = (_r12(y1), _r12(y2))
                joint[key] = joint.get(key, 0.0) + 1.0
        total = support * n * (n - 1)
        return {k: v / total for k, v in joint.items()}


def exchangeable_pair_uniform(scores: ScoreArray) -> ExchangeablePairSpec:
    if not scores.row_centered:
        raise ValueError("uniform pair needs a row-centered score array")
    return ExchangeablePairSpec(scores, PermutationModel(scores.n), "uniform")


def exchangeable_pair_cycle_type(scores: ScoreArray,
                                 cycle_type: CycleType) -> ExchangeablePairSpec:
    if not scores.symmetric_centered:
        raise ValueError("cycle-type pair needs a symmetric centered score array")
    return ExchangeablePairSpec(
        scores, PermutationModel(scores.n, cycle_type), "cycle")


def square_bias_oracle(pair: ExchangeablePairSpec,
                       cap: int = DEFAULT_SUPPORT_CAP) -> dict:
    """Exact square-biased joint law of the pair, by enumeration.

    Returns atoms ``{(y1, y2): prob}`` of the law proportional to
    ``(y' - y'')^2 dP(y', y'')``.  Degenerate pairs (zero mean square
    difference) raise.
    """
    joint: dict = {}
    total = 0.0
    n = pair.model.n
    for perm in pair.model.enumerate_support(cap=cap):
        y1 = pair.statistic(perm)
        for i, j in itertools.permutations(range(n), 2):
            y2 = pair.statistic(pair.second_permutation(perm, i, j))
            w = (y1 - y2) ** 2
            if w > 0.0:
                key = (_r12(y1), _r12(y2))
                joint[key] = joint.get(key, 0.0) + w
                total += w
    if total <= 0.0:
        raise DegenerateModelError("exchangeable pair has zero square difference")
    return {k: v / total for k, v in joint.items()}


def _r12(x: float) -> float:
    return round(float(x), 12)


def _ordered_distinct_pair(rng: np.random.Generator, n: int) -> tuple[int, int]:
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    return i, j


# ---------------------------------------------------------------------------
# uniform-model surgical sampler
# ---------------------------------------------------------------------------

class UniformZeroBiasSampler:
    """Zero-bias coupling for Y under a uniform random permutation.

    Precomputes the square-weighted law of the four-index table
    ``(I, K, J, L)`` on ``{i != j, k != l}`` with weight
    ``((a[i,k] + a[j,l]) - (a[i,l] + a[j,k]))^2``, then realizes each draw
    by the three-case position surgery on an independent uniform
    permutation, followed by the image transposition at ``(I, J)``.
    """

    def __init__(self, scores: ScoreArray, tuple_cap: int = DEFAULT_TUPLE_CAP):
        if not scores.row_centered:
            raise ValueError("uniform sampler needs a row-centered score array")
        n = scores.n
        if n * n * (n - 1) * (n - 1) > tuple_cap:
            raise SupportCapExceeded(
                f"tuple table size {n * n * (n - 1) * (n - 1)} exceeds cap {tuple_cap}")
        self.scores = scores
        self.model = PermutationModel(n)
        self.gap_bound = 8.0 * scores.sup_norm
        a = scores.a
        ii, kk, jj, ll = [], [], [], []
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                for k in range(n):
                    for l in range(n):
                        if k == l:
                            continue
                        ii.append(i)
                        kk.append(k)
                        jj.append(j)
                        ll.append(l)
        ii = np.array(ii)
        kk = np.array(kk)
        jj = np.array(jj)
        ll = np.array(ll)
        w = (a[ii, kk] + a[jj, ll]) - (a[ii, ll] + a[jj, kk])
        weights = w * w
        if weights.sum() <= 0:
            raise DegenerateModelError("score array gives a degenerate pair")
        self.tuple_table = np.stack([ii, kk, jj, ll], axis=1)
        self.tuple_weights = weights
        self._alias = AliasTable(weights)

    def sample_arrays(self, reps: int, rng: np.random.Generator,
                      chunk: int = 1 << 15) -> dict[str, np.ndarray]:
        """Bulk draws; returns one array per field in ``DRAW_FIELDS``."""
        out = {f: np.empty(reps) for f in DRAW_FIELDS}
        a = [[float(v) for v in row] for row in self.scores.a]
        n = self.scores.n
        table = self.tuple_table
        done = 0
        while done < reps:
            m = min(chunk, reps - done)
            perms = np.argsort(rng.random((m, n)), axis=1)
            tuples = table[self._alias.draw(rng, m)]
            us = rng.random(m)
            for r in range(m):
                rec = self._surgery(a, n, perms[r].tolist(),
                                    tuples[r], us[r])
                row = done + r
                for f, v in zip(DRAW_FIELDS, rec):
                    out[f][row] = v
            done += m
        return out

    def draw(self, rng: np.random.Generator) -> ZeroBiasDraw:
        n = self.scores.n
        a = [[float(v) for v in row] for row in self.scores.a]
        perm = list(self.model.sample(rng))
        tup = self.tuple_table[self._alias.draw(rng)]
        rec = self._surgery(a, n, perm, tup, float(rng.random()),
                            want_touched=True)
        (y, yd, ydd, ystar, u, s, tp, td, tdd, _, gap), touched = rec
        return ZeroBiasDraw(y=y, y_dagger=yd, y_ddagger=ydd, y_star=ystar,
                            u=u, s=s, t_prime=tp, t_dagger=td, t_ddagger=tdd,
                            touched=touched, gap=gap)

    @staticmethod
    def _surgery(a, n, perm, tup, u, want_touched=False):
        i, k, j, l = (int(v) for v in tup)
        inv = [0] * n
        for x, v in enumerate(perm):
            inv[v] = x
        y = 0.0
        for x in range(n):
            y += a[x][perm[x]]
        touched = sorted({i, j, inv[k], inv[l]})
        t_prime = 0.0
        for x in touched:
            t_prime += a[x][perm[x]]
        s = y - t_prime
        # three-case surgery, positions taken from the original inverse
        pd = list(perm)
        if perm[i] == l and perm[j] != k:
            pd[inv[k]], pd[j] = pd[j], pd[inv[k]]
        elif perm[i] != l and perm[j] == k:
            pd[inv[l]], pd[i] = pd[i], pd[inv[l]]
        else:
            pd[inv[k]], pd[i] = pd[i], pd[inv[k]]
            pd[inv[l]], pd[j] = pd[j], pd[inv[l]]
        t_dagger = 0.0
        for x in touched:
            t_dagger += a[x][pd[x]]
        # image transposition at (I, J)
        pd[i], pd[j] = pd[j], pd[i]
        t_ddagger = 0.0
        for x in touched:
            t_ddagger += a[x][pd[x]]
        y_dagger = s + t_dagger
        y_ddagger = s + t_ddagger
        y_star = u * y_dagger + (1.0 - u) * y_ddagger
        rec = (y, y_dagger, y_ddagger, y_star, u, s, t_prime, t_dagger,
               t_ddagger, float(len(touched)), abs(y_star - y))
        if want_touched:
            return rec, tuple(touched)
        return rec


# ---------------------------------------------------------------------------
# cycle-type surgical sampler
# ---------------------------------------------------------------------------

# case name -> tuple length
_CASES = ("B_IJ", "B_JI", "F22", "F32", "F23", "F33kq", "F33pl", "F33d")
_KAPPA = {"B_IJ": 4, "B_JI": 4, "F22": 4, "F32": 5, "F23": 5,
          "F33kq": 5, "F33pl": 5, "F33d": 6}


def _case_weight(a: np.ndarray, case: str, t: np.ndarray) -> np.ndarray:
    """Signed pair difference Y' - Y'' as a function of the value tuple."""
    cols = [t[:, m] for m in range(t.shape[1])]
    if case in ("B_IJ", "B_JI"):
        p, i, j, l = cols
        return (a[p, i] + a[j, l]) - (a[p, j] + a[i, l])
    if case == "F22":
        i, k, j, l = cols
        return 2.0 * ((a[i, k] + a[j, l]) - (a[i, l] + a[j, k]))
    if case in ("F32", "F23"):
        p, i, k, j, l = cols
        return (a[p, i] + a[i, k] + 2.0 * a[j, l]) - (a[p, j] + a[j, k] + 2.0 * a[i, l])
    if case in ("F33kq", "F33pl"):
        c0, c1, _, c3, c4 = cols
        return (a[c0, c1] + a[c3, c4]) - (a[c0, c3] + a[c1, c4])
    if case == "F33d":
        p, i, k, q, j, l = cols
        return (a[p, i] + a[i, k] + a[q, j] + a[j, l]) - (
            a[p, j] + a[j, k] + a[q, i] + a[i, l])
    raise ValueError(case)


def _case_readoff(case: str, t) -> tuple[int, int]:
    if case == "B_IJ":
        return int(t[1]), int(t[2])
    if case == "B_JI":
        return int(t[2]), int(t[1])
    if case == "F22":
        return int(t[0]), int(t[2])
    if case in ("F32", "F33kq"):
        return int(t[1]), int(t[3])
    if case in ("F23", "F33pl"):
        return int(t[3]), int(t[1])
    if case == "F33d":
        return int(t[1]), int(t[4])
    raise ValueError(case)


def _case_slots(case: str, perm, inv, by_len: dict[int, list[int]]) -> list:
    """All ordered (I, J) pairs of the given case for this permutation."""
    ge3 = [x for q, xs in by_len.items() if q >= 3 for x in xs]
    ge4 = [x for q, xs in by_len.items() if q >= 4 for x in xs]
    ge5 = [x for q, xs in by_len.items() if q >= 5 for x in xs]
    two = by_len.get(2, [])
    if case == "B_IJ":
        return [(x, perm[x]) for x in ge4]
    if case == "B_JI":
        return [(perm[x], x) for x in ge4]
    if case == "F22":
        return [(x, y) for x in two for y in two if y != x and y != perm[x]]
    if case == "F32":
        return [(x, y) for x in ge3 for y in two]
    if case == "F23":
        return [(x, y) for x in two for y in ge3]
    if case == "F33kq":
        return [(x, perm[perm[x]]) for x in ge5]
    if case == "F33pl":
        return [(perm[perm[x]], x) for x in ge5]
    if case == "F33d":
        out = []
        for x in ge3:
            bad = {x, perm[x], inv[x], perm[perm[x]], inv[inv[x]]}
            out.extend((x, y) for y in ge3 if y not in bad)
        return out
    raise ValueError(case)


def _old_tuple(case: str, perm, inv, i: int, j: int) -> tuple:
    if case == "B_IJ":
        return (inv[i], i, j, perm[j])
    if case == "B_JI":
        return (inv[j], j, i, perm[i])
    if case == "F22":
        return (i, perm[i], j, perm[j])
    if case in ("F32", "F33kq"):
        return (inv[i], i, perm[i], j, perm[j])
    if case in ("F23", "F33pl"):
        return (inv[j], j, perm[j], i, perm[i])
    if case == "F33d":
        return (inv[i], i, perm[i], inv[j], j, perm[j])
    raise ValueError(case)


def _extend_to_permutation(olds, news) -> dict:
    """Sparse permutation ``nu`` with nu[olds[m]] = news[m].

    The forward edges form disjoint paths and cycles; open paths are closed
    end-to-start, so the support stays inside ``set(olds) | set(news)``.
    """
    f = dict(zip(olds, news))
    news_set = set(news)
    for start in olds:
        if start in news_set:
            continue
        x = start
        while x in f:
            x = f[x]
            if x == start:
                break
        if x != start:
            f[x] = start
    return f


class CycleTypeZeroBiasSampler:
    """Zero-bias coupling for Y under a fixed-point-free cycle-type law.

    The square-biased joint of ``(pi, I, J)`` splits over structural cases
    of the ordered pair; each case's new value tuple is drawn with square
    weighted probability, a uniform case slot of an independent permutation
    supplies the old tuple, and the permutation is conjugated so the new
    values occupy the slot.  Case masses are ``N_g W_g / |T_g|`` with
    ``N_g`` the per-permutation slot count (a class constant), ``W_g`` the
    case's total squared tuple weight and ``|T_g|`` its tuple-space size.
    """

    def __init__(self, scores: ScoreArray, cycle_type: CycleType,
                 tuple_cap: int = DEFAULT_TUPLE_CAP,
                 mass_prepass: int = 200_000,
                 rng: np.random.Generator | None = None):
        if not scores.symmetric_centered:
            raise ValueError("cycle-type sampler needs a symmetric centered score array")
        self.scores = scores
        self.model = PermutationModel(scores.n, cycle_type)
        self.gap_bound = 40.0 * scores.sup_norm
        self.touched_bound = 20
        n = scores.n
        a = scores.a

        rep = self.model.sample(np.random.default_rng(0))
        inv_rep = [0] * n
        for x, v in enumerate(rep):
            inv_rep[v] = x
        by_len_rep = _by_cycle_length(rep)
        self.slot_counts = {case: len(_case_slots(case, rep, inv_rep, by_len_rep))
                            for case in _CASES}

        self.case_tables: dict[str, dict] = {}
        self.masses_exact = True
        masses = []
        active = []
        for case in _CASES:
            n_slots = self.slot_counts[case]
            kappa = _KAPPA[case]
            space = _falling(n, kappa)
            if n_slots == 0:
                continue
            if space <= tuple_cap:
                table = np.array(list(itertools.permutations(range(n), kappa)),
                                 dtype=np.int64)
                w = _case_weight(a, case, table)
                weights = w * w
                total = float(weights.sum())
                if total <= 0.0:
                    continue
                keep = weights > 0
                entry = {"table": table[keep], "weights": weights[keep],
                         "alias": AliasTable(weights[keep]),
                         "mean_square": total / space, "exact": True}
            else:
                self.masses_exact = False
                gen = rng if rng is not None else np.random.default_rng(0)
                sample = _uniform_distinct_tuples(gen, n, kappa, mass_prepass)
                w = _case_weight(a, case, sample)
                ms = float((w * w).mean())
                entry = {"table": None, "kappa": kappa,
                         "envelope": self._envelope(case),
                         "mean_square": ms,
                         "mean_square_stderr": float((w * w).std(ddof=1)
                                                     / math.sqrt(mass_prepass)),
                         "exact": False}
                if ms <= 0.0:
                    continue
            mass = n_slots * entry["mean_square"]
            masses.append(mass)
            active.append(case)
            self.case_tables[case] = entry
        if not masses:
            raise DegenerateModelError("score array gives a degenerate pair")
        self.active_cases = active
        self.case_masses = np.array(masses) / np.sum(masses)
        self._case_alias = AliasTable(np.array(masses))

    def _envelope(self, case: str) -> float:
        c = self.scores.sup_norm
        return (4.0 * c if case in ("B_IJ", "B_JI", "F33kq", "F33pl")
                else 8.0 * c) ** 2

    def _draw_tuple(self, case: str, rng: np.random.Generator) -> np.ndarray:
        entry = self.case_tables[case]
        if entry["table"] is not None:
            return entry["table"][entry["alias"].draw(rng)]
        n = self.scores.n
        envelope = entry["envelope"]
        while True:
            t = _uniform_distinct_tuples(rng, n, entry["kappa"], 1)
            w = float(_case_weight(self.scores.a, case, t)[0])
            if envelope <= 0.0:
                raise DegenerateModelError("zero envelope in rejection sampler")
            if rng.random() * envelope <= w * w:
                return t[0]

    def draw(self, rng: np.random.Generator) -> ZeroBiasDraw:
        rec, touched = self._one(rng, want_touched=True)
        (y, yd, ydd, ystar, u, s, tp, td, tdd, _, gap) = rec
        return ZeroBiasDraw(y=y, y_dagger=yd, y_ddagger=ydd, y_star=ystar,
                            u=u, s=s, t_prime=tp, t_dagger=td, t_ddagger=tdd,
                            touched=touched, gap=gap)

    def sample_arrays(self, reps: int, rng: np.random.Generator,
                      chunk: int = 1 << 14) -> dict[str, np.ndarray]:
        """Bulk draws; returns one array per field in ``DRAW_FIELDS``."""
        out = {f: np.empty(reps) for f in DRAW_FIELDS}
        n_cases = len(self.active_cases)
        done = 0
        while done < reps:
            m = min(chunk, reps - done)
            perms = self.model.sample_batch(rng, m)
            case_idx = self._case_alias.draw(rng, m)
            us = rng.random(m)
            slot_us = rng.random(m)
            counts = np.bincount(case_idx, minlength=n_cases)
            pools = {}
            for ci, case in enumerate(self.active_cases):
                if not counts[ci]:
                    continue
                entry = self.case_tables[case]
                if entry["table"] is not None:
                    idx = entry["alias"].draw(rng, int(counts[ci]))
                    pools[ci] = entry["table"][idx]
                else:
                    pools[ci] = np.stack([self._draw_tuple(case, rng)
                                          for _ in range(int(counts[ci]))])
            cursors = [0] * n_cases
            for r in range(m):
                ci = int(case_idx[r])
                case = self.active_cases[ci]
                t_new = pools[ci][cursors[ci]]
                cursors[ci] += 1
                perm = perms[r].tolist()
                inv = [0] * self.scores.n
                for x, v in enumerate(perm):
                    inv[v] = x
                slots = _case_slots(case, perm, inv, _by_cycle_length(perm))
                slot = slots[int(slot_us[r] * len(slots))]
                rec, _ = self.construct_record(perm, case, t_new, slot,
                                               float(us[r]),
                                               want_touched=False)
                row = done + r
                for f, v in zip(DRAW_FIELDS, rec):
                    out[f][row] = v
            done += m
        return out

    def _one(self, rng: np.random.Generator, want_touched: bool):
        perm = self.model.sample(rng)
        case = self.active_cases[self._case_alias.draw(rng)]
        t_new = self._draw_tuple(case, rng)
        inv = [0] * self.scores.n
        for x, v in enumerate(perm):
            inv[v] = x
        slots = _case_slots(case, perm, inv, _by_cycle_length(perm))
        slot = slots[int(rng.integers(len(slots)))]
        u = float(rng.random())
        return self.construct_record(perm, case, t_new, slot, u,
                                     want_touched=want_touched)

    def construct_record(self, perm, case: str, t_new, slot, u: float,
                         want_touched: bool = True):
        """Deterministic surgery given all discrete choices and the mixer."""
        n = self.scores.n
        a = self.scores.a
        inv = [0] * n
        for x, v in enumerate(perm):
            inv[v] = x
        t_old = _old_tuple(case, perm, inv, slot[0], slot[1])

        olds = [int(v) for v in t_old]
        news = [int(v) for v in t_new]
        nu = _extend_to_permutation(olds, news)
        nu_inv = {v: k for k, v in nu.items()}
        support = set(olds) | set(news)
        touched = sorted(support | {inv[x] for x in support})

        y = float(sum(a[x, perm[x]] for x in range(n)))
        t_prime = float(sum(a[x, perm[x]] for x in touched))
        s = y - t_prime

        def dagger_image(x: int) -> int:
            pre = nu_inv.get(x, x)
            return nu.get(perm[pre], perm[pre])

        i_new, j_new = _case_readoff(case, t_new)
        swap = {i_new: j_new, j_new: i_new}

        t_dagger = 0.0
        t_ddagger = 0.0
        for x in touched:
            t_dagger += a[x, dagger_image(x)]
            # ddagger conjugates dagger by the (I, J) value transposition
            t_ddagger += a[x, _swap_get(swap, dagger_image(_swap_get(swap, x)))]
        y_dagger = s + t_dagger
        y_ddagger = s + t_ddagger
        y_star = u * y_dagger + (1.0 - u) * y_ddagger
        rec = (y, y_dagger, y_ddagger, y_star, u, s, t_prime, t_dagger,
               t_ddagger, float(len(touched)), abs(y_star - y))
        return rec, (tuple(touched) if want_touched else None)


def _swap_get(swap: dict, x: int) -> int:
    return swap.get(x, x)


def _by_cycle_length(perm) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for cyc in canonical_cycles(perm):
        out.setdefault(len(cyc), []).extend(cyc)
    return out


def _falling(n: int, k: int) -> int:
    out = 1
    for m in range(k):
        out *= n - m
    return out


def _uniform_distinct_tuples(rng: np.random.Generator, n: int, kappa: int,
                             count: int) -> np.ndarray:
    """(count, kappa) array of uniform ordered distinct index tuples."""
    out = np.empty((count, kappa), dtype=np.int64)
    for r in range(count):
        out[r] = rng.choice(n, size=kappa, replace=False)
    return out


def rejection_square_bias_pairs(pair: ExchangeablePairSpec, reps: int,
                                rng: np.random.Generator) -> np.ndarray:
    """(reps, 2) square-biased pair draws by rejection against the base law.

    Proposes (pi, I, J) from the base pair law and accepts with probability
    ``(y' - y'')^2`` over its exact envelope (16 C^2 for the uniform pair,
    64 C^2 for the cycle-type pair).  Serves as an independent cross-check
    of the surgical samplers.
    """
    c = pair.scores.sup_norm
    envelope = (4.0 * c if pair.kind == "uniform" else 8.0 * c) ** 2
    if envelope <= 0.0:
        raise DegenerateModelError("degenerate score array")
    out = np.empty((reps, 2))
    got = 0
    while got < reps:
        perm = pair.model.sample(rng)
        i, j = _ordered_distinct_pair(rng, pair.model.n)
        y1, y2 = pair.pair_values(perm, i, j)
        if rng.random() * envelope <= (y1 - y2) ** 2:
            out[got, 0] = y1
            out[got, 1] = y2
            got += 1
    return out


# ---------------------------------------------------------------------------
# binary spool
# ---------------------------------------------------------------------------

def write_spool(path, arrays: dict[str, np.ndarray]) -> int:
    """Write draws as little-endian float64 records in DRAW_FIELDS order."""
    cols = [np.asarray(arrays[f], dtype="<f8") for f in DRAW_FIELDS]
    rec = np.stack(cols, axis=1)
    rec.astype("<f8").tofile(path)
    return rec.shape[0]


def read_spool(path) -> dict[str, np.ndarray]:
    flat = np.fromfile(path, dtype="<f8")
    if flat.size % len(DRAW_FIELDS):
        raise ValueError("spool file length is not a whole number of records")
    rec = flat.reshape(-1, len(DRAW_FIELDS))
    return {f: rec[:, m].copy() for m, f in enumerate(DRAW_FIELDS)}
