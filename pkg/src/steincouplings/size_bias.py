"""Size-bias couplings for sums of bounded local statistics.

For a nonnegative Y with mean ``mu``, the size-biased law ``Y^s`` satisfies
``E[Y f(Y)] = mu E[f(Y^s)]``.  This module couples ``Y^s`` to ``Y`` two ways:

* independent sums: replace one summand, chosen with probability
  proportional to its mean, by a draw from its size-biased law;
* sums ``Y = sum_a X_a`` of [0, M]-valued statistics, each a function of
  underlying variables on a local element set ``G_a``: pick a direction
  ``I`` with ``P(I = a) = E X_a / mu``, regenerate the variables on
  ``G_I`` from the ``X_I``-weighted law, and recompute the statistics that
  depend on them.  The gap satisfies ``|Y^s - Y| <= b M`` where ``b`` is
  the largest dependency neighborhood.

A :class:`DependencyStructure` records the neighborhoods ``B_a`` (indices
whose element sets meet ``G_a``), the pair set ``D`` (directions whose
conditional regeneration effects can correlate), and, for models with a
translation geometry, the disjointness radius ``rho`` and ball sizes
``V(r)`` that give the closed-form bound ingredients ``B = V(rho) M`` and
``Delta <= M |A|^{-1/2} V(rho) sqrt(V(3 rho))``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, DegenerateModelError, RejectionCapExceeded,
                     SupportCapExceeded)
from .laws import AliasTable, DiscreteLaw

__all__ = [
    "SizeBiasDraw",
    "size_bias_discrete_oracle",
    "size_bias_independent_sum",
    "bernoulli_sum_size_bias",
    "Payoff",
    "PAYOFFS",
    "LocalStatModel",
    "WindowModel",
    "PermPatternModel",
    "TorusPatternModel",
    "HypercubeMaxModel",
    "subgraph_count_model",
    "torus_full_pattern_model",
    "circular_ascent_model",
    "DependencyStructure",
    "build_dependency_structure",
    "size_bias_draw",
    "size_bias_draws",
    "DeltaProxyResult",
    "delta_proxy_estimate",
    "exact_y_pmf",
    "exact_delta_quantities",
    "directional_oracle",
    "DEFAULT_STATE_CAP",
]

DEFAULT_STATE_CAP = 2 ** 20
REJECTION_CAP = 10 ** 6


@dataclass(frozen=True)
class SizeBiasDraw:
    """One coupled draw (Y, Y^s) in a chosen direction.

    ``regenerated`` lists ``(element, new_value)`` for the substituted
    underlying variables; ``gap`` is ``|Y^s - Y|``, certified ``<= b M``.
    """

    y: float
    y_s: float
    chosen: object
    regenerated: tuple
    gap: float


def size_bias_discrete_oracle(law: DiscreteLaw) -> DiscreteLaw:
    """Exact size-biased pmf: P(Y^s = y) = y P(Y = y) / E Y."""
    return law.size_biased()


def size_bias_independent_sum(laws: list[DiscreteLaw], reps: int,
                              rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Couple Y = sum X_a with Y^s = Y - X_I + X_I^s, P(I = a) ~ E X_a."""
    if not laws:
        raise ValueError("need at least one summand law")
    means = np.array([law.mean for law in laws])
    if np.any(means < 0) or np.any([law.values.min() < 0 for law in laws]):
        raise DegenerateModelError("summands must be nonnegative")
    if means.sum() <= 0:
        raise DegenerateModelError("all summand means are zero")
    picker = AliasTable(means)
    draws = np.stack([law.sample(rng, reps) for law in laws])
    y = draws.sum(axis=0)
    picked = picker.draw(rng, reps)
    x_old = draws[picked, np.arange(reps)]
    x_new = np.empty(reps)
    biased = [law.size_biased() if law.mean > 0 else None for law in laws]
    for a, law in enumerate(biased):
        mask = picked == a
        count = int(mask.sum())
        if count:
            x_new[mask] = law.sample(rng, count)
    y_s = y - x_old + x_new
    return {"y": y, "y_s": y_s, "gap": np.abs(y_s - y), "chosen": picked}


def bernoulli_sum_size_bias(n_summands: int, p: float, reps: int,
                            rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fast path for Y = sum of n iid Bernoulli(p) indicators.

    Y is drawn from its exact binomial law; the replaced indicator comes
    from its exact conditional law given Y (P(X_I = 1 | Y = k) = k / n by
    exchangeability) and its size-biased version is the constant 1.  This
    reproduces the generic coupling's joint law without materializing the
    summands.  Gap bound 1 (B = 1).
    """
    if n_summands < 1:
        raise ValueError("need at least one summand")
    if not 0 < p < 1:
        raise DegenerateModelError("need 0 < p < 1 for a nondegenerate sum")
    y = rng.binomial(n_summands, p, size=reps).astype(float)
    x_old = (rng.random(reps) < y / n_summands).astype(float)
    y_s = y - x_old + 1.0
    chosen = rng.integers(0, n_summands, size=reps)
    return {"y": y, "y_s": y_s, "gap": np.abs(y_s - y), "chosen": chosen}


# ---------------------------------------------------------------------------
# payoffs for the sliding-window model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Payoff:
    """A [0, M]-valued window functional, vectorized over leading axes."""

    name: str
    func: callable
    cap: float
    indicator: bool

    def __call__(self, windows: np.ndarray) -> np.ndarray:
        return self.func(np.asarray(windows))


PAYOFFS = {
    "ascent": Payoff("ascent",
                     lambda w: np.all(np.diff(w, axis=-1) > 0, axis=-1)
                     .astype(float),
                     cap=1.0, indicator=True),
    "product": Payoff("product", lambda w: np.prod(w, axis=-1),
                      cap=1.0, indicator=False),
}


# ---------------------------------------------------------------------------
# local-statistic models
# ---------------------------------------------------------------------------

class LocalStatModel:
    """A sum Y = sum_a X_a of [0, M]-valued local statistics.

    Subclasses define the index set, the underlying state, the per-index
    statistic and element set, and the directional regeneration that
    rewrites the elements of ``G_a`` from the ``X_a``-weighted law.  All
    shipped models are translation invariant, so the per-direction choice
    weights are exactly uniform.
    """

    kind: str
    indices: tuple
    value_cap: float = 1.0  # indicator models; payoff models override
    identically_distributed = True

    # -- required hooks ------------------------------------------------------

    def sample_state(self, rng: np.random.Generator):
        raise NotImplementedError

    def stat(self, state, alpha) -> float:
        raise NotImplementedError

    def elements(self, alpha) -> frozenset:
        raise NotImplementedError

    def regenerate(self, state, alpha, rng: np.random.Generator):
        """Return (new_state, ((element, new_value), ...)); off-G_a kept."""
        raise NotImplementedError

    # -- optional geometry / exact values -------------------------------------

    def vertex_set(self, alpha) -> frozenset:
        """Vertex footprint used for the disjointness radius rho."""
        raise NotImplementedError

    def distance(self, alpha, beta) -> float:
        raise NotImplementedError

    has_geometry = False

    def mean_stat(self, alpha):
        """Exact E X_a when known in closed form, else None."""
        return None

    # -- derived -------------------------------------------------------------

    def total(self, state) -> float:
        return float(sum(self.stat(state, a) for a in self.indices))

    def exact_mean_total(self) -> float | None:
        """Exact E Y summed from per-index means, when those are known."""
        means = [self.mean_stat(a) for a in self.indices]
        if any(m is None for m in means):
            return None
        return float(sum(means))

    def enumerate_states(self, cap: int = DEFAULT_STATE_CAP):
        """Yield (state, probability) pairs over the full state space."""
        raise SupportCapExceeded(f"{self.kind} state space is not enumerable")

    def coupled_draws(self, structure: "DependencyStructure", reps: int,
                      rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Bulk (y, y_s, gap, chosen) arrays; default is the per-draw loop."""
        y = np.empty(reps)
        y_s = np.empty(reps)
        chosen = np.empty(reps, dtype=np.int64)
        for r in range(reps):
            d = size_bias_draw(self, structure, rng)
            y[r] = d.y
            y_s[r] = d.y_s
            chosen[r] = structure.rank[d.chosen]
        return {"y": y, "y_s": y_s, "gap": np.abs(y_s - y), "chosen": chosen}


def _rejection_regen(draw_candidate, accept_stat, cap_value: float,
                     rng: np.random.Generator):
    """Generic X-weighted regeneration: propose from the base law, accept
    with probability X / M."""
    for _ in range(REJECTION_CAP):
        cand = draw_candidate(rng)
        x = accept_stat(cand)
        if rng.random() * cap_value < x:
            return cand
    raise RejectionCapExceeded(
        "directional regeneration rejected %d proposals" % REJECTION_CAP)


class WindowModel(LocalStatModel):
    """Circular sliding m-window statistics over n iid real variables.

    ``X_a = payoff(C_a, ..., C_{a+m-1})`` (indices mod n) with payoff in
    [0, M].  ``value_law`` is "uniform" (iid uniform(0,1)) or a
    :class:`DiscreteLaw`.  Regeneration redraws the chosen window from the
    iid law by rejection against the payoff envelope.
    """

    has_geometry = True

    def __init__(self, n: int, m: int, payoff: Payoff | str,
                 value_law: DiscreteLaw | str = "uniform"):
        if not 1 <= m <= n:
            raise ConfigError("need 1 <= m <= n")
        self.kind = "Window"
        self.n = n
        self.m = m
        self.payoff = PAYOFFS[payoff] if isinstance(payoff, str) else payoff
        self.value_cap = self.payoff.cap
        self.value_law = value_law
        self.indices = tuple(range(n))
        self._windows = (np.arange(n)[:, None] + np.arange(m)[None, :]) % n

    def _sample_values(self, rng, shape):
        if self.value_law == "uniform":
            return rng.random(shape)
        return self.value_law.sample(rng, int(np.prod(shape))).reshape(shape)

    def sample_state(self, rng):
        return self._sample_values(rng, (self.n,))

    def stat(self, state, alpha) -> float:
        return float(self.payoff(state[self._windows[alpha]]))

    def total(self, state) -> float:
        return float(self.payoff(state[self._windows]).sum())

    def elements(self, alpha) -> frozenset:
        return frozenset(int(v) for v in self._windows[alpha])

    vertex_set = elements

    def distance(self, alpha, beta) -> float:
        d = abs(alpha - beta)
        return min(d, self.n - d)

    def mean_stat(self, alpha):
        if self.payoff.name == "ascent" and self.value_law == "uniform":
            return 1.0 / math.factorial(self.m)
        if self.payoff.name == "product" and self.value_law == "uniform":
            return 0.5 ** self.m
        return None

    def regenerate(self, state, alpha, rng):
        new_vals = _rejection_regen(
            lambda g: self._sample_values(g, (self.m,)),
            lambda w: float(self.payoff(w)), self.value_cap, rng)
        new_state = state.copy()
        pos = self._windows[alpha]
        new_state[pos] = new_vals
        return new_state, tuple(zip((int(v) for v in pos), new_vals))

    def enumerate_states(self, cap: int = DEFAULT_STATE_CAP):
        if self.value_law == "uniform":
            raise SupportCapExceeded("continuous window states are not enumerable")
        vals = self.value_law.values
        probs = self.value_law.probs
        if len(vals) ** self.n > cap:
            raise SupportCapExceeded("window state space exceeds cap")
        for combo in itertools.product(range(len(vals)), repeat=self.n):
            state = vals[list(combo)]
            yield state, float(np.prod(probs[list(combo)]))

    def coupled_draws(self, structure, reps, rng, chunk: int = 1 << 13):
        n, m = self.n, self.m
        nbhd = structure.neighbor_matrix()
        rel = np.array([(b - 0) % n for b in nbhd[0]])  # translation offsets
        # window positions of each neighborhood member, relative to alpha
        rel_windows = (rel[:, None] + np.arange(m)[None, :]) % n
        out = {k: np.empty(reps) for k in ("y", "y_s", "gap")}
        chosen = np.empty(reps, dtype=np.int64)
        done = 0
        while done < reps:
            mm = min(chunk, reps - done)
            states = self._sample_values(rng, (mm, n))
            y = self.payoff(states[:, self._windows]).sum(axis=1)
            alpha = structure.sample_indices(rng, mm)
            rows = np.arange(mm)[:, None, None]
            pos = (alpha[:, None, None] + rel_windows[None, :, :]) % n
            before = self.payoff(states[rows, pos]).sum(axis=1)
            new_vals = self._regen_windows(alpha, rng)
            states_mod = states.copy()
            win_pos = (alpha[:, None] + np.arange(m)[None, :]) % n
            states_mod[np.arange(mm)[:, None], win_pos] = new_vals
            after = self.payoff(states_mod[rows, pos]).sum(axis=1)
            y_s = y + (after - before)
            sl = slice(done, done + mm)
            out["y"][sl] = y
            out["y_s"][sl] = y_s
            out["gap"][sl] = np.abs(after - before)
            chosen[sl] = alpha
            done += mm
        out["chosen"] = chosen
        return out

    def _regen_windows(self, alpha: np.ndarray, rng) -> np.ndarray:
        mm = alpha.size
        vals = np.empty((mm, self.m))
        pending = np.arange(mm)
        for _ in range(REJECTION_CAP):
            cand = self._sample_values(rng, (pending.size, self.m))
            x = self.payoff(cand)
            accept = rng.random(pending.size) * self.value_cap < x
            vals[pending[accept]] = cand[accept]
            pending = pending[~accept]
            if not pending.size:
                return vals
        raise RejectionCapExceeded("window regeneration stalled")


class PermPatternModel(LocalStatModel):
    """Counts length-m segments of a uniform circular permutation whose
    values sit in the relative order of a fixed pattern tau.

    ``X_a = 1`` iff ``pi((a + tauinv(0)) % n) < ... < pi((a + tauinv(m-1)) % n)``
    with ``tauinv`` the inverse pattern (0-based).  Regeneration reorders
    the values on the window ``{a, ..., a+m-1}`` into tau's relative order,
    which is the exact X_a-weighted law; it is deterministic given the state.
    """

    has_geometry = True
    deterministic_regen = True

    def __init__(self, n: int, m: int, tau: tuple):
        if not 1 <= m <= n:
            raise ConfigError("need 1 <= m <= n")
        if sorted(tau) != list(range(m)):
            raise ConfigError("tau must be a 0-based permutation of length m")
        self.kind = "PermPattern"
        self.n = n
        self.m = m
        self.tau = tuple(int(v) for v in tau)
        tauinv = [0] * m
        for x, v in enumerate(self.tau):
            tauinv[v] = x
        self._tauinv = np.array(tauinv)
        self.indices = tuple(range(n))
        self._windows = (np.arange(n)[:, None] + np.arange(m)[None, :]) % n
        # ordered positions: values here must be increasing
        self._ordered = (np.arange(n)[:, None] + self._tauinv[None, :]) % n

    def sample_state(self, rng):
        return rng.permutation(self.n)

    def stat(self, state, alpha) -> float:
        vals = state[self._ordered[alpha]]
        return float(np.all(np.diff(vals) > 0))

    def total(self, state) -> float:
        vals = state[self._ordered]
        return float(np.all(np.diff(vals, axis=1) > 0, axis=1).sum())

    def elements(self, alpha) -> frozenset:
        return frozenset(int(v) for v in self._windows[alpha])

    vertex_set = elements

    def distance(self, alpha, beta) -> float:
        d = abs(alpha - beta)
        return min(d, self.n - d)

    def mean_stat(self, alpha):
        if self.m > self.n:
            return 0.0
        # relative orders of m distinct values are uniform
        return 1.0 / math.factorial(self.m)

    def regenerate(self, state, alpha, rng):
        new_state = np.array(state).copy()
        pos = self._windows[alpha]
        ordered_pos = self._ordered[alpha]
        new_state[ordered_pos] = np.sort(state[pos])
        changed = tuple((int(p), int(new_state[p])) for p in pos)
        return new_state, changed

    def enumerate_states(self, cap: int = DEFAULT_STATE_CAP):
        if math.factorial(self.n) > cap:
            raise SupportCapExceeded("permutation state space exceeds cap")
        prob = 1.0 / math.factorial(self.n)
        for p in itertools.permutations(range(self.n)):
            yield np.array(p), prob

    def coupled_draws(self, structure, reps, rng, chunk: int = 1 << 13):
        n, m = self.n, self.m
        nbhd = structure.neighbor_matrix()
        rel = np.array([(b - 0) % n for b in nbhd[0]])
        rel_ordered = (rel[:, None] + self._tauinv[None, :]) % n
        out = {k: np.empty(reps) for k in ("y", "y_s", "gap")}
        chosen = np.empty(reps, dtype=np.int64)
        done = 0
        while done < reps:
            mm = min(chunk, reps - done)
            states = np.argsort(rng.random((mm, n)), axis=1)
            vals = states[:, self._ordered]
            y = np.all(np.diff(vals, axis=2) > 0, axis=2).sum(axis=1).astype(float)
            alpha = structure.sample_indices(rng, mm)
            rows = np.arange(mm)[:, None, None]
            pos = (alpha[:, None, None] + rel_ordered[None, :, :]) % n
            before = np.all(np.diff(states[rows, pos], axis=2) > 0,
                            axis=2).sum(axis=1)
            states_mod = states.copy()
            win_pos = (alpha[:, None] + np.arange(m)[None, :]) % n
            ordered_pos = (alpha[:, None] + self._tauinv[None, :]) % n
            sorted_vals = np.sort(
                states[np.arange(mm)[:, None], win_pos], axis=1)
            states_mod[np.arange(mm)[:, None], ordered_pos] = sorted_vals
            after = np.all(np.diff(states_mod[rows, pos], axis=2) > 0,
                           axis=2).sum(axis=1)
            y_s = y + (after - before)
            sl = slice(done, done + mm)
            out["y"][sl] = y
            out["y_s"][sl] = y_s
            out["gap"][sl] = np.abs(after - before).astype(float)
            chosen[sl] = alpha
            done += mm
        out["chosen"] = chosen
        return out


def circular_ascent_model(n: int) -> PermPatternModel:
    """Count of circular ascents pi(a) < pi(a+1): the identity pattern, m=2."""
    return PermPatternModel(n, 2, (0, 1))


class TorusPatternModel(LocalStatModel):
    """Color-pattern occurrences on the p-dimensional n-torus.

    Vertices are Z_n^p; edges join vertices at sup-distance 1.  The cell at
    a is ``a + {0,1}^p`` together with all edges between cell vertices.
    Independent colors from a finite alphabet sit on vertices and edges;
    ``X_a`` indicates that the cell carries the target pattern (vertex
    and/or edge targets).  Regeneration overwrites the targeted elements of
    the chosen cell with the target colors — the exact conditional law
    given X_a = 1.
    """

    has_geometry = True
    deterministic_regen = True

    def __init__(self, n: int, p: int, alphabet_probs, vertex_target=None,
                 edge_target=None, kind: str = "TorusPattern"):
        if n < 3:
            raise ConfigError("need n >= 3 for distinct cell offsets")
        self.kind = kind
        self.n = n
        self.p = p
        self.probs = np.asarray(alphabet_probs, dtype=float)
        if self.probs.ndim != 1 or abs(self.probs.sum() - 1.0) > 1e-12 or \
                np.any(self.probs < 0):
            raise ConfigError("alphabet_probs must be a probability vector")
        self.n_colors = self.probs.size
        self.nv = n ** p
        offsets = list(itertools.product((0, 1), repeat=p))
        self._offsets = offsets
        # canonical edge offset pairs: componentwise min zero
        offpairs = []
        for e1, e2 in itertools.combinations(offsets, 2):
            if all(min(a, b) == 0 for a, b in zip(e1, e2)):
                offpairs.append((e1, e2))
        self._offpairs = offpairs
        self._offpair_rank = {pr: i for i, pr in enumerate(offpairs)}
        self.n_offpairs = len(offpairs)

        if vertex_target is None and edge_target is None:
            raise ConfigError("need at least one of vertex or edge targets")
        self.vertex_target = None if vertex_target is None else {
            tuple(k): int(v) for k, v in dict(vertex_target).items()}
        self.edge_target = None if edge_target is None else {
            (tuple(k[0]), tuple(k[1])): int(v)
            for k, v in dict(edge_target).items()}
        if self.vertex_target is not None and \
                set(self.vertex_target) != set(offsets):
            raise ConfigError("vertex target must cover the cell offsets")
        if self.edge_target is not None:
            want = {self._canonical_cell_pair(e1, e2)[1]
                    for e1, e2 in itertools.combinations(offsets, 2)}
            if set(self.edge_target) != want:
                raise ConfigError("edge target must cover the cell edge offsets")

        self.indices = tuple(itertools.product(range(n), repeat=p))
        self._flat = {a: i for i, a in enumerate(self.indices)}
        self._build_cells()

    def _canonical_cell_pair(self, e1, e2):
        """Base shift and canonical offset pair for the edge {e1, e2}."""
        base = tuple(min(a, b) for a, b in zip(e1, e2))
        pair = tuple(sorted((tuple(a - m for a, m in zip(e1, base)),
                             tuple(a - m for a, m in zip(e2, base)))))
        return base, pair

    def _flatten(self, coord) -> int:
        out = 0
        for c in coord:
            out = out * self.n + (c % self.n)
        return out

    def _build_cells(self):
        nv = self.nv
        a_count = len(self.indices)
        self._cell_vertices = np.empty((a_count, len(self._offsets)),
                                       dtype=np.int64)
        cell_edges = []
        for i, a in enumerate(self.indices):
            for k, e in enumerate(self._offsets):
                self._cell_vertices[i, k] = self._flatten(
                    tuple(x + y for x, y in zip(a, e)))
        edge_pairs = list(itertools.combinations(self._offsets, 2))
        self._cell_edge_base = np.empty((a_count, len(edge_pairs)),
                                        dtype=np.int64)
        self._cell_edge_opi = np.empty((a_count, len(edge_pairs)),
                                       dtype=np.int64)
        self._cell_edge_pairs = []
        for j, (e1, e2) in enumerate(edge_pairs):
            base, pair = self._canonical_cell_pair(e1, e2)
            self._cell_edge_pairs.append(pair)
            for i, a in enumerate(self.indices):
                self._cell_edge_base[i, j] = self._flatten(
                    tuple(x + y for x, y in zip(a, base)))
                self._cell_edge_opi[i, j] = self._offpair_rank[pair]
        if self.vertex_target is not None:
            self._vtarget = np.array([self.vertex_target[e]
                                      for e in self._offsets])
        if self.edge_target is not None:
            self._etarget = np.array([self.edge_target[pr]
                                      for pr in self._cell_edge_pairs])

    # -- state: (vertex_colors (nv,), edge_colors (nv, n_offpairs)) ----------

    @property
    def _color_law(self) -> DiscreteLaw:
        law = getattr(self, "_law_cache", None)
        if law is None:
            law = DiscreteLaw(np.arange(self.n_colors, dtype=float), self.probs)
            self._law_cache = law
        return law

    def sample_state(self, rng):
        law = self._color_law
        v = law.sample(rng, self.nv).astype(np.int64)
        e = law.sample(rng, self.nv * self.n_offpairs).astype(np.int64) \
            .reshape(self.nv, self.n_offpairs)
        return (v, e)

    def _match(self, state, i: int):
        v, e = state
        ok = True
        if self.vertex_target is not None:
            ok &= bool(np.all(v[self._cell_vertices[i]] == self._vtarget))
        if self.edge_target is not None:
            ok &= bool(np.all(e[self._cell_edge_base[i],
                                self._cell_edge_opi[i]] == self._etarget))
        return ok

    def stat(self, state, alpha) -> float:
        return float(self._match(state, self._flat[alpha]))

    def total(self, state) -> float:
        v, e = state
        ok = np.ones(len(self.indices), dtype=bool)
        if self.vertex_target is not None:
            ok &= np.all(v[self._cell_vertices] == self._vtarget[None, :],
                         axis=1)
        if self.edge_target is not None:
            ok &= np.all(e[self._cell_edge_base, self._cell_edge_opi]
                         == self._etarget[None, :], axis=1)
        return float(ok.sum())

    def elements(self, alpha) -> frozenset:
        i = self._flat[alpha]
        out = []
        if self.vertex_target is not None:
            out.extend(("v", int(g)) for g in self._cell_vertices[i])
        if self.edge_target is not None:
            out.extend(("e", int(b), int(o)) for b, o in
                       zip(self._cell_edge_base[i], self._cell_edge_opi[i]))
        return frozenset(out)

    def vertex_set(self, alpha) -> frozenset:
        i = self._flat[alpha]
        return frozenset(int(g) for g in self._cell_vertices[i])

    def distance(self, alpha, beta) -> float:
        return max(min((a - b) % self.n, (b - a) % self.n)
                   for a, b in zip(alpha, beta))

    def mean_stat(self, alpha):
        m = 1.0
        if self.vertex_target is not None:
            m *= float(np.prod(self.probs[self._vtarget]))
        if self.edge_target is not None:
            m *= float(np.prod(self.probs[self._etarget]))
        return m

    def regenerate(self, state, alpha, rng):
        i = self._flat[alpha]
        v, e = state
        v2, e2 = v.copy(), e.copy()
        changed = []
        if self.vertex_target is not None:
            v2[self._cell_vertices[i]] = self._vtarget
            changed.extend((("v", int(g)), int(c)) for g, c in
                           zip(self._cell_vertices[i], self._vtarget))
        if self.edge_target is not None:
            e2[self._cell_edge_base[i], self._cell_edge_opi[i]] = self._etarget
            changed.extend((("e", int(b), int(o)), int(c)) for b, o, c in
                           zip(self._cell_edge_base[i], self._cell_edge_opi[i],
                               self._etarget))
        return (v2, e2), tuple(changed)

    def _element_count(self) -> int:
        nv = self.nv if self.vertex_target is not None else 0
        ne = self.nv * self.n_offpairs if self.edge_target is not None else 0
        return nv + ne

    def enumerate_states(self, cap: int = DEFAULT_STATE_CAP):
        count = self._element_count()
        if self.n_colors ** count > cap:
            raise SupportCapExceeded("torus state space exceeds cap")
        nvert = self.nv if self.vertex_target is not None else 0
        base_v = np.zeros(self.nv, dtype=np.int64)
        base_e = np.zeros((self.nv, self.n_offpairs), dtype=np.int64)
        for combo in itertools.product(range(self.n_colors), repeat=count):
            arr = np.array(combo, dtype=np.int64)
            v = arr[:nvert] if nvert else base_v
            e = arr[nvert:].reshape(self.nv, self.n_offpairs) \
                if count > nvert else base_e
            yield (v, e), float(np.prod(self.probs[arr]))

    def coupled_draws(self, structure, reps, rng, chunk: int = 1 << 13):
        nbhd = structure.neighbor_matrix()
        out = {k: np.empty(reps) for k in ("y", "y_s", "gap")}
        chosen = np.empty(reps, dtype=np.int64)
        law = self._color_law
        ne_flat = self.nv * self.n_offpairs
        done = 0
        while done < reps:
            mm = min(chunk, reps - done)
            v = law.sample(rng, mm * self.nv).astype(np.int64) \
                .reshape(mm, self.nv)
            e = law.sample(rng, mm * ne_flat).astype(np.int64) \
                .reshape(mm, self.nv, self.n_offpairs)
            ok = np.ones((mm, len(self.indices)), dtype=bool)
            if self.vertex_target is not None:
                ok &= np.all(v[:, self._cell_vertices] == self._vtarget,
                             axis=2)
            if self.edge_target is not None:
                ok &= np.all(e[:, self._cell_edge_base, self._cell_edge_opi]
                             == self._etarget, axis=2)
            y = ok.sum(axis=1).astype(float)
            alpha = structure.sample_indices(rng, mm)
            nb = nbhd[alpha]  # (mm, b)
            before = self._local_matches(v, e, nb)
            rows = np.arange(mm)[:, None]
            v_mod, e_mod = v.copy(), e.copy()
            if self.vertex_target is not None:
                v_mod[rows, self._cell_vertices[alpha]] = self._vtarget
            if self.edge_target is not None:
                e_mod[rows, self._cell_edge_base[alpha],
                      self._cell_edge_opi[alpha]] = self._etarget
            after = self._local_matches(v_mod, e_mod, nb)
            y_s = y + (after - before)
            sl = slice(done, done + mm)
            out["y"][sl] = y
            out["y_s"][sl] = y_s
            out["gap"][sl] = np.abs(after - before).astype(float)
            chosen[sl] = alpha
            done += mm
        out["chosen"] = chosen
        return out

    def _local_matches(self, v, e, nb):
        mm = v.shape[0]
        rows = np.arange(mm)[:, None, None]
        ok = np.ones(nb.shape, dtype=bool)
        if self.vertex_target is not None:
            ok &= np.all(v[rows, self._cell_vertices[nb]] == self._vtarget,
                         axis=2)
        if self.edge_target is not None:
            ok &= np.all(e[rows, self._cell_edge_base[nb],
                           self._cell_edge_opi[nb]] == self._etarget, axis=2)
        return ok.sum(axis=1).astype(float)


def subgraph_count_model(n: int, p: int, edge_prob: float) -> TorusPatternModel:
    """Count of cells whose full edge set is present in the Bernoulli
    random subgraph of the torus: the edges-only pattern special case."""
    if not 0 < edge_prob <= 1:
        raise ConfigError("edge probability must be in (0, 1]")
    offsets = list(itertools.product((0, 1), repeat=p))
    pairs = set()
    for e1, e2 in itertools.combinations(offsets, 2):
        base = tuple(min(a, b) for a, b in zip(e1, e2))
        pairs.add(tuple(sorted((tuple(a - m for a, m in zip(e1, base)),
                                tuple(a - m for a, m in zip(e2, base))))))
    return TorusPatternModel(n, p, [1 - edge_prob, edge_prob],
                             vertex_target=None,
                             edge_target={pair: 1 for pair in pairs},
                             kind="SubgraphCount")


def torus_full_pattern_model(n: int, p: int, one_prob: float = 0.5) -> TorusPatternModel:
    """Count of cells whose every vertex and every edge carries color one:
    the full-cell pattern with a two-letter alphabet."""
    if not 0 < one_prob <= 1:
        raise ConfigError("color-one probability must be in (0, 1]")
    offsets = list(itertools.product((0, 1), repeat=p))
    pairs = set()
    for e1, e2 in itertools.combinations(offsets, 2):
        base = tuple(min(a, b) for a, b in zip(e1, e2))
        pairs.add(tuple(sorted((tuple(a - m for a, m in zip(e1, base)),
                                tuple(a - m for a, m in zip(e2, base))))))
    return TorusPatternModel(n, p, [1 - one_prob, one_prob],
                             vertex_target={off: 1 for off in offsets},
                             edge_target={pair: 1 for pair in pairs})


class HypercubeMaxModel(LocalStatModel):
    """Local-maxima count on the Hamming hypercube {0,1}^p.

    iid uniform(0,1) values on the 2^p vertices; ``X_a`` indicates that the
    value at a is >= all values at Hamming distance 1.  Regeneration redraws
    the closed neighborhood conditionally on the center being the maximum:
    p+1 fresh iid values with the largest placed at the center.
    """

    has_geometry = True

    def __init__(self, p: int):
        if p < 1:
            raise ConfigError("need p >= 1")
        self.kind = "HypercubeMax"
        self.p = p
        self.nv = 2 ** p
        self.value_cap = 1.0
        self.indices = tuple(range(self.nv))
        flips = [1 << k for k in range(p)]
        self._neighbors = np.array(
            [[a] + [a ^ f for f in flips] for a in range(self.nv)])

    def sample_state(self, rng):
        return rng.random(self.nv)

    def stat(self, state, alpha) -> float:
        nb = self._neighbors[alpha]
        return float(state[alpha] >= state[nb].max())

    def total(self, state) -> float:
        vals = state[self._neighbors]
        return float((vals[:, 0] >= vals.max(axis=1)).sum())

    def elements(self, alpha) -> frozenset:
        return frozenset(int(v) for v in self._neighbors[alpha])

    vertex_set = elements

    def distance(self, alpha, beta) -> float:
        return bin(alpha ^ beta).count("1")

    def mean_stat(self, alpha):
        # p+1 exchangeable iid values; the center is the maximum w.p. 1/(p+1)
        return 1.0 / (self.p + 1)

    def regenerate(self, state, alpha, rng):
        vals = rng.random(self.p + 1)
        k = int(np.argmax(vals))
        center = vals[k]
        others = np.delete(vals, k)
        new_state = state.copy()
        nb = self._neighbors[alpha]
        new_state[nb[0]] = center
        new_state[nb[1:]] = others
        return new_state, tuple(zip((int(v) for v in nb),
                                    [float(center)] + [float(o) for o in others]))

    def coupled_draws(self, structure, reps, rng, chunk: int = 1 << 13):
        nbhd = structure.neighbor_matrix()
        out = {k: np.empty(reps) for k in ("y", "y_s", "gap")}
        chosen = np.empty(reps, dtype=np.int64)
        p = self.p
        done = 0
        while done < reps:
            mm = min(chunk, reps - done)
            states = rng.random((mm, self.nv))
            vals = states[:, self._neighbors]
            y = (vals[:, :, 0] >= vals.max(axis=2)).sum(axis=1).astype(float)
            alpha = structure.sample_indices(rng, mm)
            nb = nbhd[alpha]  # (mm, b)
            before = self._local_stats(states, nb)
            fresh = rng.random((mm, p + 1))
            kmax = np.argmax(fresh, axis=1)
            centers = fresh[np.arange(mm), kmax]
            mask = np.arange(p + 1)[None, :] != kmax[:, None]
            others = fresh[mask].reshape(mm, p)
            states_mod = states.copy()
            target = self._neighbors[alpha]  # (mm, p+1)
            rows = np.arange(mm)[:, None]
            states_mod[rows, target] = np.concatenate(
                [centers[:, None], others], axis=1)
            after = self._local_stats(states_mod, nb)
            y_s = y + (after - before)
            sl = slice(done, done + mm)
            out["y"][sl] = y
            out["y_s"][sl] = y_s
            out["gap"][sl] = np.abs(after - before)
            chosen[sl] = alpha
            done += mm
        out["chosen"] = chosen
        return out

    def _local_stats(self, states, nb):
        mm = states.shape[0]
        rows = np.arange(mm)[:, None, None]
        vals = states[rows, self._neighbors[nb]]  # (mm, b, p+1)
        return (vals[:, :, 0] >= vals.max(axis=2)).sum(axis=1).astype(float)


# ---------------------------------------------------------------------------
# dependency structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DependencyStructure:
    """Neighborhoods, pair set, geometry, and direction weights for a model.

    ``neighborhoods`` holds the minimal B_a = {b : elements(b) meets
    elements(a)}; ``pairs`` the minimal admissible D (three-step closure of
    the neighborhood relation); geometric quantities (rho, ball sizes,
    the |A| V(3 rho) pair count) are enumerated exactly when the model has
    a distance.
    """

    indices: tuple
    neighborhoods: dict
    b: int
    pairs: frozenset
    p: np.ndarray
    p_stderr: np.ndarray | None
    rho: float | None
    v_table: dict | None
    distance_regular: bool | None
    pair_count_geometric: int | None
    rank: dict = field(repr=False)
    _alias: AliasTable = field(repr=False)

    def sample_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self._alias.draw(rng, size)

    def sample_index(self, rng: np.random.Generator):
        return self.indices[self._alias.draw(rng)]

    def neighbor_matrix(self) -> np.ndarray:
        """(|A|, b) flat neighborhood ranks; requires constant |B_a|."""
        sizes = {len(v) for v in self.neighborhoods.values()}
        if len(sizes) != 1:
            raise DegenerateModelError("neighborhood sizes are not constant")
        out = np.empty((len(self.indices), self.b), dtype=np.int64)
        for a, nb in self.neighborhoods.items():
            out[self.rank[a]] = sorted(self.rank[x] for x in nb)
        return out

    def max_p(self) -> float:
        return float(self.p.max())

    def pair_weight_sum(self) -> float:
        """sum over D of p1 p2 |B_1| |B_2| (the sharp Delta ingredient)."""
        total = 0.0
        for a1, a2 in self.pairs:
            total += (self.p[self.rank[a1]] * self.p[self.rank[a2]]
                      * len(self.neighborhoods[a1])
                      * len(self.neighborhoods[a2]))
        return total


def build_dependency_structure(model: LocalStatModel,
                               mc_reps: int = 0,
                               rng: np.random.Generator | None = None
                               ) -> DependencyStructure:
    """Enumerate neighborhoods, the minimal pair set, and the geometry.

    Direction weights are exactly uniform for identically distributed
    models; otherwise they are Monte Carlo estimates of E X_a / mu from
    ``mc_reps`` states, with standard errors recorded.
    """
    indices = tuple(model.indices)
    rank = {a: i for i, a in enumerate(indices)}
    elems = {a: frozenset(model.elements(a)) for a in indices}
    by_elem: dict = {}
    for a in indices:
        for g in elems[a]:
            by_elem.setdefault(g, []).append(a)
    neighborhoods = {}
    for a in indices:
        nb = set()
        for g in elems[a]:
            nb.update(by_elem[g])
        neighborhoods[a] = tuple(sorted(nb, key=rank.__getitem__))
    b = max(len(v) for v in neighborhoods.values())

    # minimal admissible pair set: directions a1, a2 whose neighborhoods
    # contain element-sharing members; equals the three-step closure of the
    # neighborhood relation.
    nbset = {a: set(v) for a, v in neighborhoods.items()}
    pairs = set()
    for a in indices:
        two = set()
        for b1 in nbset[a]:
            two.update(nbset[b1])
        three = set()
        for b2 in two:
            three.update(nbset[b2])
        pairs.update((a, c) for c in three)

    rho = None
    v_table = None
    regular = None
    pair_count_geo = None
    if model.has_geometry:
        vsets = {a: model.vertex_set(a) for a in indices}
        rho = 0.0
        for a1, a2 in itertools.combinations(indices, 2):
            if vsets[a1] & vsets[a2]:
                d = model.distance(a1, a2)
                if d > rho:
                    rho = d
        ball_sizes = {r: set() for r in (rho, 3 * rho)}
        for r in (rho, 3 * rho):
            for a in indices:
                size = sum(1 for c in indices if model.distance(a, c) <= r)
                ball_sizes[r].add(size)
        regular = all(len(s) == 1 for s in ball_sizes.values())
        v_table = {r: max(s) for r, s in ball_sizes.items()}
        pair_count_geo = sum(
            1 for a1 in indices for a2 in indices
            if model.distance(a1, a2) <= 3 * rho)

    if model.identically_distributed:
        p = np.full(len(indices), 1.0 / len(indices))
        p_stderr = None
    else:
        if mc_reps < 2 or rng is None:
            raise ConfigError("non-identically-distributed models need an "
                              "MC pre-pass: pass mc_reps and rng")
        sums = np.zeros(len(indices))
        sqs = np.zeros(len(indices))
        for _ in range(mc_reps):
            state = model.sample_state(rng)
            for a in indices:
                x = model.stat(state, a)
                sums[rank[a]] += x
                sqs[rank[a]] += x * x
        means = sums / mc_reps
        if means.sum() <= 0:
            raise DegenerateModelError("all directions have zero mean")
        p = means / means.sum()
        var = (sqs - mc_reps * means ** 2) / (mc_reps - 1)
        p_stderr = np.sqrt(np.maximum(var, 0.0) / mc_reps) / means.sum()

    return DependencyStructure(
        indices=indices, neighborhoods=neighborhoods, b=b,
        pairs=frozenset(pairs), p=p, p_stderr=p_stderr, rho=rho,
        v_table=v_table, distance_regular=regular,
        pair_count_geometric=pair_count_geo, rank=rank,
        _alias=AliasTable(p))


# ---------------------------------------------------------------------------
# coupled draws
# ---------------------------------------------------------------------------

def size_bias_draw(model: LocalStatModel, structure: DependencyStructure,
                   rng: np.random.Generator) -> SizeBiasDraw:
    """Reference per-draw coupling; verifies the off-neighborhood identity."""
    state = model.sample_state(rng)
    y = model.total(state)
    alpha = structure.sample_index(rng)
    new_state, regen = model.regenerate(state, alpha, rng)
    diff = 0.0
    for beta in structure.neighborhoods[alpha]:
        diff += model.stat(new_state, beta) - model.stat(state, beta)
    y_s_direct = model.total(new_state)
    if abs((y + diff) - y_s_direct) > 1e-9:
        raise AssertionError(
            "off-neighborhood statistics changed: dependency structure is wrong")
    return SizeBiasDraw(y=y, y_s=y + diff, chosen=alpha, regenerated=regen,
                        gap=abs(diff))


def size_bias_draws(model: LocalStatModel, structure: DependencyStructure,
                    reps: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Bulk coupled draws (vectorized where the model provides it)."""
    return model.coupled_draws(structure, reps, rng)


def directional_draw(model: LocalStatModel, state, alpha,
                     rng: np.random.Generator):
    """Regenerate G_alpha from the X_alpha-weighted law; rest untouched."""
    return model.regenerate(state, alpha, rng)


# ---------------------------------------------------------------------------
# Delta proxy and enumeration oracles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaProxyResult:
    """Estimate of sqrt(Var(E(Y^s - Y | state))) with inner-noise and
    jackknife corrections."""

    estimate: float
    stderr: float
    raw_estimate: float
    inner_noise_correction: float
    outer: int
    inner: int


def delta_proxy_estimate(model: LocalStatModel,
                         structure: DependencyStructure,
                         outer: int, inner: int,
                         rng: np.random.Generator) -> DeltaProxyResult:
    """Monte Carlo proxy for Delta = sqrt(Var(E(Y^s - Y | Y))).

    Outer replicates sample the state; each inner replicate samples one
    direction ``a`` from the p-weights and regenerates it, so
    ``sum_{b in B_a} (X_b^a - X_b)`` is an unbiased one-regeneration
    estimate of the conditional mean gap (only the B_a statistics can
    change).  The between-state variance is debiased by the average
    within-state noise (variance decomposition, which absorbs direction
    sampling and regeneration noise alike), and a delete-one jackknife
    over outer states corrects the square-root bias and supplies the
    standard error.
    """
    if outer < 2 or inner < 2:
        raise ValueError("need outer >= 2 and inner >= 2")
    indices = structure.indices
    h = np.empty(outer)
    v = np.zeros(outer)
    for i in range(outer):
        state = model.sample_state(rng)
        base: dict = {}

        def base_stat(beta):
            if beta not in base:
                base[beta] = model.stat(state, beta)
            return base[beta]

        picks = structure.sample_indices(rng, inner)
        g = np.empty(inner)
        for j in range(inner):
            a = indices[picks[j]]
            new_state, _ = model.regenerate(state, a, rng)
            g[j] = sum(model.stat(new_state, beta) - base_stat(beta)
                       for beta in structure.neighborhoods[a])
        h[i] = g.mean()
        v[i] = g.var(ddof=1)

    def corrected_var(hh, vv):
        s2 = hh.var(ddof=1)
        return s2 - vv.mean() / inner

    raw = math.sqrt(max(0.0, corrected_var(h, v)))
    # delete-one jackknife on the square root
    sum_h = h.sum()
    sum_h2 = (h * h).sum()
    sum_v = v.sum()
    theta_i = np.empty(outer)
    m = outer - 1
    for i in range(outer):
        sh = sum_h - h[i]
        sh2 = sum_h2 - h[i] * h[i]
        s2 = (sh2 - sh * sh / m) / (m - 1)
        corr = s2 - (sum_v - v[i]) / m / inner
        theta_i[i] = math.sqrt(max(0.0, corr))
    theta_bar = theta_i.mean()
    estimate = outer * raw - (outer - 1) * theta_bar
    stderr = math.sqrt((outer - 1) / outer * ((theta_i - theta_bar) ** 2).sum())
    return DeltaProxyResult(estimate=estimate, stderr=stderr, raw_estimate=raw,
                            inner_noise_correction=float(v.mean() / inner),
                            outer=outer, inner=inner)


def exact_y_pmf(model: LocalStatModel,
                cap: int = DEFAULT_STATE_CAP) -> DiscreteLaw:
    """Exact pmf of Y by state enumeration (enumerable models only)."""
    atoms: dict[float, float] = {}
    for state, prob in model.enumerate_states(cap=cap):
        y = round(model.total(state), 12)
        atoms[y] = atoms.get(y, 0.0) + prob
    values = np.array(sorted(atoms))
    probs = np.array([atoms[v] for v in values])
    return DiscreteLaw(values, probs)


def exact_delta_quantities(model: LocalStatModel,
                           structure: DependencyStructure,
                           cap: int = DEFAULT_STATE_CAP) -> dict[str, float]:
    """Exact Delta quantities for enumerable, deterministic-regeneration
    models: the proxy sqrt(Var(E(Y^s-Y | state))) and the conditional-on-Y
    Delta = sqrt(Var(E(Y^s-Y | Y)))."""
    if not getattr(model, "deterministic_regen", False):
        raise SupportCapExceeded(
            "exact Delta needs deterministic directional regeneration")
    indices = structure.indices
    rng = np.random.default_rng(0)  # regeneration ignores it
    total_mean = 0.0
    states = []
    for state, prob in model.enumerate_states(cap=cap):
        h = 0.0
        for k, a in enumerate(indices):
            new_state, _ = model.regenerate(state, a, rng)
            local = 0.0
            for beta in structure.neighborhoods[a]:
                local += model.stat(new_state, beta) - model.stat(state, beta)
            h += structure.p[k] * local
        y = round(model.total(state), 12)
        states.append((y, h, prob))
        total_mean += prob * h
    var_state = sum(prob * (h - total_mean) ** 2 for _, h, prob in states)
    by_y: dict[float, list[float]] = {}
    for y, h, prob in states:
        acc = by_y.setdefault(y, [0.0, 0.0])
        acc[0] += prob
        acc[1] += prob * h
    var_y = sum(py * (hy / py - total_mean) ** 2
                for py, hy in by_y.values())
    return {"delta_proxy": math.sqrt(max(0.0, var_state)),
            "delta": math.sqrt(max(0.0, var_y)),
            "mean_gap": total_mean}


def directional_oracle(model: LocalStatModel, alpha,
                       cap: int = DEFAULT_STATE_CAP) -> dict[tuple, float]:
    """Exact law of the statistic vector under the direction-alpha biased
    state law dP^a = x_a dP / E x_a, keyed by the rounded vector."""
    atoms: dict[tuple, float] = {}
    total = 0.0
    for state, prob in model.enumerate_states(cap=cap):
        x = model.stat(state, alpha)
        if x <= 0.0:
            continue
        key = tuple(round(model.stat(state, b), 12) for b in model.indices)
        atoms[key] = atoms.get(key, 0.0) + prob * x
        total += prob * x
    if total <= 0.0:
        raise DegenerateModelError("direction has zero mean statistic")
    return {k: v / total for k, v in atoms.items()}
