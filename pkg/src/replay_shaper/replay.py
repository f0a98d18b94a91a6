"""Replay buffer statistics and replay probability functions.

The buffer is kept in sufficient-statistic form: per state-action visit
counts, running reward moments, the set of distinct rewards seen and, per
reward, the set of distinct next states.  That is all the
variance-prioritized scheme needs, and sampling from it does not require the
transition list.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal, Mapping

import numpy as np

from .mdp import TabularMdp, min_reward_support, reward_variance, sample_step

Key = tuple[int, int, int, float]
SchemeKind = Literal["variance_prioritized", "uniform", "none"]
SCHEME_KINDS = ("variance_prioritized", "uniform", "none")


class EmptyBufferError(ValueError):
    pass


class ZeroMassError(ValueError):
    pass


def log_softmin(rewards: Iterable[float], beta: float) -> list[float]:
    """Normalized ``exp(-beta * r)`` weights, computed with max-subtraction."""
    rewards = list(rewards)
    logits = [-beta * r for r in rewards]
    top = max(logits)
    ex = [math.exp(x - top) for x in logits]
    z = math.fsum(ex)
    return [x / z for x in ex]


# ---------------------------------------------------------------------------
# Weight functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightFunction:
    """A replay probability table over ``(s, a, s', r)`` tuples.

    Entries with zero mass are not stored.  ``provenance`` is one of
    ``empirical``, ``limiting`` or ``custom``.
    """

    table: Mapping[Key, float]
    provenance: str = "custom"

    def __post_init__(self):
        clean = {}
        for (s, a, s2, r), m in self.table.items():
            if m < 0 or not math.isfinite(m):
                raise ValueError(f"invalid mass {m} at {(s, a, s2, r)}")
            if m > 0:
                clean[(int(s), int(a), int(s2), float(r))] = float(m)
        object.__setattr__(self, "table", dict(sorted(clean.items())))

    @classmethod
    def zero(cls, provenance: str = "custom") -> "WeightFunction":
        return cls({}, provenance)

    def __getitem__(self, key: Key) -> float:
        return self.table.get(key, 0.0)

    def __len__(self) -> int:
        return len(self.table)

    def total(self) -> float:
        return math.fsum(self.table.values())

    def pair_mass(self, s: int, a: int) -> float:
        return math.fsum(m for (s0, a0, _, _), m in self.table.items() if (s0, a0) == (s, a))

    def pair_table(self, s: int, a: int) -> dict[tuple[int, float], float]:
        return {(s2, r): m for (s0, a0, s2, r), m in self.table.items() if (s0, a0) == (s, a)}

    def marginals(self, shape: tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape)
        for (s, a, _, _), m in self.table.items():
            out[s, a] += m
        return out

    def normalized(self) -> "WeightFunction":
        z = self.total()
        if z <= 0:
            return self
        return WeightFunction({k: m / z for k, m in self.table.items()}, self.provenance)

    @cached_property
    def _sampling_arrays(self):
        keys = list(self.table)
        cum = np.cumsum([self.table[k] for k in keys])
        return keys, cum

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "entries": [[s, a, s2, r, m] for (s, a, s2, r), m in self.table.items()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "WeightFunction":
        return cls({(s, a, s2, r): m for s, a, s2, r, m in d["entries"]}, d.get("provenance", "custom"))

    @classmethod
    def from_json(cls, text: str) -> "WeightFunction":
        return cls.from_dict(json.loads(text))


def weight_distance(w1: WeightFunction, w2: WeightFunction) -> float:
    """Max absolute difference over the union of supports."""
    keys = set(w1.table) | set(w2.table)
    return max((abs(w1[k] - w2[k]) for k in keys), default=0.0)


def sample_replay(weights: WeightFunction, rng: np.random.Generator) -> Key:
    """Categorical draw of one ``(s, a, s', r)`` tuple."""
    if not weights.table:
        raise ZeroMassError("cannot sample from a zero weight function")
    keys, cum = weights._sampling_arrays
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return keys[min(i, len(keys) - 1)]


# ---------------------------------------------------------------------------
# Buffer statistics
# ---------------------------------------------------------------------------


@dataclass
class SchemeConfig:
    kind: SchemeKind = "variance_prioritized"
    beta: float = 5.0
    zero_variance_fallback: bool = True

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown replay scheme {self.kind!r}")
        if not math.isfinite(self.beta):
            raise ValueError("beta must be finite")


class BufferStats:
    """Sufficient statistics of all real transitions stored so far."""

    def __init__(self, num_states: int, num_actions: int):
        self.num_states = num_states
        self.num_actions = num_actions
        n_pairs = num_states * num_actions
        self.n = [0] * n_pairs
        self.reward_sum = [0.0] * n_pairs
        self.reward_sqsum = [0.0] * n_pairs
        self._mean = [0.0] * n_pairs
        self._m2 = [0.0] * n_pairs
        self.var = np.zeros(n_pairs)
        self.counts: dict[Key, int] = {}
        # pair -> reward -> list of distinct next states, in first-seen order
        self.next_states: list[dict[float, list[int]]] = [{} for _ in range(n_pairs)]
        self.distinct: list[Key] = []
        self._pair_keys: list[list[Key]] = [[] for _ in range(n_pairs)]
        self._var_cum = None
        self._n_cum = None
        self._softmin_cache: dict[tuple[int, float], tuple[list[float], list[float]]] = {}

    # ---------------------------------------------------------------- updates
    def record(self, s: int, a: int, r: float, s2: int) -> "BufferStats":
        p = s * self.num_actions + a
        r = float(r)
        n = self.n[p] + 1
        self.n[p] = n
        self.reward_sum[p] += r
        self.reward_sqsum[p] += r * r
        # Welford: constant reward streams keep m2 exactly zero
        delta = r - self._mean[p]
        self._mean[p] += delta / n
        self._m2[p] += delta * (r - self._mean[p])
        new_var = self._m2[p] / n if n > 1 else 0.0
        if new_var < 0.0:
            new_var = 0.0
        if new_var != self.var[p]:
            self.var[p] = new_var
            self._var_cum = None
        self._n_cum = None

        key = (s, a, s2, r)
        c = self.counts.get(key)
        if c is None:
            self.counts[key] = 1
            self.distinct.append(key)
            self._pair_keys[p].append(key)
            by_r = self.next_states[p]
            if r not in by_r:
                by_r[r] = [s2]
                for k in [k for k in self._softmin_cache if k[0] == p]:
                    del self._softmin_cache[k]
            else:
                by_r[r].append(s2)
        else:
            self.counts[key] = c + 1
        return self

    # ---------------------------------------------------------------- queries
    @property
    def total(self) -> int:
        return sum(self.n)

    def visit_count(self, s: int, a: int) -> int:
        return self.n[s * self.num_actions + a]

    def unique_rewards(self, s: int, a: int) -> set[float]:
        return set(self.next_states[s * self.num_actions + a])

    def next_state_set(self, s: int, a: int, r: float) -> set[int]:
        return set(self.next_states[s * self.num_actions + a].get(float(r), ()))

    def empirical_variance(self, s: int, a: int) -> float:
        return float(self.var[s * self.num_actions + a])

    def variances(self) -> np.ndarray:
        return self.var.reshape(self.num_states, self.num_actions).copy()

    # --------------------------------------------------------------- sampling
    def _softmin(self, p: int, beta: float) -> tuple[list[float], list[float]]:
        hit = self._softmin_cache.get((p, beta))
        if hit is None:
            rewards = list(self.next_states[p])
            cum = np.cumsum(log_softmin(rewards, beta)).tolist()
            hit = (rewards, cum)
            self._softmin_cache[(p, beta)] = hit
        return hit

    def sample(self, config: SchemeConfig, rng: np.random.Generator) -> Key:
        """Draw one replay tuple from the distribution :func:`replay_weights` describes.

        The draw is hierarchical (pair, then reward, then next state), so no
        full weight table is materialized.
        """
        if not self.distinct:
            raise EmptyBufferError("replay requested from an empty buffer")
        A = self.num_actions
        if config.kind == "variance_prioritized":
            if self._var_cum is None:
                self._var_cum = np.cumsum(self.var)
            cum = self._var_cum
            if cum[-1] <= 0.0:
                if not config.zero_variance_fallback:
                    raise ZeroMassError("all empirical variances are zero")
                return self.distinct[int(rng.random() * len(self.distinct))]
            p = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            p = min(p, len(cum) - 1)
            rewards, rcum = self._softmin(p, config.beta)
            j = bisect.bisect_right(rcum, rng.random() * rcum[-1])
            r = rewards[min(j, len(rewards) - 1)]
            nxt = self.next_states[p][r]
            s2 = nxt[int(rng.random() * len(nxt))]
            return (p // A, p % A, s2, r)
        if config.kind == "uniform":
            if self._n_cum is None:
                self._n_cum = np.cumsum(self.n)
            cum = self._n_cum
            p = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            p = min(p, len(cum) - 1)
            keys = self._pair_keys[p]
            u = rng.random() * self.n[p]
            acc = 0
            for k in keys:
                acc += self.counts[k]
                if u < acc:
                    return k
            return keys[-1]
        raise ZeroMassError("replay scheme 'none' has no mass")


def record_transition(stats: BufferStats, s: int, a: int, r: float, s2: int) -> BufferStats:
    return stats.record(s, a, r, s2)


def empirical_variance(stats: BufferStats, s: int, a: int) -> float:
    """Population variance of the rewards stored for ``(s, a)``; 0 if fewer than two."""
    return stats.empirical_variance(s, a)


def replay_weights(stats: BufferStats, config: SchemeConfig) -> WeightFunction:
    """Materialize the current replay probability table."""
    if not stats.distinct:
        raise EmptyBufferError("no transitions recorded")
    A = stats.num_actions
    if config.kind == "none":
        return WeightFunction.zero("empirical")
    if config.kind == "uniform":
        n = stats.total
        return WeightFunction({k: c / n for k, c in stats.counts.items()}, "empirical")
    var_total = math.fsum(stats.var)
    if var_total <= 0.0:
        if not config.zero_variance_fallback:
            return WeightFunction.zero("empirical")
        m = 1.0 / len(stats.distinct)
        return WeightFunction({k: m for k in stats.distinct}, "empirical")
    table = {}
    for p, v in enumerate(stats.var):
        if v <= 0.0:
            continue
        share = v / var_total
        by_r = stats.next_states[p]
        rewards = list(by_r)
        for r, pr in zip(rewards, log_softmin(rewards, config.beta)):
            nxt = by_r[r]
            for s2 in nxt:
                table[(p // A, p % A, s2, r)] = share * pr / len(nxt)
    return WeightFunction(table, "empirical")


def limiting_weights(
    mdp: TabularMdp, beta: float, zero_variance_fallback: bool = True
) -> WeightFunction:
    """Large-sample limit of the variance-prioritized weights for ``mdp``.

    Uses the true reward variances, the true per-pair reward supports and,
    for each reward, the true set of next states reachable with it.
    """
    var = {
        (s, a): reward_variance(mdp, s, a)
        for s in mdp.nonterminal_states
        for a in range(mdp.num_actions)
    }
    var_total = math.fsum(var.values())
    if var_total <= 0.0:
        if not zero_variance_fallback:
            return WeightFunction.zero("limiting")
        keys = [
            (s, a, e.next_state, e.reward)
            for (s, a) in var
            for e in mdp.entries(s, a)
        ]
        return WeightFunction({k: 1.0 / len(keys) for k in keys}, "limiting")
    table = {}
    for (s, a), v in var.items():
        if v <= 0.0:
            continue
        support: dict[float, list[int]] = {}
        for e in mdp.entries(s, a):
            support.setdefault(e.reward, []).append(e.next_state)
        rewards = sorted(support)
        for r, pr in zip(rewards, log_softmin(rewards, beta)):
            for s2 in support[r]:
                table[(s, a, s2, r)] = (v / var_total) * pr / len(support[r])
    return WeightFunction(table, "limiting")


def concentrated_weights(mdp: TabularMdp, s: int, a: int) -> WeightFunction:
    """All mass on ``(s, a)`` at its minimal reward, uniform over the states reachable with it."""
    states, r_lo = min_reward_support(mdp, s, a)
    return WeightFunction({(s, a, s2, r_lo): 1.0 / len(states) for s2 in states}, "limiting")


def collect_uniform(
    mdp: TabularMdp,
    n_steps: int,
    rng: np.random.Generator,
    stats: BufferStats | None = None,
    max_episode_steps: int | None = None,
) -> BufferStats:
    """Record ``n_steps`` real transitions of a uniformly random policy.

    Episodes start in a uniformly random non-terminal state and restart on
    reaching a terminal state or the step cap.
    """
    stats = stats if stats is not None else BufferStats(mdp.num_states, mdp.num_actions)
    starts = mdp.nonterminal_states
    cap = max_episode_steps or 10 * mdp.num_states
    s = starts[int(rng.integers(len(starts)))]
    k = 0
    for _ in range(n_steps):
        a = int(rng.integers(mdp.num_actions))
        s2, r = sample_step(mdp, rng, s, a)
        stats.record(s, a, r, s2)
        k += 1
        if mdp.is_terminal(s2) or k >= cap:
            s = starts[int(rng.integers(len(starts)))]
            k = 0
        else:
            s = s2
    return stats
