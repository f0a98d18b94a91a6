"""The replay-biased transition/reward model and its Bellman-style operator.

Mixing real transitions (probability ``1 - v``) with replayed ones drawn
from a weight function ``w`` changes the next-state and reward
distributions the learner effectively sees.  :func:`effective_model`
computes those distributions; :func:`apply_h` is the corresponding
max-norm contraction whose fixed point the learner converges to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .mdp import TabularMdp
from .replay import WeightFunction


class ZeroDenominatorError(ZeroDivisionError):
    pass


@dataclass(frozen=True, eq=False)
class EffectiveModel:
    """Biased tables ``p_tilde[s, a, s']`` and ``r_tilde[s, a, s']``.

    ``r_tilde`` is 0 wherever ``p_tilde`` is 0.  Terminal rows are all zero
    and the operator maps them to 0.
    """

    p_tilde: np.ndarray
    r_tilde: np.ndarray
    v: float
    gamma: float
    terminal: np.ndarray
    weights: WeightFunction | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.p_tilde.shape[:2]

    @property
    def expected_reward(self) -> np.ndarray:
        return np.einsum("ijk,ijk->ij", self.p_tilde, self.r_tilde)

    def to_dict(self) -> dict:
        return {
            "v": self.v,
            "gamma": self.gamma,
            "terminal": np.flatnonzero(self.terminal).tolist(),
            "p_tilde": self.p_tilde.tolist(),
            "r_tilde": self.r_tilde.tolist(),
        }


def _pair_denominator(mdp: TabularMdp, w: WeightFunction, v: float, s: int, a: int,
                      visit_weight: float = 1.0) -> float:
    real = sum(e.prob for e in mdp.entries(s, a))
    return (1.0 - v) * visit_weight * real + v * w.pair_mass(s, a)


def phi_pair(mdp: TabularMdp, w: WeightFunction, v: float, s: int, a: int, s2: int, r: float) -> tuple[float, float]:
    """Real-sample and replay-sample shares of ``(s', r)`` at ``(s, a)``."""
    mdp._require_nonterminal(s)
    den = _pair_denominator(mdp, w, v, s, a)
    if den <= 0.0:
        raise ZeroDenominatorError(f"no real or replay mass at ({s}, {a})")
    q = sum(e.prob for e in mdp.entries(s, a) if e.next_state == s2 and e.reward == r)
    return q / den, w[(s, a, s2, float(r))] / den


def effective_model(
    mdp: TabularMdp,
    w: WeightFunction,
    v: float,
    visitation: np.ndarray | None = None,
) -> EffectiveModel:
    """Biased model induced by replaying from ``w`` with probability ``v``.

    ``visitation`` optionally rescales the real-sample branch of each pair,
    giving ``[(1-v) d q + v w] / [(1-v) d + v W]``.  Left as ``None`` every
    pair gets weight 1, the unweighted form.
    """
    if not 0.0 <= v < 1.0:
        raise ValueError(f"replay probability must lie in [0, 1), got {v}")
    S, A = mdp.shape
    P = np.zeros((S, A, S))
    PR = np.zeros((S, A, S))
    by_pair: dict[tuple[int, int], list[tuple[int, float, float]]] = {}
    for (s, a, s2, r), m in w.table.items():
        by_pair.setdefault((s, a), []).append((s2, r, m))
    for s in mdp.nonterminal_states:
        for a in range(A):
            d = 1.0 if visitation is None else float(visitation[s, a])
            replay = by_pair.get((s, a), [])
            W = math.fsum(m for _, _, m in replay)
            den = (1.0 - v) * d + v * W
            if den <= 0.0:
                raise ZeroDenominatorError(f"no real or replay mass at ({s}, {a})")
            for e in mdp.entries(s, a):
                x = (1.0 - v) * d * e.prob / den
                P[s, a, e.next_state] += x
                PR[s, a, e.next_state] += x * e.reward
            if v > 0.0:
                for s2, r, m in replay:
                    x = v * m / den
                    P[s, a, s2] += x
                    PR[s, a, s2] += x * r
    R = np.divide(PR, P, out=np.zeros_like(PR), where=P > 0)
    terminal = np.zeros(S, dtype=bool)
    terminal[list(mdp.terminal_states)] = True
    return EffectiveModel(P, R, float(v), mdp.gamma, terminal, w)


def bellman_model(mdp: TabularMdp) -> EffectiveModel:
    """The unbiased model (no replay)."""
    return effective_model(mdp, WeightFunction.zero(), 0.0)


def state_values(model: EffectiveModel, Q: np.ndarray) -> np.ndarray:
    V = Q.max(axis=1)
    V[model.terminal] = 0.0
    return V


def apply_h(model: EffectiveModel, Q: np.ndarray) -> np.ndarray:
    """One synchronous sweep ``sum_s' p~ (R~ + gamma max_b Q(s', b))``."""
    V = state_values(model, np.asarray(Q, dtype=float))
    HQ = model.expected_reward + model.gamma * (model.p_tilde @ V)
    HQ[model.terminal] = 0.0
    return HQ


def fixed_point(model: EffectiveModel, tol: float = 1e-10, max_iter: int = 10**6) -> tuple[np.ndarray, int]:
    """Banach iteration from ``Q = 0`` until the error bound drops below ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = model.gamma
    stop = tol * (1.0 - g) / g
    ER = model.expected_reward
    P = model.p_tilde
    term = model.terminal
    Q = np.zeros(model.shape)
    for k in range(1, max_iter + 1):
        V = Q.max(axis=1)
        V[term] = 0.0
        Q_new = ER + g * (P @ V)
        Q_new[term] = 0.0
        if np.max(np.abs(Q_new - Q)) < stop:
            return Q_new, k
        Q = Q_new
    raise RuntimeError(f"fixed-point iteration did not converge in {max_iter} sweeps")


def _random_q(rng: np.random.Generator, shape, bound: float, gamma: float) -> np.ndarray:
    lim = bound / (1.0 - gamma)
    return rng.uniform(-lim, lim, size=shape)


def contraction_check(model: EffectiveModel, rng: np.random.Generator, trials: int = 1000,
                      bound: float = 100.0) -> float:
    """Largest observed ``||HQ - HQ'|| / ||Q - Q'||`` over random pairs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    worst = 0.0
    for _ in range(trials):
        Q1 = _random_q(rng, model.shape, bound, model.gamma)
        Q2 = _random_q(rng, model.shape, bound, model.gamma)
        den = np.max(np.abs(Q1 - Q2))
        if den == 0.0:
            continue
        ratio = np.max(np.abs(apply_h(model, Q1) - apply_h(model, Q2))) / den
        worst = max(worst, float(ratio))
    return worst


def mapping_distance(m1: EffectiveModel, m2: EffectiveModel, rng: np.random.Generator,
                     trials: int = 100, bound: float = 100.0) -> float:
    """Largest ``||H1 Q - H2 Q||`` over random ``Q``."""
    if m1.p_tilde.shape != m2.p_tilde.shape:
        raise ValueError(f"shape mismatch {m1.p_tilde.shape} vs {m2.p_tilde.shape}")
    worst = 0.0
    for _ in range(trials):
        Q = _random_q(rng, m1.shape, bound, m1.gamma)
        worst = max(worst, float(np.max(np.abs(apply_h(m1, Q) - apply_h(m2, Q)))))
    return worst


class NoiseStats(NamedTuple):
    mean: float
    std_error: float
    second_moment: float
    bound: float


def noise_term_check(
    mdp: TabularMdp,
    w: WeightFunction,
    v: float,
    Q: np.ndarray,
    rng: np.random.Generator,
    n_samples: int,
    s: int,
    a: int,
) -> NoiseStats:
    """Monte Carlo moments of the update noise at ``(s, a)``.

    A sample is a replay draw from ``w(s, a, ., .)`` (renormalized) with
    probability ``v W / (v W + 1 - v)``, where ``W`` is the replay mass of the
    pair, and a real draw from ``q(., . | s, a)`` otherwise.  The noise is
    ``r + gamma max_b Q(s', b) - (HQ)(s, a)``.
    """
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples")
    Q = np.asarray(Q, dtype=float)
    model = effective_model(mdp, w, v)
    V = state_values(model, Q)
    target = float(apply_h(model, Q)[s, a])

    real = mdp.entries(s, a)
    real_s = np.array([e.next_state for e in real])
    real_r = np.array([e.reward for e in real])
    real_cum = np.cumsum([e.prob for e in real])
    pair = w.pair_table(s, a)
    W = math.fsum(pair.values())
    p_replay = v * W / (v * W + (1.0 - v)) if W > 0 else 0.0

    u_branch = rng.random(n_samples)
    u_pick = rng.random(n_samples)
    idx = np.minimum(np.searchsorted(real_cum, u_pick * real_cum[-1], side="right"), len(real) - 1)
    nxt = real_s[idx]
    rew = real_r[idx]
    if p_replay > 0:
        keys = list(pair)
        rep_s = np.array([k[0] for k in keys])
        rep_r = np.array([k[1] for k in keys])
        rep_cum = np.cumsum([pair[k] for k in keys])
        ridx = np.minimum(np.searchsorted(rep_cum, u_pick * rep_cum[-1], side="right"), len(keys) - 1)
        use = u_branch < p_replay
        nxt = np.where(use, rep_s[ridx], nxt)
        rew = np.where(use, rep_r[ridx], rew)

    e = rew + mdp.gamma * V[nxt] - target
    M = max(abs(mdp.r_min), abs(mdp.r_max))
    K = 4.0 * M**2 + 2.0 * mdp.gamma**2
    return NoiseStats(
        mean=float(e.mean()),
        std_error=float(e.std(ddof=1) / math.sqrt(n_samples)),
        second_moment=float(np.mean(e * e)),
        bound=float(K * (1.0 + np.max(np.abs(Q)) ** 2)),
    )
