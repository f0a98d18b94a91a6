"""Safety diagnostics: replay-scheme ordering checks, action-switch bounds, risk metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .mdp import TabularMdp, min_reward_support, reward_variances, sample_step
from .operators import effective_model, fixed_point
from .replay import WeightFunction

FIXED_POINT_TOL = 1e-12


# ---------------------------------------------------------------------------
# Replay-scheme ordering
# ---------------------------------------------------------------------------


@dataclass
class Assumption1Report:
    variance_order_ok: bool
    reward_order_ok: bool
    variance_violations: list[tuple] = field(default_factory=list)
    reward_violations: list[tuple] = field(default_factory=list)
    top_pair: tuple[int, int] | None = None
    concentration_gap: float | None = None

    @property
    def ok(self) -> bool:
        return self.variance_order_ok and self.reward_order_ok

    def to_dict(self) -> dict:
        return asdict(self)


def check_assumption1(w: WeightFunction, mdp: TabularMdp, max_violations: int = 20) -> Assumption1Report:
    """Check that replay mass orders pairs by reward variance and rewards by value.

    Pair ordering compares the ``(s, a)`` marginals of ``w`` over all pairs with
    distinct true variances.  Reward ordering compares, inside every pair that
    has replay mass, the total weight ``sum_s' w(s, a, s', r)`` of each reward
    in the pair's true support.  The concentration gap for the highest-variance
    pair is reported but not judged.
    """
    var = reward_variances(mdp)
    marg = w.marginals(mdp.shape)
    pairs = [(s, a) for s in mdp.nonterminal_states for a in range(mdp.num_actions)]
    pairs.sort(key=lambda p: var[p])
    var_bad = []
    # strict order along sorted variances, checked between consecutive variance levels
    levels: list[list[tuple[int, int]]] = []
    for p in pairs:
        if levels and var[levels[-1][0]] == var[p]:
            levels[-1].append(p)
        else:
            levels.append([p])
    for lo, hi in zip(levels, levels[1:]):
        lo_max = max(lo, key=lambda p: marg[p])
        hi_min = min(hi, key=lambda p: marg[p])
        if not marg[hi_min] > marg[lo_max]:
            var_bad.append((hi_min, lo_max, float(marg[hi_min]), float(marg[lo_max])))
            if len(var_bad) >= max_violations:
                break

    rew_bad = []
    for s, a in pairs:
        if marg[s, a] <= 0:
            continue
        by_r: dict[float, float] = {r: 0.0 for r in mdp.reward_support(s, a)}
        for (s2, r), m in w.pair_table(s, a).items():
            by_r[r] = by_r.get(r, 0.0) + m
        rewards = sorted(by_r)
        for r1, r2 in zip(rewards, rewards[1:]):
            if not by_r[r1] > by_r[r2]:
                rew_bad.append(((s, a), r1, r2, by_r[r1], by_r[r2]))
        if len(rew_bad) >= max_violations:
            break

    top = max(pairs, key=lambda p: (var[p], -p[0], -p[1])) if pairs else None
    gap = None
    if top is not None and var[top] > 0:
        states, r_lo = min_reward_support(mdp, *top)
        gap = max(abs(w[(top[0], top[1], s2, r_lo)] - 1.0 / len(states)) for s2 in states)
    return Assumption1Report(not var_bad, not rew_bad, var_bad, rew_bad, top, gap)


# ---------------------------------------------------------------------------
# Action switch under concentrated replay
# ---------------------------------------------------------------------------


@dataclass
class SwitchReport:
    state: int
    baseline_action: int
    candidate_action: int
    lhs_gap: float
    rhs_bound: float
    reward_term: float
    successor_term: float
    replay_term: float
    predicted_switch: bool
    actual_switch: bool
    q_baseline: list[float]
    q_replay: list[float]

    def to_dict(self) -> dict:
        return asdict(self)


def _max_q(Q: np.ndarray, mdp: TabularMdp) -> np.ndarray:
    V = Q.max(axis=1)
    V[list(mdp.terminal_states)] = 0.0
    return V


def theorem2_report(
    mdp: TabularMdp,
    v: float,
    w_limit: WeightFunction,
    s_i: int,
    a_i: int,
    tol: float = FIXED_POINT_TOL,
) -> SwitchReport:
    """Evaluate the predicted and actual action switch at ``s_i``.

    The right-hand side does not depend on the candidate action, so the
    reported candidate is the runner-up action of the no-replay optimum.
    """
    Q0, _ = fixed_point(effective_model(mdp, WeightFunction.zero(), 0.0), tol)
    row = Q0[s_i]
    order = np.argsort(-row, kind="stable")
    if order[0] != a_i or (len(row) > 1 and row[order[1]] >= row[a_i]):
        raise ValueError(f"action {a_i} is not the unique no-replay optimum at state {s_i}")
    Qv, _ = fixed_point(effective_model(mdp, w_limit, v), tol)

    P = mdp.transition_matrix()[s_i, a_i]
    R = mdp.expected_reward()[s_i, a_i]
    S_lo, r_lo = min_reward_support(mdp, s_i, a_i)
    V0 = _max_q(Q0, mdp)
    Vv = _max_q(Qv, mdp)
    reward_term = v * (R - r_lo)
    successor_term = mdp.gamma * float(P @ (V0 - Vv))
    replay_term = v * mdp.gamma * (float(P @ Vv) - sum(Vv[s2] for s2 in S_lo) / len(S_lo))
    rhs = reward_term + successor_term + replay_term

    b = int(order[1]) if len(row) > 1 else a_i
    lhs = float(row[a_i] - row[b])
    actual = int(np.argmax(Qv[s_i])) != a_i
    return SwitchReport(
        state=s_i,
        baseline_action=a_i,
        candidate_action=b,
        lhs_gap=lhs,
        rhs_bound=float(rhs),
        reward_term=float(reward_term),
        successor_term=successor_term,
        replay_term=float(replay_term),
        predicted_switch=bool(b != a_i and lhs < rhs),
        actual_switch=bool(actual),
        q_baseline=row.tolist(),
        q_replay=Qv[s_i].tolist(),
    )


def limit_q_closed_form(mdp: TabularMdp, v: float, s_i: int, a_i: int, Q: np.ndarray) -> float:
    """Value of ``Q(s_i, a_i)`` under fully concentrated replay on ``(s_i, a_i)``.

    ``(1-v) (R + gamma E_p[max Q]) + v (r_lo + gamma mean_{S_lo} max Q)`` where
    ``r_lo`` is the pair's smallest reward and ``S_lo`` the states reachable with it.
    """
    V = _max_q(np.asarray(Q, dtype=float), mdp)
    P = mdp.transition_matrix()[s_i, a_i]
    R = mdp.expected_reward()[s_i, a_i]
    S_lo, r_lo = min_reward_support(mdp, s_i, a_i)
    replayed = r_lo + mdp.gamma * sum(V[s2] for s2 in S_lo) / len(S_lo)
    return (1.0 - v) * (R + mdp.gamma * float(P @ V)) + v * replayed


# ---------------------------------------------------------------------------
# Policy risk
# ---------------------------------------------------------------------------


@dataclass
class RiskProfile:
    episodes: int
    expected_return: float
    return_std: float
    risky_traversal_prob: float
    catastrophe_prob: float
    goal_prob: float
    mean_steps: float
    by_start: dict[int, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["by_start"] = {str(k): v for k, v in self.by_start.items()}
        return d


def policy_risk_profile(
    mdp: TabularMdp,
    policy: Sequence[int],
    rng: np.random.Generator,
    n_episodes: int,
    catastrophe_states: Iterable[int] = (),
    variance_threshold: float = 0.0,
    max_steps: int | None = None,
    start_states: Sequence[int] | None = None,
) -> RiskProfile:
    """Monte Carlo risk metrics of a deterministic policy.

    Returns are undiscounted episode sums.  A traversal is risky when the
    pair taken has reward variance above ``variance_threshold``.  Episodes
    start uniformly over ``start_states`` (all non-terminal states by default).
    """
    policy = [int(a) for a in policy]
    var = reward_variances(mdp)
    risky = var > variance_threshold
    catastrophe = set(int(s) for s in catastrophe_states)
    starts = list(start_states) if start_states is not None else mdp.nonterminal_states
    cap = max_steps or 10 * mdp.num_states
    returns = np.empty(n_episodes)
    steps = np.empty(n_episodes, dtype=np.int64)
    hit_risky = np.zeros(n_episodes, dtype=bool)
    hit_cat = np.zeros(n_episodes, dtype=bool)
    hit_goal = np.zeros(n_episodes, dtype=bool)
    start_of = np.empty(n_episodes, dtype=np.int64)
    for i in range(n_episodes):
        s = starts[int(rng.integers(len(starts)))]
        start_of[i] = s
        total = 0.0
        k = 0
        while k < cap:
            a = policy[s]
            if risky[s, a]:
                hit_risky[i] = True
            s, r = sample_step(mdp, rng, s, a)
            total += r
            k += 1
            if mdp.is_terminal(s):
                if s in catastrophe:
                    hit_cat[i] = True
                else:
                    hit_goal[i] = True
                break
        returns[i] = total
        steps[i] = k
    by_start = {}
    for s in sorted(set(start_of.tolist())):
        m = start_of == s
        by_start[s] = {
            "episodes": int(m.sum()),
            "risky_traversal_prob": float(hit_risky[m].mean()),
            "catastrophe_prob": float(hit_cat[m].mean()),
            "expected_return": float(returns[m].mean()),
        }
    return RiskProfile(
        episodes=n_episodes,
        expected_return=float(returns.mean()),
        return_std=float(returns.std()),
        risky_traversal_prob=float(hit_risky.mean()),
        catastrophe_prob=float(hit_cat.mean()),
        goal_prob=float(hit_goal.mean()),
        mean_steps=float(steps.mean()),
        by_start=by_start,
    )


def greedy_path(mdp: TabularMdp, policy: Sequence[int], start: int, intended_move, max_steps: int | None = None) -> list[tuple[int, int]]:
    """Follow ``policy`` from ``start`` along intended moves; returns ``(state, action)`` pairs.

    ``intended_move(state, action) -> state`` gives the no-slip successor.
    Stops at a terminal state, a revisited state, or the step cap.
    """
    path = []
    seen = set()
    s = start
    cap = max_steps or mdp.num_states
    while not mdp.is_terminal(s) and s not in seen and len(path) < cap:
        seen.add(s)
        a = int(policy[s])
        path.append((s, a))
        s = intended_move(s, a)
    return path
