"""Tabular Q-learning with experience replay from a convergent replay scheme.

The learner alternates, after an initial exploration phase, between replay
updates (probability ``v``) and real environment steps.  Real transitions go
into a :class:`~replay_shaper.replay.BufferStats`; replay tuples are drawn
from either the buffer's current replay distribution or a fixed
:class:`~replay_shaper.replay.WeightFunction`.

Q-tables are plain ``(num_states, num_actions)`` float arrays.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .mdp import TabularMdp
from .replay import BufferStats, SchemeConfig, WeightFunction, replay_weights, sample_replay, weight_distance

QTable = np.ndarray

# (s, a, r, s2, alpha) -> None, mutating the learner's Q lists
UpdateFn = Callable[[int, int, float, int, float], None]


@dataclass
class LearnerConfig:
    """Run parameters shared by all tabular learners.

    ``gamma=None`` takes the discount from the MDP.  ``max_steps_per_episode``
    defaults to ``10 * num_states``.  ``total_iterations`` (real plus replay
    updates) stops a run early when set.
    """

    v: float = 0.5
    gamma: float | None = None
    t0: int = 500
    alpha_exponent: float = 0.6
    alpha_mode: str = "per_pair"
    q_init: float = 0.0
    episodes: int = 50_000
    max_steps_per_episode: int | None = None
    epsilon_c: float = 1.0
    epsilon_p: float = 0.5
    total_iterations: int | None = None
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.v < 1.0:
            raise ValueError(f"replay probability v must lie in [0, 1), got {self.v}")
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.t0 < 1:
            raise ValueError("t0 must be a positive integer")
        if not 0.5 < self.alpha_exponent <= 1.0:
            raise ValueError("alpha_exponent must lie in (0.5, 1]")
        if self.alpha_mode not in ("per_pair", "global"):
            raise ValueError(f"unknown alpha_mode {self.alpha_mode!r}")
        if self.episodes < 1:
            raise ValueError("episodes must be positive")
        if self.max_steps_per_episode is not None and self.max_steps_per_episode < 1:
            raise ValueError("max_steps_per_episode must be positive")
        if self.epsilon_c < 0 or self.epsilon_p < 0:
            raise ValueError("exploration parameters must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Checkpoint:
    episode: int
    q: np.ndarray
    weight_distance: float | None = None


@dataclass
class RunLog:
    returns: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    replays: list[int] = field(default_factory=list)
    checkpoints: list[Checkpoint] = field(default_factory=list)
    real_updates: np.ndarray | None = None
    replay_updates: np.ndarray | None = None
    td_errors: list[float] | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def episodes(self) -> int:
        return len(self.returns)

    @property
    def replay_count(self) -> int:
        return sum(self.replays)

    @property
    def env_steps(self) -> int:
        return sum(self.steps)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["episode", "return", "steps", "replay_count"])
            for i, (ret, n, k) in enumerate(zip(self.returns, self.steps, self.replays)):
                writer.writerow([i, repr(float(ret)), n, k])


# ---------------------------------------------------------------------------
# Small pieces
# ---------------------------------------------------------------------------


def q_update(Q: QTable, s: int, a: int, r: float, s2: int, alpha: float, gamma: float,
             terminal_states: Iterable[int] = ()) -> QTable:
    """Return a copy of ``Q`` with the one-step Q-learning update applied at ``(s, a)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    out = np.array(Q, dtype=float, copy=True)
    nxt = 0.0 if s2 in set(terminal_states) else float(out[s2].max())
    out[s, a] = (1.0 - alpha) * out[s, a] + alpha * (r + gamma * nxt)
    return out


def learning_rate(visit_count: int, alpha_exponent: float = 0.6) -> float:
    if visit_count < 1:
        raise ValueError("visit_count must be >= 1")
    return visit_count ** -alpha_exponent


def glie_epsilon(state_visit_count: int, c: float = 1.0, p: float = 0.5) -> float:
    """``min(1, c / (1 + n) ** p)``; ``p = 0`` gives constant exploration."""
    return min(1.0, c / (1.0 + state_visit_count) ** p)


def greedy_policy(Q: QTable) -> np.ndarray:
    """Argmax per state, ties to the lowest action index."""
    return np.argmax(np.asarray(Q), axis=1)


def q_bounds(mdp: TabularMdp, gamma: float | None = None) -> tuple[float, float]:
    """Interval that contains every Q iterate started inside it (terminal value 0)."""
    g = mdp.gamma if gamma is None else gamma
    lo = min(mdp.r_min, mdp.r_min / (1.0 - g), 0.0)
    hi = max(mdp.r_max, mdp.r_max / (1.0 - g), 0.0)
    return lo, hi


# ---------------------------------------------------------------------------
# Shared episodic loop
# ---------------------------------------------------------------------------


def run_episodes(
    mdp: TabularMdp,
    cfg: LearnerConfig,
    rng: np.random.Generator,
    update: str = "q",
    replay: SchemeConfig | WeightFunction | None = None,
    kappa: float = 0.0,
    q_init: float | None = None,
    limit_weights: WeightFunction | None = None,
) -> tuple[QTable, RunLog, BufferStats]:
    """Episodic loop used by every learner in the package.

    ``update`` selects the backup: ``"q"`` (standard), ``"asym"``
    (TD error scaled by ``1 - kappa`` / ``1 + kappa``) or ``"worst"``
    (pessimistic min over observed successors).  Replay happens only when
    ``cfg.v > 0`` and ``replay`` is given.

    Random numbers are drawn in a fixed order: episode start, then per
    iteration the replay coin (only if ``v > 0`` and past ``t0``), replay
    draws, or exploration coin / action / environment draw.
    """
    S, A = mdp.shape
    gamma = mdp.gamma if cfg.gamma is None else cfg.gamma
    c0 = cfg.q_init if q_init is None else q_init
    term = [mdp.is_terminal(s) for s in range(S)]
    Q = [[0.0] * A if term[s] else [float(c0)] * A for s in range(S)]
    n_updates = [0] * (S * A)
    n_real = np.zeros(S * A, dtype=np.int64)
    n_replay = np.zeros(S * A, dtype=np.int64)
    state_visits = [0] * S
    stats = BufferStats(S, A)
    starts = mdp.nonterminal_states
    n_starts = len(starts)
    cap = cfg.max_steps_per_episode or 10 * S
    exp_ = cfg.alpha_exponent
    per_pair = cfg.alpha_mode == "per_pair"
    eps_c, eps_p = cfg.epsilon_c, cfg.epsilon_p
    v = cfg.v if replay is not None else 0.0
    max_iter = cfg.total_iterations
    log = RunLog()
    if eps_p == 0:
        log.notes.append("constant exploration rate: schedule is not GLIE")
    if replay is not None and cfg.v == 0:
        log.notes.append("v = 0: replay branch disabled")

    if isinstance(replay, WeightFunction):
        static = replay

        def draw():
            return sample_replay(static, rng)
    elif isinstance(replay, SchemeConfig):
        scheme = replay

        def draw():
            return stats.sample(scheme, rng)
    else:
        draw = None

    kernel = mdp.kernel
    cum = mdp._cum
    rand = rng.random

    # worst-case bookkeeping: running mean reward per observed (s, a, s')
    succ_mean: list[dict[int, list[float]]] = [dict() for _ in range(S * A)]
    td_log: list[float] | None = [] if update == "asym" else None
    pos_scale, neg_scale = 1.0 - kappa, 1.0 + kappa

    def backup(s: int, a: int, r: float, s2: int, alpha: float) -> None:
        row = Q[s]
        nxt = 0.0 if term[s2] else max(Q[s2])
        if update == "q":
            row[a] = (1.0 - alpha) * row[a] + alpha * (r + gamma * nxt)
        elif update == "asym":
            target = r + gamma * nxt
            delta = target - row[a]
            td_log.append(delta)
            step = min(alpha * (pos_scale if delta > 0 else neg_scale), 1.0)
            # same arithmetic as the plain backup, so kappa = 0 reproduces it bit for bit
            row[a] = (1.0 - step) * row[a] + step * target
        else:
            p = s * A + a
            rec = succ_mean[p].get(s2)
            if rec is None:
                succ_mean[p][s2] = [r, 1.0]
            else:
                rec[1] += 1.0
                rec[0] += (r - rec[0]) / rec[1]
            worst = math.inf
            for t2, (rbar, _) in succ_mean[p].items():
                val = rbar + gamma * (0.0 if term[t2] else max(Q[t2]))
                if val < worst:
                    worst = val
            row[a] = worst

    t = 0
    env_steps = 0
    t0 = cfg.t0
    done = False
    for ep in range(cfg.episodes):
        s = starts[int(rand() * n_starts)]
        ret = 0.0
        steps = 0
        replays = 0
        while True:
            if max_iter is not None and t >= max_iter:
                done = True
                break
            t += 1
            if v > 0.0 and env_steps >= t0 and rand() < v:
                rs, ra, rs2, rr = draw()
                p = rs * A + ra
                n_updates[p] += 1
                n_replay[p] += 1
                alpha = (n_updates[p] if per_pair else t) ** -exp_
                backup(rs, ra, rr, rs2, alpha)
                replays += 1
                continue
            row = Q[s]
            if env_steps < t0:
                a = int(rand() * A)
            else:
                eps = eps_c / (1.0 + state_visits[s]) ** eps_p
                if eps >= 1.0 or rand() < eps:
                    a = int(rand() * A)
                else:
                    a = row.index(max(row))
            state_visits[s] += 1
            entries = kernel[s][a]
            if len(entries) == 1:
                e = entries[0]
            else:
                c = cum[s][a]
                u = rand() * c[-1]
                i = 0
                while i < len(c) - 1 and u >= c[i]:
                    i += 1
                e = entries[i]
            s2, r = e.next_state, e.reward
            p = s * A + a
            n_updates[p] += 1
            n_real[p] += 1
            alpha = (n_updates[p] if per_pair else t) ** -exp_
            backup(s, a, r, s2, alpha)
            stats.record(s, a, r, s2)
            env_steps += 1
            steps += 1
            ret += r
            if term[s2] or steps >= cap:
                break
            s = s2
        if steps or replays:
            log.returns.append(ret)
            log.steps.append(steps)
            log.replays.append(replays)
        if cfg.checkpoint_every and (ep + 1) % cfg.checkpoint_every == 0:
            snap = np.array(Q)
            dist = None
            if limit_weights is not None and isinstance(replay, SchemeConfig) and stats.distinct:
                dist = weight_distance(replay_weights(stats, replay), limit_weights)
            log.checkpoints.append(Checkpoint(ep + 1, snap, dist))
            if update != "asym":
                lo, hi = q_bounds(mdp, gamma)
                lo, hi = min(lo, c0), max(hi, c0)
                if snap.min() < lo - 1e-9 or snap.max() > hi + 1e-9:
                    raise RuntimeError(f"Q left [{lo}, {hi}] at episode {ep + 1}")
        if done:
            break

    log.real_updates = n_real.reshape(S, A)
    log.replay_updates = n_replay.reshape(S, A)
    log.td_errors = td_log
    return np.array(Q, dtype=float), log, stats


def run_q_learning(mdp: TabularMdp, cfg: LearnerConfig, rng: np.random.Generator) -> tuple[QTable, RunLog]:
    """Plain Q-learning (no replay) with the same exploration and step-size schedule."""
    Q, log, _ = run_episodes(mdp, cfg, rng)
    return Q, log


def run_algorithm1(
    mdp: TabularMdp,
    cfg: LearnerConfig,
    scheme: SchemeConfig | WeightFunction,
    rng: np.random.Generator,
    limit_weights: WeightFunction | None = None,
) -> tuple[QTable, RunLog, BufferStats]:
    """Q-learning with convergent experience replay.

    ``scheme`` is either a :class:`SchemeConfig` (weights recomputed from the
    buffer after every stored transition) or a fixed :class:`WeightFunction`.
    """
    return run_episodes(mdp, cfg, rng, replay=scheme, limit_weights=limit_weights)


def qtable_to_json(Q: QTable) -> str:
    return json.dumps({"shape": list(Q.shape), "values": Q.tolist()})


def qtable_from_json(text: str) -> QTable:
    d = json.loads(text)
    Q = np.asarray(d["values"], dtype=float)
    if list(Q.shape) != list(d["shape"]):
        raise ValueError("Q-table shape does not match its header")
    return Q
