"""Finite MDPs with joint next-state/reward kernels, plus the two grid worlds.

A :class:`TabularMdp` stores, for every state-action pair, a finite list of
``(next_state, reward, prob)`` entries, i.e. the joint kernel
``q(s', r | s, a)``.  Rewards are kept exactly, so per-pair reward supports
and variances can be read straight off the kernel.
"""

from __future__ import annotations

import bisect
import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

UP, RIGHT, DOWN, LEFT = 0, 1, 2, 3
ACTION_NAMES = ("up", "right", "down", "left")
ACTION_ARROWS = ("↑", "→", "↓", "←")
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))

PROB_TOL = 1e-12

Cell = tuple[int, int]


class Entry(NamedTuple):
    next_state: int
    reward: float
    prob: float


class TerminalStateError(ValueError):
    """Raised when a query needs outgoing dynamics from a terminal state."""


def _merge(entries: Iterable[tuple[int, float, float]]) -> tuple[Entry, ...]:
    merged: dict[tuple[int, float], float] = {}
    for s2, r, p in entries:
        if p < 0:
            raise ValueError(f"negative probability {p}")
        if p == 0:
            continue
        key = (int(s2), float(r))
        merged[key] = merged.get(key, 0.0) + float(p)
    return tuple(Entry(s2, r, p) for (s2, r), p in sorted(merged.items()))


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP given by its joint kernel.

    Use :meth:`from_transitions` to build one; it merges duplicate
    ``(next_state, reward)`` entries and validates normalization.
    """

    num_states: int
    num_actions: int
    kernel: tuple[tuple[tuple[Entry, ...], ...], ...]
    gamma: float
    terminal_states: frozenset[int]
    r_min: float
    r_max: float
    _cum: tuple = field(repr=False, default=())

    @classmethod
    def from_transitions(
        cls,
        num_states: int,
        num_actions: int,
        transitions: Mapping[tuple[int, int], Iterable[tuple[int, float, float]]],
        gamma: float,
        terminal_states: Iterable[int] = (),
        r_min: float | None = None,
        r_max: float | None = None,
    ) -> "TabularMdp":
        if num_states < 1 or num_actions < 1:
            raise ValueError("need at least one state and one action")
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        terminals = frozenset(int(s) for s in terminal_states)
        rows = []
        rewards = []
        for s in range(num_states):
            row = []
            for a in range(num_actions):
                entries = _merge(transitions.get((s, a), ()))
                if s in terminals:
                    if entries:
                        raise ValueError(f"terminal state {s} has outgoing entries")
                else:
                    total = sum(e.prob for e in entries)
                    if abs(total - 1.0) > PROB_TOL:
                        raise ValueError(f"kernel of ({s}, {a}) sums to {total!r}")
                    for e in entries:
                        if not 0 <= e.next_state < num_states:
                            raise ValueError(f"next state {e.next_state} out of range")
                        rewards.append(e.reward)
                row.append(entries)
            rows.append(tuple(row))
        lo = min(rewards) if rewards else 0.0
        hi = max(rewards) if rewards else 0.0
        r_min = lo if r_min is None else float(r_min)
        r_max = hi if r_max is None else float(r_max)
        if r_min > lo or r_max < hi or r_min > r_max:
            raise ValueError("rewards fall outside [r_min, r_max]")
        cum = tuple(
            tuple(tuple(np.cumsum([e.prob for e in entries]).tolist()) for entries in row)
            for row in rows
        )
        return cls(num_states, num_actions, tuple(rows), float(gamma), terminals, r_min, r_max, cum)

    # ------------------------------------------------------------------ queries
    def entries(self, s: int, a: int) -> tuple[Entry, ...]:
        return self.kernel[s][a]

    def is_terminal(self, s: int) -> bool:
        return s in self.terminal_states

    @property
    def nonterminal_states(self) -> list[int]:
        return [s for s in range(self.num_states) if s not in self.terminal_states]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_states, self.num_actions)

    def transition_matrix(self) -> np.ndarray:
        """Dense ``p(s'|s,a)`` of shape ``(S, A, S)``; terminal rows are zero."""
        P = np.zeros((self.num_states, self.num_actions, self.num_states))
        for s, row in enumerate(self.kernel):
            for a, entries in enumerate(row):
                for e in entries:
                    P[s, a, e.next_state] += e.prob
        return P

    def expected_reward(self) -> np.ndarray:
        """``R(s,a)`` of shape ``(S, A)``."""
        R = np.zeros((self.num_states, self.num_actions))
        for s, row in enumerate(self.kernel):
            for a, entries in enumerate(row):
                R[s, a] = sum(e.prob * e.reward for e in entries)
        return R

    def reward_support(self, s: int, a: int) -> list[float]:
        self._require_nonterminal(s)
        return sorted({e.reward for e in self.kernel[s][a]})

    def _require_nonterminal(self, s: int) -> None:
        if s in self.terminal_states:
            raise TerminalStateError(f"state {s} is terminal")

    # ------------------------------------------------------------ serialization
    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "gamma": self.gamma,
            "terminal_states": sorted(self.terminal_states),
            "r_min": self.r_min,
            "r_max": self.r_max,
            "kernel": [
                [[list(e) for e in entries] for entries in row] for row in self.kernel
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "TabularMdp":
        transitions = {
            (s, a): [tuple(e) for e in entries]
            for s, row in enumerate(d["kernel"])
            for a, entries in enumerate(row)
        }
        return cls.from_transitions(
            d["num_states"], d["num_actions"], transitions, d["gamma"],
            d["terminal_states"], d["r_min"], d["r_max"],
        )


def reward_variance(mdp: TabularMdp, s: int, a: int) -> float:
    """Population variance of the marginal reward of ``(s, a)``."""
    mdp._require_nonterminal(s)
    entries = mdp.kernel[s][a]
    mean = sum(e.prob * e.reward for e in entries)
    # centred form avoids cancellation when |mean| is large
    var = sum(e.prob * (e.reward - mean) ** 2 for e in entries)
    return max(var, 0.0)


def reward_variances(mdp: TabularMdp) -> np.ndarray:
    """Variance table of shape ``(S, A)``; terminal rows are zero."""
    out = np.zeros(mdp.shape)
    for s in mdp.nonterminal_states:
        for a in range(mdp.num_actions):
            out[s, a] = reward_variance(mdp, s, a)
    return out


def min_reward_support(mdp: TabularMdp, s: int, a: int) -> tuple[frozenset[int], float]:
    """Next states reachable with the smallest reward of ``(s, a)``, and that reward."""
    mdp._require_nonterminal(s)
    entries = mdp.kernel[s][a]
    r_lo = min(e.reward for e in entries)
    return frozenset(e.next_state for e in entries if e.reward == r_lo), r_lo


def sample_step(mdp: TabularMdp, rng: np.random.Generator, s: int, a: int) -> tuple[int, float]:
    """Draw ``(next_state, reward)`` from ``q(.,.|s,a)``."""
    mdp._require_nonterminal(s)
    entries = mdp.kernel[s][a]
    if len(entries) == 1:
        e = entries[0]
        return e.next_state, e.reward
    cum = mdp._cum[s][a]
    i = bisect.bisect_right(cum, rng.random() * cum[-1])
    e = entries[min(i, len(entries) - 1)]
    return e.next_state, e.reward


# ---------------------------------------------------------------------------
# Grid worlds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridWorldSpec:
    """Layout and reward parameters of a 4-action grid world.

    States are cells in row-major order.  Goal and cliff cells are terminal;
    every other cell is a possible episode start.
    """

    rows: int
    cols: int
    goal: frozenset[Cell]
    cliff: frozenset[Cell] = frozenset()
    risky: frozenset[tuple[Cell, int]] = frozenset()
    slip: float = 0.0
    slip_includes_intended: bool = True
    step_reward: float = -1.0
    goal_reward: float = 150.0
    cliff_reward: float = -12.0
    risky_rewards: tuple[float, float] = (-100.0, 100.0)
    risky_low_prob: float = 0.4
    gamma: float = 0.95
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "goal", frozenset(tuple(c) for c in self.goal))
        object.__setattr__(self, "cliff", frozenset(tuple(c) for c in self.cliff))
        object.__setattr__(
            self, "risky", frozenset((tuple(c), int(a)) for c, a in self.risky)
        )
        object.__setattr__(self, "risky_rewards", tuple(float(r) for r in self.risky_rewards))
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs positive dimensions")
        if not self.goal:
            raise ValueError("grid needs at least one goal cell")
        for c in (*self.goal, *self.cliff, *(c for c, _ in self.risky)):
            if not self.in_grid(c):
                raise ValueError(f"cell {c} lies outside the {self.rows}x{self.cols} grid")
        if self.goal & self.cliff:
            raise ValueError("goal and cliff cells overlap")
        if any(c in self.goal for c, _ in self.risky):
            raise ValueError("risky transitions cannot start in a goal cell")
        if any(a not in range(4) for _, a in self.risky):
            raise ValueError("risky action out of range")
        if not 0.0 <= self.slip < 1.0:
            raise ValueError("slip probability must lie in [0, 1)")

    def in_grid(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.rows and 0 <= c < self.cols

    def state_of(self, cell: Cell) -> int:
        return cell[0] * self.cols + cell[1]

    def cell_of(self, state: int) -> Cell:
        return divmod(int(state), self.cols)

    @property
    def num_states(self) -> int:
        return self.rows * self.cols

    @property
    def terminal_cells(self) -> frozenset[Cell]:
        return self.goal | self.cliff

    @property
    def goal_states(self) -> frozenset[int]:
        return frozenset(self.state_of(c) for c in self.goal)

    @property
    def cliff_states(self) -> frozenset[int]:
        return frozenset(self.state_of(c) for c in self.cliff)

    @property
    def start_states(self) -> list[int]:
        return [
            self.state_of((r, c))
            for r in range(self.rows)
            for c in range(self.cols)
            if (r, c) not in self.terminal_cells
        ]

    def risky_pairs(self) -> list[tuple[int, int]]:
        return sorted((self.state_of(c), a) for c, a in self.risky)

    def move(self, cell: Cell, action: int) -> Cell:
        dr, dc = MOVES[action]
        nxt = (cell[0] + dr, cell[1] + dc)
        return nxt if self.in_grid(nxt) else cell

    # ------------------------------------------------------------ serialization
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "rows": self.rows,
            "cols": self.cols,
            "goal": sorted(list(c) for c in self.goal),
            "cliff": sorted(list(c) for c in self.cliff),
            "risky": sorted([list(c), a] for c, a in self.risky),
            "slip": self.slip,
            "slip_includes_intended": self.slip_includes_intended,
            "rewards": {
                "step": self.step_reward,
                "goal": self.goal_reward,
                "cliff": self.cliff_reward,
                "risky": list(self.risky_rewards),
                "risky_low_prob": self.risky_low_prob,
            },
            "gamma": self.gamma,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: Mapping) -> "GridWorldSpec":
        rewards = d.get("rewards", {})
        kwargs = dict(
            rows=int(d["rows"]),
            cols=int(d["cols"]),
            goal=frozenset(tuple(c) for c in d["goal"]),
            cliff=frozenset(tuple(c) for c in d.get("cliff", ())),
            risky=frozenset((tuple(c), int(a)) for c, a in d.get("risky", ())),
            slip=float(d.get("slip", 0.0)),
            slip_includes_intended=bool(d.get("slip_includes_intended", True)),
        )
        for key, attr in (("step", "step_reward"), ("goal", "goal_reward"),
                          ("cliff", "cliff_reward"), ("risky_low_prob", "risky_low_prob")):
            if key in rewards:
                kwargs[attr] = float(rewards[key])
        if "risky" in rewards:
            kwargs["risky_rewards"] = tuple(rewards["risky"])
        if "gamma" in d:
            kwargs["gamma"] = float(d["gamma"])
        if "name" in d:
            kwargs["name"] = d["name"]
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "GridWorldSpec":
        return cls.from_dict(json.loads(text))


ENV1_SPEC = GridWorldSpec(
    rows=4,
    cols=5,
    goal=frozenset({(1, 4)}),
    risky=frozenset({((1, 0), RIGHT), ((1, 1), RIGHT), ((1, 2), RIGHT)}),
    goal_reward=150.0,
    # at 0.95 a right/left cycle through a volatile pair out-earns the goal
    gamma=0.9,
    name="env1",
)

ENV2_SPEC = GridWorldSpec(
    rows=4,
    cols=6,
    goal=frozenset({(3, 5)}),
    cliff=frozenset({(3, 1), (3, 2), (3, 3), (3, 4)}),
    slip=0.1,
    goal_reward=10.0,
    cliff_reward=-12.0,
    name="env2",
)


def _outcome(spec: GridWorldSpec, cell: Cell, action: int, target: Cell) -> list[tuple[Cell, float, float]]:
    """Reward entries (target, reward, prob) for landing on ``target``."""
    if target in spec.goal:
        return [(target, spec.goal_reward, 1.0)]
    if target in spec.cliff:
        return [(target, spec.cliff_reward, 1.0)]
    if (cell, action) in spec.risky:
        lo, hi = spec.risky_rewards
        return [(target, lo, spec.risky_low_prob), (target, hi, 1.0 - spec.risky_low_prob)]
    return [(target, spec.step_reward, 1.0)]


def build_gridworld(spec: GridWorldSpec) -> TabularMdp:
    """Compile a :class:`GridWorldSpec` into a :class:`TabularMdp`."""
    transitions: dict[tuple[int, int], list[tuple[int, float, float]]] = {}
    for s in spec.start_states:
        cell = spec.cell_of(s)
        for a in range(4):
            intended = spec.move(cell, a)
            if spec.slip == 0.0 or intended in spec.goal:
                moves = [(a, 1.0)]
            else:
                others = range(4) if spec.slip_includes_intended else [b for b in range(4) if b != a]
                others = list(others)
                moves = [(a, 1.0 - spec.slip)] + [(b, spec.slip / len(others)) for b in others]
            entries = []
            for b, pb in moves:
                # a slip is executed as action b, so risky rewards follow the move taken
                target = spec.move(cell, b)
                for tgt, r, pr in _outcome(spec, cell, b, target):
                    entries.append((spec.state_of(tgt), r, pb * pr))
            transitions[(s, a)] = entries
    mdp = TabularMdp.from_transitions(
        spec.num_states, 4, transitions, spec.gamma,
        terminal_states=spec.goal_states | spec.cliff_states,
    )
    _check_goal_reachable(spec, mdp)
    return mdp


def _check_goal_reachable(spec: GridWorldSpec, mdp: TabularMdp) -> None:
    preds: dict[int, set[int]] = {s: set() for s in range(mdp.num_states)}
    for s in mdp.nonterminal_states:
        for a in range(mdp.num_actions):
            for e in mdp.entries(s, a):
                preds[e.next_state].add(s)
    seen = set(spec.goal_states)
    queue = deque(seen)
    while queue:
        s = queue.popleft()
        for p in preds[s]:
            if p not in seen and p not in mdp.terminal_states:
                seen.add(p)
                queue.append(p)
    cut = [spec.cell_of(s) for s in spec.start_states if s not in seen]
    if cut:
        raise ValueError(f"goal unreachable from start cells {cut}")


def build_env1(spec_overrides: Mapping | GridWorldSpec | None = None) -> tuple[TabularMdp, GridWorldSpec]:
    """4x5 grid with volatile ``right`` transitions along the goal row."""
    spec = _apply_overrides(ENV1_SPEC, spec_overrides)
    return build_gridworld(spec), spec


def build_env2(spec_overrides: Mapping | GridWorldSpec | None = None) -> tuple[TabularMdp, GridWorldSpec]:
    """4x6 cliff grid; moves succeed w.p. 0.9, goal-entering moves always."""
    spec = _apply_overrides(ENV2_SPEC, spec_overrides)
    return build_gridworld(spec), spec


def _apply_overrides(base: GridWorldSpec, overrides) -> GridWorldSpec:
    if overrides is None:
        return base
    if isinstance(overrides, GridWorldSpec):
        return overrides
    return replace(base, **dict(overrides))


def build_env(name: str, overrides: Mapping | None = None) -> tuple[TabularMdp, GridWorldSpec]:
    if name == "env1":
        return build_env1(overrides)
    if name == "env2":
        return build_env2(overrides)
    raise KeyError(f"unknown environment {name!r}")


def random_mdp(
    rng: np.random.Generator,
    num_states: int = 5,
    num_actions: int = 2,
    gamma: float = 0.9,
    max_outcomes: int = 3,
    reward_values: Sequence[float] = (-1.0, 0.0, 1.0, 2.0),
    num_terminal: int = 0,
) -> TabularMdp:
    """Random MDP with small joint supports, used by the verification suites."""
    terminals = list(range(num_states - num_terminal, num_states))
    transitions = {}
    for s in range(num_states - num_terminal):
        for a in range(num_actions):
            k = int(rng.integers(1, max_outcomes + 1))
            nxt = rng.integers(0, num_states, size=k)
            rew = rng.choice(np.asarray(reward_values, dtype=float), size=k)
            prob = rng.dirichlet(np.ones(k))
            prob[-1] = 1.0 - prob[:-1].sum()
            transitions[(s, a)] = list(zip(nxt.tolist(), rew.tolist(), prob.tolist()))
    return TabularMdp.from_transitions(num_states, num_actions, transitions, gamma, terminals)
