"""Comparison learners: asymmetric-TD risk-sensitive Q-learning and worst-case Q-hat learning."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .learner import LearnerConfig, QTable, RunLog, greedy_policy, run_episodes
from .mdp import TabularMdp


@dataclass
class RiskSensitiveConfig:
    """``kappa`` in (-1, 1); positive values are risk averse."""

    kappa: float = 0.0
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def __post_init__(self):
        if not -1.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must lie in (-1, 1), got {self.kappa}")

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "learner": self.learner.to_dict()}


def asymmetric_step(q: float, delta: float, alpha: float, kappa: float) -> float:
    """Change in ``Q(s, a)`` for TD error ``delta``: ``alpha (1 -/+ kappa) delta``.

    The scaled step is capped at 1 so the new value stays between the old
    value and the target.
    """
    scale = (1.0 - kappa) if delta > 0 else (1.0 + kappa)
    return min(alpha * scale, 1.0) * delta


def run_risk_sensitive_q(mdp: TabularMdp, cfg: RiskSensitiveConfig, rng: np.random.Generator) -> tuple[QTable, RunLog]:
    """Q-learning with TD errors scaled by ``1 - kappa`` (positive) or ``1 + kappa`` (negative).

    No replay.  ``log.td_errors`` holds every TD error seen, in order.
    """
    Q, log, _ = run_episodes(mdp, cfg.learner, rng, update="asym", kappa=cfg.kappa)
    return Q, log


def worst_case_init(mdp: TabularMdp, gamma: float | None = None) -> float:
    g = mdp.gamma if gamma is None else gamma
    return mdp.r_max / (1.0 - g)


def run_worst_case_q(mdp: TabularMdp, cfg: LearnerConfig, rng: np.random.Generator) -> tuple[QTable, RunLog]:
    """Pessimistic Q-hat learning.

    Starts at ``r_max / (1 - gamma)``.  Each observed transition sets
    ``Q(s, a)`` to the smallest ``rbar(s, a, s') + gamma max_b Q(s', b)`` over
    the successors seen so far, where ``rbar`` is the running mean reward of
    that successor.  On deterministic dynamics this is the Bellman backup.
    """
    Q, log, _ = run_episodes(mdp, cfg, rng, update="worst", q_init=worst_case_init(mdp, cfg.gamma))
    return Q, log


def td_histogram(td_errors: Sequence[float], bins: int = 40) -> dict:
    """Histogram of TD errors as plain lists (edges, counts)."""
    x = np.asarray(td_errors, dtype=float)
    if x.size == 0:
        return {"edges": [], "counts": []}
    counts, edges = np.histogram(x, bins=bins)
    return {"edges": edges.tolist(), "counts": counts.tolist()}


@dataclass
class SweepRow:
    kappa: float
    label: str
    expected_return: float
    risky_traversal_prob: float
    catastrophe_prob: float
    policy: list[int]

    def to_dict(self) -> dict:
        return asdict(self)


def kappa_grid(step: float = 0.01, lo: float = 0.0, hi: float = 1.0) -> list[float]:
    """Values ``lo + k * step`` strictly inside ``(-1, 1)`` and ``(lo, hi)``."""
    n = int(round((hi - lo) / step))
    return [round(lo + k * step, 10) for k in range(1, n)]


def kappa_sweep(
    mdp: TabularMdp,
    learner: LearnerConfig,
    kappas: Iterable[float],
    evaluate: Callable[[np.ndarray], dict],
    label: Callable[[np.ndarray], str],
    seed: int = 0,
) -> list[SweepRow]:
    """Run the risk-sensitive learner for each ``kappa``; each run gets ``default_rng(seed)``.

    ``evaluate(policy)`` returns a dict with ``expected_return``,
    ``risky_traversal_prob`` and ``catastrophe_prob``; ``label(policy)`` names
    the policy class.
    """
    rows = []
    for k in kappas:
        Q, _ = run_risk_sensitive_q(mdp, RiskSensitiveConfig(k, learner), np.random.default_rng(seed))
        pol = greedy_policy(Q)
        m = evaluate(pol)
        rows.append(SweepRow(float(k), label(pol), float(m["expected_return"]),
                             float(m["risky_traversal_prob"]), float(m["catastrophe_prob"]),
                             [int(a) for a in pol]))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kappa", "label", "expected_return", "risky_traversal_prob", "catastrophe_prob"])
        for r in rows:
            w.writerow([repr(r.kappa), r.label, repr(r.expected_return),
                        repr(r.risky_traversal_prob), repr(r.catastrophe_prob)])
