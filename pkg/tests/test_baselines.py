import numpy as np
import pytest

from replay_shaper.baselines import (
    RiskSensitiveConfig, asymmetric_step, kappa_grid, kappa_sweep, run_risk_sensitive_q, run_worst_case_q,
    td_histogram, worst_case_init, write_sweep_csv,
)
from replay_shaper.learner import LearnerConfig, greedy_policy, q_bounds, run_q_learning
from replay_shaper.mdp import TabularMdp, build_env1, random_mdp
from replay_shaper.operators import bellman_model, fixed_point


def test_asymmetric_step_examples():
    assert asymmetric_step(0.0, 2.0, 0.1, 0.5) == pytest.approx(0.1)
    assert asymmetric_step(0.0, -2.0, 0.1, 0.5) == pytest.approx(-0.3)
    assert asymmetric_step(0.0, 0.0, 0.1, 0.5) == 0.0
    assert asymmetric_step(0.0, -2.0, 0.9, 0.5) == pytest.approx(-2.0)  # capped step


def test_kappa_validation():
    for k in (-1.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            RiskSensitiveConfig(k)


def test_kappa_zero_is_plain_q_learning():
    mdp, _ = build_env1()
    cfg = LearnerConfig(v=0.0, episodes=500)
    Q0, _ = run_q_learning(mdp, cfg, np.random.default_rng(2))
    Qk, log = run_risk_sensitive_q(mdp, RiskSensitiveConfig(0.0, cfg), np.random.default_rng(2))
    assert np.array_equal(Q0, Qk)
    assert len(log.td_errors) == log.env_steps


def test_risk_sensitive_bounds():
    mdp, _ = build_env1()
    lo, hi = q_bounds(mdp)
    for k in (-0.8, 0.8):
        Q, _ = run_risk_sensitive_q(mdp, RiskSensitiveConfig(k, LearnerConfig(v=0.0, episodes=500)),
                                    np.random.default_rng(0))
        slack = 1.0 + abs(k)
        assert lo * slack <= Q.min() and Q.max() <= hi * slack


def test_worst_case_min_over_successors():
    # reward 0 leads to state 1, reward 10 to state 2; both terminal
    mdp = TabularMdp.from_transitions(3, 1, {(0, 0): [(1, 0.0, 0.5), (2, 10.0, 0.5)]}, 0.9, [1, 2])
    Q, _ = run_worst_case_q(mdp, LearnerConfig(v=0.0, episodes=200), np.random.default_rng(0))
    assert Q[0, 0] == 0.0


def test_worst_case_deterministic_equals_bellman():
    mdp, spec = build_env1({"risky": frozenset()})
    Qs, _ = fixed_point(bellman_model(mdp), 1e-12)
    Q, _ = run_worst_case_q(mdp, LearnerConfig(v=0.0, episodes=3000), np.random.default_rng(0))
    np.testing.assert_allclose(Q, Qs, atol=1e-9)


def test_worst_case_monotone_with_deterministic_rewards():
    rng = np.random.default_rng(5)
    base = random_mdp(rng, 5, 2, num_terminal=1)
    # keep stochastic next states but make every (s, a, s') reward unique
    trans = {}
    for s in base.nonterminal_states:
        for a in range(2):
            by_s2 = {}
            for e in base.entries(s, a):
                by_s2.setdefault(e.next_state, [0.0, 0.0])
                by_s2[e.next_state][0] += e.prob
                by_s2[e.next_state][1] = float(s2_reward(s, a, e.next_state))
            trans[(s, a)] = [(s2, r, p) for s2, (p, r) in by_s2.items()]
    mdp = TabularMdp.from_transitions(5, 2, trans, 0.9, base.terminal_states)
    cfg = LearnerConfig(v=0.0, episodes=300, checkpoint_every=1)
    Q, log = run_worst_case_q(mdp, cfg, np.random.default_rng(1))
    snaps = [np.full(mdp.shape, worst_case_init(mdp))] + [c.q for c in log.checkpoints]
    snaps[0][list(mdp.terminal_states)] = 0.0
    for a, b in zip(snaps, snaps[1:]):
        assert (b <= a + 1e-12).all()


def s2_reward(s, a, s2):
    return (3 * s + 5 * a + 7 * s2) % 4 - 1


def test_kappa_grid_and_sweep(tmp_path):
    grid = kappa_grid(0.01)
    assert len(grid) == 99 and grid[0] == 0.01 and grid[-1] == 0.99
    mdp, spec = build_env1()
    rows = kappa_sweep(
        mdp, LearnerConfig(v=0.0, episodes=300), [0.0, 0.5],
        evaluate=lambda pol: {"expected_return": 0.0, "risky_traversal_prob": 0.0, "catastrophe_prob": 0.0},
        label=lambda pol: "x")
    assert [r.kappa for r in rows] == [0.0, 0.5]
    write_sweep_csv(rows, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0].startswith("kappa,label")


def test_td_histogram():
    h = td_histogram([0.0, 1.0, 1.0, -2.0], bins=3)
    assert sum(h["counts"]) == 4 and len(h["edges"]) == 4
    assert td_histogram([]) == {"edges": [], "counts": []}
