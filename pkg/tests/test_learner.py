import numpy as np
import pytest

from replay_shaper.learner import (
    LearnerConfig, glie_epsilon, greedy_policy, learning_rate, q_bounds, q_update, qtable_from_json,
    qtable_to_json, run_algorithm1, run_q_learning,
)
from replay_shaper.mdp import TabularMdp, build_env1, build_env2, random_mdp
from replay_shaper.replay import SchemeConfig, WeightFunction


def test_q_update_examples():
    Q = np.zeros((3, 2))
    assert np.array_equal(q_update(Q, 0, 1, 5.0, 1, 0.0, 0.9), Q)
    assert q_update(Q, 0, 1, 5.0, 2, 1.0, 0.9, terminal_states={2})[0, 1] == 5.0
    assert q_update(Q, 0, 0, 2.0, 1, 0.5, 0.9)[0, 0] == 1.0
    Q[1] = [4.0, -2.0]
    assert q_update(Q, 0, 0, 0.0, 1, 1.0, 0.5)[0, 0] == 2.0
    with pytest.raises(ValueError):
        q_update(Q, 0, 0, 0.0, 1, 1.5, 0.5)


def test_learning_rate_examples():
    assert learning_rate(1, 0.6) == 1.0
    assert learning_rate(1024, 0.6) == pytest.approx(1024 ** -0.6)
    # 1024 = 2**10, so the rate is exactly 2**-6
    assert learning_rate(1024, 0.6) == pytest.approx(0.015625, rel=1e-12)
    assert learning_rate(7, 1.0) == pytest.approx(1 / 7)


def test_glie_epsilon_examples():
    assert glie_epsilon(0) == 1.0
    assert glie_epsilon(99, 1.0, 0.5) == pytest.approx(0.1)
    assert glie_epsilon(10_000, 0.3, 0.0) == 0.3


def test_greedy_policy_ties():
    assert greedy_policy(np.array([[1.0, 3.0, 3.0, 0.0]]))[0] == 1
    assert (greedy_policy(np.zeros((5, 4))) == 0).all()


def test_config_validation():
    for bad in (dict(v=1.0), dict(v=-0.1), dict(alpha_exponent=0.5), dict(t0=0),
                dict(gamma=1.0), dict(alpha_mode="x"), dict(episodes=0)):
        with pytest.raises(ValueError):
            LearnerConfig(**bad)


def plain_q_oracle(mdp, cfg, seed):
    """Independent plain Q-learning loop consuming the RNG stream in the documented order."""
    rng = np.random.default_rng(seed)
    S, A = mdp.shape
    Q = np.full((S, A), cfg.q_init)
    Q[list(mdp.terminal_states)] = 0.0
    n = np.zeros((S, A), dtype=int)
    visits = np.zeros(S, dtype=int)
    starts = mdp.nonterminal_states
    cap = cfg.max_steps_per_episode or 10 * S
    steps_total = 0
    for _ in range(cfg.episodes):
        s = starts[int(rng.random() * len(starts))]
        k = 0
        while True:
            if steps_total < cfg.t0:
                a = int(rng.random() * A)
            else:
                eps = cfg.epsilon_c / (1 + visits[s]) ** cfg.epsilon_p
                if eps >= 1 or rng.random() < eps:
                    a = int(rng.random() * A)
                else:
                    a = int(np.argmax(Q[s]))
            visits[s] += 1
            entries = mdp.entries(s, a)
            if len(entries) == 1:
                e = entries[0]
            else:
                u = rng.random() * sum(x.prob for x in entries)
                acc = 0.0
                e = entries[-1]
                for x in entries[:-1]:
                    acc += x.prob
                    if u < acc:
                        e = x
                        break
            n[s, a] += 1
            alpha = n[s, a] ** -cfg.alpha_exponent
            nxt = 0.0 if mdp.is_terminal(e.next_state) else Q[e.next_state].max()
            Q[s, a] = (1 - alpha) * Q[s, a] + alpha * (e.reward + mdp.gamma * nxt)
            steps_total += 1
            k += 1
            if mdp.is_terminal(e.next_state) or k >= cap:
                break
            s = e.next_state
    return Q


def test_v0_matches_independent_q_learning():
    mdp, _ = build_env2()
    cfg = LearnerConfig(v=0.0, episodes=300, t0=200)
    oracle = plain_q_oracle(mdp, cfg, 5)
    Q, _ = run_q_learning(mdp, cfg, np.random.default_rng(5))
    np.testing.assert_allclose(Q, oracle, rtol=0, atol=1e-12)
    Q1, log, _ = run_algorithm1(mdp, cfg, SchemeConfig(), np.random.default_rng(5))
    assert np.array_equal(Q1, Q)
    assert log.replay_count == 0


def test_two_state_chain_converges():
    mdp = TabularMdp.from_transitions(2, 1, {(0, 0): [(1, 1.0, 1.0)]}, 0.9, [1])
    Q, _ = run_q_learning(mdp, LearnerConfig(v=0.0, episodes=10_000), np.random.default_rng(0))
    assert Q[0, 0] == pytest.approx(1.0, abs=1e-3)
    assert Q[1, 0] == 0.0


def test_determinism_and_terminal_rows():
    mdp, _ = build_env1()
    cfg = LearnerConfig(episodes=400, checkpoint_every=100)
    a = run_algorithm1(mdp, cfg, SchemeConfig(), np.random.default_rng(3))
    b = run_algorithm1(mdp, cfg, SchemeConfig(), np.random.default_rng(3))
    assert np.array_equal(a[0], b[0])
    assert a[1].returns == b[1].returns and a[1].replays == b[1].replays
    assert (a[0][list(mdp.terminal_states)] == 0).all()
    assert len(a[1].checkpoints) == 4


def test_replay_share_and_static_weights():
    mdp = random_mdp(np.random.default_rng(1), 4, 2)
    w = WeightFunction({(0, 1, 2, 1.0): 0.5, (3, 0, 0, -1.0): 0.5})
    cfg = LearnerConfig(v=0.5, episodes=10**9, total_iterations=40_000, t0=100)
    Q, log, stats = run_algorithm1(mdp, cfg, w, np.random.default_rng(0))
    total = log.replay_count + log.env_steps
    assert total == 40_000
    assert log.replay_count / (total - 100) == pytest.approx(0.5, abs=0.02)
    assert set(zip(*np.nonzero(log.replay_updates))) <= {(0, 1), (3, 0)}
    # replays never enter the buffer
    assert stats.total == log.env_steps


def test_q_stays_in_bounds():
    mdp, _ = build_env1()
    lo, hi = q_bounds(mdp)
    for c0 in (lo, 0.0, hi):
        cfg = LearnerConfig(episodes=300, q_init=c0, checkpoint_every=50)
        Q, _, _ = run_algorithm1(mdp, cfg, SchemeConfig(), np.random.default_rng(0))
        assert lo - 1e-9 <= Q.min() and Q.max() <= hi + 1e-9


def test_constant_exploration_is_flagged():
    mdp, _ = build_env1()
    _, log = run_q_learning(mdp, LearnerConfig(v=0.0, episodes=5, epsilon_p=0.0, epsilon_c=0.2),
                            np.random.default_rng(0))
    assert any("GLIE" in n for n in log.notes)


def test_global_alpha_mode_runs():
    mdp, _ = build_env1()
    Q, log = run_q_learning(mdp, LearnerConfig(v=0.0, episodes=50, alpha_mode="global"), np.random.default_rng(0))
    assert np.isfinite(Q).all() and log.episodes == 50


def test_qtable_json_and_csv(tmp_path):
    Q = np.arange(6, dtype=float).reshape(3, 2) / 7
    assert np.array_equal(qtable_from_json(qtable_to_json(Q)), Q)
    mdp, _ = build_env1()
    _, log = run_q_learning(mdp, LearnerConfig(v=0.0, episodes=3), np.random.default_rng(0))
    log.write_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "episode,return,steps,replay_count" and len(lines) == 4
