import numpy as np
import pytest

from replay_shaper.mdp import DOWN, RIGHT, UP, TabularMdp, build_env1
from replay_shaper.operators import effective_model, fixed_point
from replay_shaper.replay import WeightFunction, concentrated_weights, limiting_weights
from replay_shaper.safety import (
    check_assumption1, greedy_path, limit_q_closed_form, policy_risk_profile, theorem2_report,
)
from replay_shaper.verify import build_switch_family


def two_action_mdp(b_reward):
    # state 0: action 0 risky to terminal, action 1 deterministic to terminal
    return TabularMdp.from_transitions(
        2, 2, {(0, 0): [(1, -100.0, 0.4), (1, 100.0, 0.6)], (0, 1): [(1, b_reward, 1.0)]}, 0.9, [1])


def test_switch_predicted_and_observed():
    mdp = two_action_mdp(10.0)
    rep = theorem2_report(mdp, 0.5, concentrated_weights(mdp, 0, 0), 0, 0)
    # no-replay values 20 vs 10; replayed value 0.5 * 20 + 0.5 * (-100) = -40
    assert rep.lhs_gap == pytest.approx(10.0)
    assert rep.reward_term == pytest.approx(0.5 * (20.0 + 100.0))
    assert rep.successor_term == 0.0 and rep.replay_term == 0.0
    assert rep.q_replay[0] == pytest.approx(-40.0)
    assert rep.predicted_switch and rep.actual_switch


def test_switch_not_predicted_when_gap_large():
    mdp = two_action_mdp(-50.0)
    rep = theorem2_report(mdp, 0.5, concentrated_weights(mdp, 0, 0), 0, 0)
    assert rep.lhs_gap == pytest.approx(70.0) and rep.rhs_bound == pytest.approx(60.0)
    assert not rep.predicted_switch and not rep.actual_switch


def test_switch_v0():
    mdp = two_action_mdp(10.0)
    rep = theorem2_report(mdp, 0.0, concentrated_weights(mdp, 0, 0), 0, 0)
    assert rep.rhs_bound == 0.0 and not rep.predicted_switch and not rep.actual_switch


def test_switch_requires_unique_optimum():
    mdp = two_action_mdp(20.0)
    with pytest.raises(ValueError):
        theorem2_report(mdp, 0.5, concentrated_weights(mdp, 0, 0), 0, 0)
    with pytest.raises(ValueError):
        theorem2_report(two_action_mdp(10.0), 0.5, concentrated_weights(mdp, 0, 0), 0, 1)


def test_closed_form_matches_solver():
    mdp = two_action_mdp(10.0)
    w = concentrated_weights(mdp, 0, 0)
    for v in (0.0, 0.3, 0.5, 0.9):
        Q, _ = fixed_point(effective_model(mdp, w, v), 1e-12)
        assert limit_q_closed_form(mdp, v, 0, 0, Q) == pytest.approx(Q[0, 0], abs=1e-8)
    for mdp, s_i, a_i, v in build_switch_family(20, seed=3):
        w = concentrated_weights(mdp, s_i, a_i)
        Q, _ = fixed_point(effective_model(mdp, w, v), 1e-12)
        assert abs(limit_q_closed_form(mdp, v, s_i, a_i, Q) - Q[s_i, a_i]) <= 1e-8


def test_closed_form_v0_is_bellman():
    mdp = two_action_mdp(10.0)
    Q = np.array([[3.0, 1.0], [0.0, 0.0]])
    assert limit_q_closed_form(mdp, 0.0, 0, 0, Q) == pytest.approx(20.0)


def test_closed_form_multiple_low_successors():
    mdp = TabularMdp.from_transitions(
        4, 1, {(0, 0): [(1, -5.0, 0.2), (2, -5.0, 0.2), (3, 5.0, 0.6)], (1, 0): [(3, 1.0, 1.0)],
               (2, 0): [(3, 3.0, 1.0)]}, 0.9, [3])
    w = concentrated_weights(mdp, 0, 0)
    assert w.table == {(0, 0, 1, -5.0): 0.5, (0, 0, 2, -5.0): 0.5}
    Q, _ = fixed_point(effective_model(mdp, w, 0.5), 1e-12)
    # 0.5 * (1 + 0.9 * (0.2 + 0.6)) + 0.5 * (-5 + 0.9 * 2)
    assert Q[0, 0] == pytest.approx(0.5 * (1.0 + 0.9 * 0.8) + 0.5 * (-5.0 + 0.9 * 2.0))
    assert limit_q_closed_form(mdp, 0.5, 0, 0, Q) == pytest.approx(Q[0, 0], abs=1e-8)


def test_limit_value_nonincreasing_in_v():
    for mdp, s_i, a_i, _ in build_switch_family(10, seed=11):
        w = concentrated_weights(mdp, s_i, a_i)
        vals = [fixed_point(effective_model(mdp, w, v), 1e-12)[0][s_i, a_i] for v in np.linspace(0, 0.95, 8)]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def test_assumption1_examples():
    mdp, spec = build_env1()
    assert check_assumption1(limiting_weights(mdp, 5.0), mdp).ok
    s = spec.state_of((1, 1))
    rep = check_assumption1(concentrated_weights(mdp, s, RIGHT), mdp)
    assert rep.concentration_gap is not None
    mdp2 = two_action_mdp(10.0)
    rep = check_assumption1(concentrated_weights(mdp2, 0, 0), mdp2)
    assert rep.top_pair == (0, 0) and rep.concentration_gap == 0.0
    flat = WeightFunction({(0, 0, 1, -100.0): 0.5, (0, 0, 1, 100.0): 0.5})
    assert not check_assumption1(flat, mdp2).reward_order_ok


def detour_policy(spec):
    pol = np.full(spec.num_states, UP)
    for c in range(4):
        pol[spec.state_of((1, c))] = UP
        pol[spec.state_of((0, c))] = RIGHT
    pol[spec.state_of((0, 4))] = DOWN
    return pol


def corridor_policy(spec):
    pol = np.full(spec.num_states, UP)
    for c in range(4):
        pol[spec.state_of((0, c))] = DOWN
        pol[spec.state_of((1, c))] = RIGHT
    pol[spec.state_of((0, 4))] = DOWN
    return pol


def test_risk_profile_env1():
    mdp, spec = build_env1()
    safe = policy_risk_profile(mdp, detour_policy(spec), np.random.default_rng(0), 2000)
    assert safe.risky_traversal_prob == 0.0 and safe.goal_prob == 1.0
    assert safe.return_std > 0.0  # start positions differ
    corridor = [spec.state_of((1, c)) for c in range(3)]
    risky = policy_risk_profile(mdp, corridor_policy(spec), np.random.default_rng(0), 500, start_states=corridor)
    assert risky.risky_traversal_prob == 1.0
    one = policy_risk_profile(mdp, detour_policy(spec), np.random.default_rng(0), 200,
                              start_states=[spec.state_of((0, 0))])
    assert one.return_std == 0.0 and one.expected_return == 150.0 - 4.0


def test_greedy_path():
    mdp, spec = build_env1()
    move = lambda s, a: spec.state_of(spec.move(spec.cell_of(s), a))
    path = greedy_path(mdp, corridor_policy(spec), spec.state_of((1, 0)), move)
    assert [spec.cell_of(s) for s, _ in path] == [(1, 0), (1, 1), (1, 2), (1, 3)]
    stuck = greedy_path(mdp, np.zeros(spec.num_states, dtype=int), spec.state_of((1, 0)), move)
    assert [spec.cell_of(s) for s, _ in stuck] == [(1, 0), (0, 0)]
