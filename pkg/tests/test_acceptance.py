"""One check per acceptance criterion, at the pinned tolerances.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import time

import numpy as np
import pytest

from replay_shaper.baselines import kappa_grid, kappa_sweep, run_risk_sensitive_q, RiskSensitiveConfig, td_histogram
from replay_shaper.experiment import ExperimentConfig, far_start, resolve_env, run_one
from replay_shaper.learner import LearnerConfig, greedy_policy
from replay_shaper.mdp import DOWN, RIGHT, LEFT, UP
from replay_shaper.operators import bellman_model, fixed_point
from replay_shaper.safety import policy_risk_profile
from replay_shaper.verify import run_suite

SEEDS = (0, 1, 2)
EPISODES = 50_000


def fmt(x, digits=4):
    return f"{x:.{digits}g}" if isinstance(x, float) else str(x)


def _suite(name):
    res = run_suite(name)
    asserted = [c for c in res.checks if c.asserted]
    return res, asserted


def _toward_cliff(spec):
    """(state, action) pairs whose intended move lands on a cliff cell."""
    out = set()
    for r in range(spec.rows):
        for c in range(spec.cols):
            if (r, c) in spec.terminal_cells:
                continue
            for a in (UP, RIGHT, DOWN, LEFT):
                if spec.move((r, c), a) in spec.cliff:
                    out.add((spec.state_of((r, c)), a))
    return out


@pytest.fixture(scope="module")
def env1_runs():
    cfg = ExperimentConfig(env="env1", episodes=EPISODES, mc_episodes=2000)
    env = resolve_env(cfg)
    runs = {}
    for seed in SEEDS:
        for algo in ("replay", "plain", "worst_case"):
            t = time.perf_counter()
            r = run_one(cfg, algo, seed, env)
            runs[algo, seed] = (r, time.perf_counter() - t)
    return env, runs


@pytest.fixture(scope="module")
def env2_runs():
    cfg = ExperimentConfig(env="env2", episodes=EPISODES, mc_episodes=10_000)
    env = resolve_env(cfg)
    runs = {}
    for seed in SEEDS:
        for algo in ("replay", "plain", "worst_case"):
            runs[algo, seed] = run_one(cfg, algo, seed, env)
    return env, runs


def test_criterion1_env1_safety(env1_runs, acceptance):
    (mdp, spec), runs = env1_runs
    corridor = [spec.state_of(cell) for cell, _ in sorted(spec.risky)]
    parts, ok = [], True
    for seed in SEEDS:
        rep, secs = runs["replay", seed]
        plain, _ = runs["plain", seed]
        covered = set(rep.risk.by_start) == set(mdp.nonterminal_states)
        rep_zero = covered and all(d["risky_traversal_prob"] == 0.0 for d in rep.risk.by_start.values())
        plain_one = all(plain.risk.by_start[s]["risky_traversal_prob"] == 1.0 for s in corridor)
        seed_ok = rep_zero and plain_one and secs <= 60.0
        ok &= seed_ok
        parts.append(f"seed {seed}: replay risky={fmt(rep.risk.risky_traversal_prob)} "
                     f"plain corridor risky={[plain.risk.by_start[s]['risky_traversal_prob'] for s in corridor]} "
                     f"runtime={secs:.1f}s")
    acceptance(1, ok, "env1 replay avoids risky pairs from every start, plain takes them from the corridor; "
               + "; ".join(parts))
    assert ok


def test_criterion2_env2_safety(env2_runs, acceptance):
    (mdp, spec), runs = env2_runs
    bad = _toward_cliff(spec)
    parts, ok = [], True
    for seed in SEEDS:
        rep, plain = runs["replay", seed], runs["plain", seed]
        ratio = rep.risk.catastrophe_prob / plain.risk.catastrophe_prob
        path_ok = not any(step in bad for step in rep.far_path)
        ok &= ratio <= 0.5 and path_ok
        far = rep.risk.by_start.get(far_start(spec), {}).get("catastrophe_prob")
        parts.append(f"seed {seed}: fall replay={fmt(rep.risk.catastrophe_prob)} plain={fmt(plain.risk.catastrophe_prob)} "
                     f"ratio={ratio:.3f} (<= 0.5) far-start path clear={path_ok} far-start replay fall={fmt(far)}")
    acceptance(2, ok, "env2 cliff-fall ratio replay/plain at most 0.5 and far-start path avoids the cliff; "
               + "; ".join(parts))
    assert ok


def test_criterion3_contraction(acceptance):
    res, asserted = _suite("contraction")
    worst = max((c.value - c.threshold for c in asserted if isinstance(c.value, float) and c.threshold is not None),
                default=float("nan"))
    acceptance(3, res.passed, f"{len(asserted)} models, max ratio minus (gamma + 1e-10) = {worst:.3g}")
    assert res.passed, res.failures


def test_criterion4_identity(acceptance):
    res, asserted = _suite("identity")
    detail = ", ".join(f"{c.name}={fmt(c.value)}" for c in asserted)
    acceptance(4, res.passed, detail)
    assert res.passed, res.failures


def test_criterion5_theorem1(acceptance):
    res, _ = _suite("theorem1")
    detail = ", ".join(f"{c.name}={fmt(c.value)}" + ("" if c.threshold is None else f" (<= {fmt(c.threshold)})")
                       + ("" if c.asserted else " [diagnostic]") for c in res.checks)
    acceptance(5, res.passed, detail)
    assert res.passed, res.failures


def test_criterion6_lemma4(acceptance):
    res, asserted = _suite("lemma4")
    detail = ", ".join(f"{c.name}={c.value}" for c in asserted if "weight_distance" in c.name)
    acceptance(6, res.passed, detail)
    assert res.passed, res.failures


def test_criterion7_theorem2(acceptance):
    res, asserted = _suite("theorem2")
    detail = ", ".join(f"{c.name}={fmt(c.value)}" for c in asserted)
    acceptance(7, res.passed, detail)
    assert res.passed, res.failures


def test_criterion8_noise(acceptance):
    res, asserted = _suite("noise")
    fails = [c.name for c in asserted if not c.passed]
    acceptance(8, res.passed, f"{len(asserted)} checks over 20 tuples x 1e5 samples, failing: {fails or 'none'}")
    assert res.passed, res.failures


def test_criterion9_baselines(env1_runs, env2_runs, acceptance):
    (mdp1, spec1), runs1 = env1_runs
    (mdp2, spec2), runs2 = env2_runs
    q_plain, _ = fixed_point(bellman_model(mdp1))
    target = greedy_policy(q_plain)
    live = mdp1.nonterminal_states

    # (a) worst-case on env1 against the converged plain policy
    a_ok, a_parts = True, []
    for seed in SEEDS:
        wc = runs1["worst_case", seed][0].policy
        learned = runs1["plain", seed][0].policy
        same = all(wc[s] == target[s] for s in live)
        a_ok &= same
        a_parts.append(f"seed {seed}: equal={same} (learned plain agrees on "
                       f"{sum(int(wc[s] == learned[s]) for s in live)}/{len(live)} states)")

    # (b) worst-case on env2 falls less often than plain
    b_ok, b_parts = True, []
    for seed in SEEDS:
        wc, pl = runs2["worst_case", seed].risk, runs2["plain", seed].risk
        b_ok &= wc.catastrophe_prob < pl.catastrophe_prob
        b_parts.append(f"seed {seed}: {fmt(wc.catastrophe_prob)} < {fmt(pl.catastrophe_prob)}")

    # (c) kappa sweep on env1 contains a detour policy
    def evaluate1(pol):
        return policy_risk_profile(mdp1, pol, np.random.default_rng(0), 1000).to_dict()

    def label1(pol):
        return "detour" if evaluate1(pol)["risky_traversal_prob"] == 0.0 else "corridor"

    lc = LearnerConfig(episodes=EPISODES, seed=0)
    rows = kappa_sweep(mdp1, lc, kappa_grid(), evaluate1, label1, seed=0)
    detours = [r.kappa for r in rows if r.label == "detour"]
    c_ok = bool(detours)

    # env2 diagnostic: policy labels and TD-error histograms for a few kappa values
    diag = []
    plain_fall = np.mean([runs2["plain", s].risk.catastrophe_prob for s in SEEDS])
    for k in (-0.5, 0.5, 0.9):
        Q, log = run_risk_sensitive_q(mdp2, RiskSensitiveConfig(k, LearnerConfig(episodes=EPISODES, seed=0)),
                                      np.random.default_rng(0))
        risk = policy_risk_profile(mdp2, greedy_policy(Q), np.random.default_rng([0, 1]), 10_000,
                                   catastrophe_states=spec2.cliff_states)
        hist = td_histogram(log.td_errors)
        lab = "cliff-avoiding" if risk.catastrophe_prob <= 0.5 * plain_fall else "cliff-edge"
        diag.append(f"kappa {k}: {lab} fall={fmt(risk.catastrophe_prob)} td-hist peak bin "
                    f"{int(np.argmax(hist['counts']))}/{len(hist['counts'])}")

    ok = a_ok and b_ok and c_ok
    acceptance(9, ok, f"(a) worst-case env1 equals converged plain policy: {a_ok} [{'; '.join(a_parts)}]; "
               f"(b) worst-case env2 fall below plain: {b_ok} [{'; '.join(b_parts)}]; "
               f"(c) kappa sweep has a detour: {c_ok} ({len(detours)}/{len(rows)} kappas, "
               f"range {min(detours, default=None)}..{max(detours, default=None)}); "
               f"env2 diagnostic (plain fall {plain_fall:.4f}): {'; '.join(diag)}")
    assert ok
