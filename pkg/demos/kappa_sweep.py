"""
Sweeping the risk-sensitivity of asymmetric TD updates
======================================================

Scaling negative TD errors up and positive ones down makes Q-learning
pessimistic.  On the volatile-corridor grid some settings find the detour.
"""

# %%
import numpy as np

from replay_shaper import LearnerConfig, build_env1
from replay_shaper.baselines import kappa_grid, kappa_sweep, write_sweep_csv
from replay_shaper.safety import policy_risk_profile

mdp, spec = build_env1()


def evaluate(pol):
    return policy_risk_profile(mdp, pol, np.random.default_rng(0), 500).to_dict()


def label(pol):
    return "detour" if evaluate(pol)["risky_traversal_prob"] == 0.0 else "corridor"


# %%
# A coarse grid keeps this quick; use step=0.01 for the full sweep.
rows = kappa_sweep(mdp, LearnerConfig(episodes=50_000), kappa_grid(step=0.05), evaluate, label)
for r in rows:
    print(f"kappa {r.kappa:4.2f}  {r.label:8s}  return {r.expected_return:8.2f}")
write_sweep_csv(rows, "kappa_sweep.csv")
