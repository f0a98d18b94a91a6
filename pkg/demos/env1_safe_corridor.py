"""
Replay that steers around a volatile corridor
=============================================

A 4x5 grid with a goal at the right end of row 1.  The three rightward moves
along that row pay -100 with probability 0.4 and +100 otherwise.  The mean is
positive, so plain Q-learning walks straight through.  Prioritizing the replay of high-variance
pairs and their worst rewards makes the learner route around them.
"""

# %%
# Build the grid and look at the reward variance of each pair.
import numpy as np

from replay_shaper import build_env1
from replay_shaper.experiment import ExperimentConfig, run_one
from replay_shaper.mdp import reward_variances
from replay_shaper.render import policy_ascii, side_by_side

mdp, spec = build_env1()
var = reward_variances(mdp)
print("pairs with nonzero variance:",
      [(spec.cell_of(int(s)), int(a)) for s, a in zip(*np.nonzero(var))])

# %%
# Train both learners on the same seed.  Only the replay probability differs.
cfg = ExperimentConfig(env="env1", episodes=50_000, mc_episodes=2000)
runs = {algo: run_one(cfg, algo, seed=0, env=(mdp, spec)) for algo in ("replay", "plain")}
print(side_by_side({k: policy_ascii(spec, r.policy) for k, r in runs.items()}))

# %%
# Monte Carlo over uniformly drawn start cells.
for algo, r in runs.items():
    print(f"{algo:7s} return {r.risk.expected_return:8.2f} +- {r.risk.return_std:6.2f}"
          f"   risky traversal {r.risk.risky_traversal_prob:.3f}")
