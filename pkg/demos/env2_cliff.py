"""
Cliff walking with slippery moves
=================================

Every move slips to a uniformly random direction one time in ten.  Walking
along the cliff edge is the shortest route but risks a fall.  Compare how often
each learner's greedy policy falls.
"""

# %%
from replay_shaper.experiment import ExperimentConfig, far_start, resolve_env, run_one
from replay_shaper.render import policy_ascii, side_by_side

cfg = ExperimentConfig(env="env2", episodes=50_000, mc_episodes=10_000)
mdp, spec = resolve_env(cfg)

# %%
# Worst-case learning is much slower per episode, so it is left out by default.
algos = ("replay", "plain")  # add "worst_case" for the pessimistic baseline
runs = {a: run_one(cfg, a, seed=1, env=(mdp, spec)) for a in algos}
print(side_by_side({a: policy_ascii(spec, r.policy) for a, r in runs.items()}))

# %%
for a, r in runs.items():
    print(f"{a:7s} fall {r.risk.catastrophe_prob:.4f}  return {r.risk.expected_return:6.2f}")
print("fall ratio:", runs["replay"].risk.catastrophe_prob / runs["plain"].risk.catastrophe_prob)

# %%
# The replay policy's intended path from the far corner of the bottom row.
print([(spec.cell_of(s), "^>v<"[a]) for s, a in runs["replay"].far_path])
print("far start:", spec.cell_of(far_start(spec)))
