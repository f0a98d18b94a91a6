"""
Checking the operator numerically
=================================

The replay-biased Bellman operator should contract, collapse to the plain one
without replay, and have zero-mean sampling noise.  The verification suites
test each of these on random models.
"""

# %%
import numpy as np

from replay_shaper import build_env1, effective_model, fixed_point, limiting_weights
from replay_shaper.operators import bellman_model, contraction_check
from replay_shaper.verify import run_suite

mdp, spec = build_env1()
w = limiting_weights(mdp, beta=5.0)
model = effective_model(mdp, w, v=0.5)
print("max contraction ratio:", contraction_check(model, np.random.default_rng(0)), "gamma:", mdp.gamma)

# %%
# The fixed point of the shaped model prefers the detour; the plain one does not.
q_shaped, _ = fixed_point(model)
q_plain, _ = fixed_point(bellman_model(mdp))
corridor = spec.state_of((1, 0))
print("Q at (1,0), shaped:", q_shaped[corridor].round(2))
print("Q at (1,0), plain: ", q_plain[corridor].round(2))

# %%
# The fast suites.  "theorem1" and "theorem2" take longer.
for name in ("identity", "contraction", "noise", "lemma4"):
    res = run_suite(name)
    print(f"{name:12s} {'PASS' if res.passed else 'FAIL'}  {res.seconds:5.1f}s")
