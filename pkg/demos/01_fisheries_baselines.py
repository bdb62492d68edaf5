"""Fixed-effort harvesting on the ten-boat fishery.

Run: python3 demos/01_fisheries_baselines.py

Every boat fishes the same fraction of its region each season.  Fishing
hard empties the sea within a few seasons; fishing lightly leaves money on
the table.  A fraction of 0.3 is close to the best any single fixed rule can do.
"""
import numpy as np

from qcorrect import fisheries as fz
from qcorrect import harness
from qcorrect.envcore import make_rng, rollout

env = fz.FisheriesEnv()

# One season by hand: ten regions holding an equal share of 150,000 fish.
state = env.reset()
print("initial stock per region:", state.fish[0])
step = env.step(state, np.full(10, fz.action_index(0.3)), make_rng(0))
print("after one season at a=0.3: reward %.4f, stock per region %.0f" % (step.reward, step.state.fish[0]))

# The logistic growth curve is what makes restraint pay off.
for f in (5e4, 1.5e5, 2.5e5):
    print("stock %8.0f grows to %9.1f" % (f, fz.grow(f, env.params)))

# 100 seeded seasons-long episodes per policy.
policies = [("random", harness.stochastic(lambda rng: fz.random_policy(rng)))]
policies += [(f"a={a}", fz.fixed_policy(a)) for a in (1.0, 0.5, 0.3, 0.1)]
print()
print("%-8s %8s %8s %s" % ("policy", "return", "stderr", "seasons survived (mean)"))
for name, pol in policies:
    rep = harness.evaluate(env, pol, 100)
    seasons = np.mean([e["steps"] for e in rep.episodes])
    print("%-8s %8.2f %8.3f %5.1f" % (name, rep.mean_return, rep.return_stderr, seasons))

# A single collapse, step by step.
res = rollout(env, fz.fixed_policy(1.0), make_rng(1))
print()
print("greedy a=1.0 ends after %d seasons: %s" % (res.step_count, res.outcome_label))
