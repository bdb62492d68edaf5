"""From one boat to ten: max-sum fusion, then a learned correction.

Run: python3 demos/03_fisheries_pipeline.py [--full] [--seed N]

1. Train a Q-network for a single boat in a one-region fishery.
2. Let every boat in the ten-region problem act on that network (max-sum).
3. Train a per-boat correction on the full problem while the single-boat
   network stays frozen.

The default budget is a quick 30k + 20k samples.  ``--full`` uses 100k + 60k,
the budget at which the corrected policy is compared with a decomposed DQN
trained from scratch on 160k samples.
"""
import argparse
import time

from qcorrect import experiments as ex
from qcorrect import fisheries as fz
from qcorrect import harness

ap = argparse.ArgumentParser()
ap.add_argument("--full", action="store_true")
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()
single_steps, corr_steps = (100_000, 60_000) if args.full else (30_000, 20_000)

P = fz.FisheriesParams()
env = fz.FisheriesEnv(P)
t0 = time.time()

single, log = ex.train_single_boat(P, ex.fisheries_config(total_train_steps=single_steps, seed=args.seed))
print(f"single boat: {single_steps} samples in {time.time() - t0:.0f}s, final loss {log[-1].loss:.4f}")

# what the single-boat network wants to do at a few stock levels (1.0 = a full region)
actions = fz.FisheriesParams().local_actions
for stock in (0.2, 0.5, 0.8, 1.0):
    q = ex.frozen_heads([single])([stock])
    print(f"  stock {stock:.1f}: harvest {actions[q.argmax()]}")

baseline = harness.evaluate(env, fz.fixed_policy(0.3, P), 100).mean_return
max_sum = harness.evaluate(env, ex.max_sum_policy(single, P), 100).mean_return
print(f"fixed a=0.3: {baseline:.2f}   max-sum fusion: {max_sum:.2f}")

t0 = time.time()
spec, log = ex.train_fisheries_correction(single, P, ex.fisheries_config(total_train_steps=corr_steps,
                                                                         seed=args.seed))
corrected = harness.evaluate(env, ex.corrected_policy(spec), 100).mean_return
print(f"correction: {corr_steps} samples in {time.time() - t0:.0f}s -> {corrected:.2f}")
print("(single seeds are noisy; the acceptance test averages three)")
