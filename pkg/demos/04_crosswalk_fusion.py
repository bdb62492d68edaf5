"""Crossing with pedestrians you cannot always see.

Run: python3 demos/04_crosswalk_fusion.py [--steps N]

A network trained with a single pedestrian is reused for every one of the ten
pedestrian slots.  Max-min fusion acts on the most pessimistic slot; max-sum
adds the slots up.  The printed grid shows what the max-min policy does with
the car at 6 m/s as a standing pedestrian's position varies.
"""
import argparse

from qcorrect import crosswalk as cw
from qcorrect import experiments as ex
from qcorrect import harness
from qcorrect.fusion import FusionRule

ap = argparse.ArgumentParser()
ap.add_argument("--steps", type=int, default=30_000, help="single-pedestrian training samples")
args = ap.parse_args()

P = cw.CrosswalkParams()

# occlusion: the parked obstacle hides the near side of the crosswalk from far away
for x in (5.0, 15.0, 24.0):
    print(f"car at x={x:4.1f}: pedestrian at y=-4 visible? {cw.visible(x, -4.0, P)}")

cfg = ex.crosswalk_config(total_train_steps=args.steps, target_update_frequency=1_000, seed=0)
single, _ = ex.train_single_pedestrian(P, cfg)

env = cw.CrosswalkEnv(P, mode=cw.EVALUATION)
for rule in (FusionRule.MAX_MIN, FusionRule.MAX_SUM):
    rep = harness.evaluate(env, ex.greedy(ex.pedestrian_fusion(single, rule, P)), 200)
    print(f"{rule.value:8s} crash {rep.crash_pct:5.1f}%  success {rep.success_pct:5.1f}%  "
          f"time to cross {rep.mean_time_to_cross:5.2f} s")

policy = ex.greedy(ex.pedestrian_fusion(single, FusionRule.MAX_MIN, P))
xs, ys, grid = harness.policy_slice(policy, cw.CrosswalkEnv(P), resolution=(33, 11))
glyph = {0: "B", 1: "b", 2: ".", 3: "+"}  # -4, -2, 0, +2 m/s^2
print("\nmax-min action by car position (columns) and pedestrian position (rows)")
print("B brake hard, b brake, . coast, + accelerate")
for y, row in zip(ys[::-1], grid[::-1]):
    print(f"y={y:+5.1f} " + "".join(glyph[int(a)] for a in row))
print(f"        x from {xs[0]:.0f} to {xs[-1]:.0f} m")
