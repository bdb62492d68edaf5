"""Learning a correction on top of a deliberately wrong value function.

Run: python3 demos/02_correcting_a_wrong_prior.py

A five-state random MDP is small enough to solve exactly.  We hand the
correction learner a prior that prefers the wrong action in every state and
watch the learned delta undo the damage.  With the exact Q* as prior the
correction stays close to zero.
"""
import numpy as np

from qcorrect.corrections import CorrectionSpec, greedy_policy, train_correction
from qcorrect.envcore import Step
from qcorrect.numerics import forward
from qcorrect.qlearn import DqnConfig

rng = np.random.default_rng(0)
n_states, n_actions, gamma = 5, 2, 0.9


def solve(T, R):
    q = np.zeros_like(R)
    for _ in range(2000):
        q = R + gamma * T @ q.max(axis=1)
    return q


# redraw until the optimal action is clearly separated in every state
while True:
    T = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    R = rng.random((n_states, n_actions))
    q_star = solve(T, R)
    gaps = np.abs(q_star[:, 0] - q_star[:, 1])
    if gaps.min() > 0.1:
        break
print("Q* =\n", q_star.round(3))
print("optimal actions:", q_star.argmax(axis=1))


class Tabular:
    """The MDP above with one-hot observations and 20-step episodes."""

    observation_dim, action_count = n_states, n_actions
    agent_count, discount, max_steps = 1, gamma, 20

    def reset(self, rng):
        return int(rng.integers(n_states))

    def observe(self, s):
        return np.eye(n_states)[s]

    def step(self, s, a, rng):
        return Step(int(rng.choice(n_states, p=T[s, a])), float(R[s, a]), False, "")


cfg = DqnConfig(total_train_steps=10_000, buffer_capacity=10_000, target_update_frequency=200, learning_rate=1e-3,
                hidden_layers=(32,), discount=gamma, alpha=0.0, batch_size=64)
states = np.eye(n_states)

# the prior adds +1 to the worse action everywhere
wrong = q_star.copy()
wrong[np.arange(n_states), q_star.argmin(axis=1)] += 1.0
print("\nprior's actions:  ", wrong.argmax(axis=1))
spec, log = train_correction(Tabular(), CorrectionSpec(lambda o: np.asarray(o) @ wrong, cfg))
policy = greedy_policy(spec)
print("corrected actions:", [policy(s) for s in states])
print("learned delta =\n", forward(spec.deltas[0], states).round(3))
print("final logged TD loss %.5f" % log[-1].loss)

# a perfect prior leaves nothing to learn
spec, _ = train_correction(Tabular(), CorrectionSpec(lambda o: np.asarray(o) @ q_star, cfg))
print("\nwith Q* as prior, mean |delta| = %.4f" % np.abs(forward(spec.deltas[0], states)).mean())
