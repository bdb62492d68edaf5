"""Generative-model environment contract, episode rollout and exploration.

An environment is any object exposing

* ``action_count`` -- number of (local) actions, indices ``0..action_count-1``
* ``observation_dim`` -- length of the vector returned by ``observe``
* ``discount`` -- in ``(0, 1]``
* ``agent_count`` -- 1 for single-agent problems; ``n`` when an action is a
  vector of ``n`` local action indices (joint action)
* ``max_steps`` -- hard episode cap
* ``reset(rng) -> state``
* ``step(state, action, rng) -> Step``
* ``observe(state) -> np.ndarray`` -- deterministic; noisy sensors draw their
  noise inside ``reset``/``step`` and store it in the state.

All randomness flows through explicitly passed ``numpy.random.Generator``
streams (PCG64 seeded via ``SeedSequence``), so a seed reproduces an episode
exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple

import numpy as np

from .errors import ContractError


class Step(NamedTuple):
    state: Any
    reward: float
    terminal: bool
    outcome: str = ""


@dataclass
class Experience:
    state: np.ndarray
    action: Any  # int, or int array of length agent_count
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class EpisodeResult:
    discounted_return: float
    undiscounted_return: float
    step_count: int
    outcome_label: str
    duration: float = 0.0
    trace: list = field(default_factory=list, repr=False)


def make_rng(seed):
    """PCG64 generator for an integer seed or a ``SeedSequence``."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed, n):
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def check_action(env, action):
    n_agents = getattr(env, "agent_count", 1)
    a = np.asarray(action)
    if n_agents == 1:
        if a.ndim != 0 or not np.issubdtype(a.dtype, np.integer) or not 0 <= int(a) < env.action_count:
            raise ContractError(f"action {action!r} outside 0..{env.action_count - 1}")
        return int(a)
    if a.shape != (n_agents,) or not np.issubdtype(a.dtype, np.integer):
        raise ContractError(f"joint action must be {n_agents} integer indices, got {action!r}")
    if np.any(a < 0) or np.any(a >= env.action_count):
        raise ContractError(f"joint action {action!r} outside 0..{env.action_count - 1}")
    return a.astype(np.int64)


def rollout(env, policy, rng, max_steps=None, record=True):
    """Run one episode of ``policy`` (observation -> action) from ``env.reset``.

    Stops at a terminal state or after ``max_steps`` steps (default
    ``env.max_steps``).  The returned trace holds one ``Experience`` per step.
    """
    max_steps = env.max_steps if max_steps is None else max_steps
    if max_steps < 1:
        raise ContractError("max_steps must be >= 1")
    state = env.reset(rng)
    obs = env.observe(state)
    disc = 1.0
    g_disc = g_total = 0.0
    trace = []
    outcome = ""
    t = 0
    for t in range(1, max_steps + 1):
        action = check_action(env, policy(obs))
        st = env.step(state, action, rng)
        next_obs = env.observe(st.state)
        g_disc += disc * st.reward
        g_total += st.reward
        disc *= env.discount
        if record:
            trace.append(Experience(obs, action, st.reward, next_obs, st.terminal))
        state, obs, outcome = st.state, next_obs, st.outcome
        if st.terminal:
            break
    duration = getattr(env, "elapsed", lambda s: float(t))(state)
    return EpisodeResult(g_disc, g_total, t, outcome or "max_steps", duration, trace)


def argmax_lowest(values):
    """argmax along the last axis; ties go to the lowest index (np.argmax does this)."""
    return np.argmax(values, axis=-1)


def epsilon_greedy(q, epsilon, rng, action_count=None):
    """Wrap an action-value function into an epsilon-greedy policy.

    ``q(obs)`` returns a vector over actions, or an ``(n_agents, n_actions)``
    matrix for a joint action; in the latter case the random branch draws every
    agent's action uniformly and the greedy branch takes each row's argmax.
    One uniform draw decides explore/exploit on every call, whatever ``epsilon``.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ContractError(f"epsilon must be in [0, 1], got {epsilon}")

    def policy(obs):
        values = np.asarray(q(obs))
        explore = rng.random() < epsilon
        if values.ndim == 1:
            if explore:
                return int(rng.integers(values.shape[0]))
            return int(argmax_lowest(values))
        if explore:
            return rng.integers(values.shape[1], size=values.shape[0])
        return argmax_lowest(values)

    return policy


def epsilon_schedule(step, total_steps, exploration_fraction, final_epsilon):
    """Linear decay from 1.0 at step 0 to ``final_epsilon`` at
    ``exploration_fraction * total_steps``, constant afterwards."""
    decay_steps = exploration_fraction * total_steps
    if decay_steps <= 0 or step >= decay_steps:
        return float(final_epsilon)
    return 1.0 + (step / decay_steps) * (final_epsilon - 1.0)


def write_trace_csv(result: EpisodeResult, path):
    """Episode trace as CSV: step, state components, action, reward, terminal."""
    if not result.trace:
        raise ValueError("episode has no recorded trace")
    dim = np.asarray(result.trace[0].state).size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", *[f"s{i}" for i in range(dim)], "action", "reward", "terminal"])
        for t, e in enumerate(result.trace):
            a = e.action if np.ndim(e.action) == 0 else " ".join(str(int(v)) for v in e.action)
            w.writerow([t, *(repr(float(v)) for v in np.ravel(e.state)), a, repr(float(e.reward)), int(e.terminal)])
