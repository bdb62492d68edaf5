import numpy as np
import pytest
from hypothesis import given, strategies as st

from qcorrect.envcore import (Step, epsilon_greedy, epsilon_schedule, make_rng, rollout, write_trace_csv)
from qcorrect.errors import ContractError


class ScriptedEnv:
    """Deterministic reward sequence, terminal at its end."""

    action_count = 2
    observation_dim = 1
    agent_count = 1
    max_steps = 50

    def __init__(self, rewards, discount=0.99, noisy=False):
        self.rewards = rewards
        self.discount = discount
        self.noisy = noisy

    def reset(self, rng):
        return (0, rng.normal() if self.noisy else 0.0)

    def observe(self, s):
        return np.array([s[0] + s[1]])

    def step(self, s, a, rng):
        t = s[0] + 1
        nxt = (t, rng.normal() if self.noisy else 0.0)
        done = t >= len(self.rewards)
        return Step(nxt, self.rewards[t - 1], done, "end" if done else "")


def test_immediate_termination():
    res = rollout(ScriptedEnv([1.0]), lambda o: 0, make_rng(0))
    assert res.discounted_return == 1.0 and res.step_count == 1 and len(res.trace) == 1


def test_discounted_return():
    res = rollout(ScriptedEnv([0.0, 0.0, 1.0], 0.99), lambda o: 0, make_rng(0))
    assert res.discounted_return == pytest.approx(0.9801, abs=1e-15)
    assert res.undiscounted_return == 1.0
    assert res.step_count == 3


def test_rollout_deterministic_under_seed():
    env = ScriptedEnv([0.1] * 10, noisy=True)
    a = rollout(env, lambda o: int(o[0] > 3), make_rng(5))
    b = rollout(env, lambda o: int(o[0] > 3), make_rng(5))
    assert [e.state.tobytes() for e in a.trace] == [e.state.tobytes() for e in b.trace]


def test_rollout_truncates_at_max_steps():
    res = rollout(ScriptedEnv([0.0] * 10), lambda o: 0, make_rng(0), max_steps=4)
    assert res.step_count == 4 and res.outcome_label == "max_steps"


def test_bad_action_is_contract_violation():
    with pytest.raises(ContractError):
        rollout(ScriptedEnv([0.0]), lambda o: 2, make_rng(0))


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=15))
def test_undiscounted_equals_discounted_at_gamma_one(rewards):
    res = rollout(ScriptedEnv(rewards, discount=1.0), lambda o: 0, make_rng(0))
    assert res.discounted_return == res.undiscounted_return


def test_epsilon_zero_is_greedy_and_ties_go_low():
    pol = epsilon_greedy(lambda o: np.array([1.0, 1.0, 0.5]), 0.0, make_rng(0))
    assert all(pol(None) == 0 for _ in range(20))
    pol = epsilon_greedy(lambda o: np.array([0.0, 3.0]), 0.0, make_rng(0))
    assert pol(None) == 1


def test_epsilon_one_is_uniform():
    n, k = 10_000, 4
    pol = epsilon_greedy(lambda o: np.arange(k, dtype=float), 1.0, make_rng(1))
    counts = np.bincount([pol(None) for _ in range(n)], minlength=k)
    sigma = np.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) < 3 * sigma)


def test_epsilon_greedy_joint_actions():
    q = np.array([[0.0, 1.0], [2.0, 1.0], [0.5, 0.5]])
    pol = epsilon_greedy(lambda o: q, 0.0, make_rng(0))
    assert list(pol(None)) == [1, 0, 0]


def test_epsilon_range_checked():
    with pytest.raises(ContractError):
        epsilon_greedy(lambda o: np.zeros(2), 1.5, make_rng(0))


def test_schedule_examples():
    assert epsilon_schedule(0, 1000, 0.2, 0.05) == 1.0
    assert epsilon_schedule(200, 1000, 0.2, 0.05) == 0.05
    assert epsilon_schedule(100, 1000, 0.2, 0.05) == pytest.approx(0.525)
    assert epsilon_schedule(999, 1000, 0.2, 0.05) == 0.05
    assert epsilon_schedule(0, 1000, 0.0, 0.01) == 0.01


@given(st.integers(0, 2000), st.integers(0, 2000), st.floats(0, 1), st.floats(0, 1))
def test_schedule_nonincreasing(s1, s2, frac, final):
    lo, hi = sorted((s1, s2))
    assert epsilon_schedule(hi, 1000, frac, final) <= epsilon_schedule(lo, 1000, frac, final) + 1e-12


def test_trace_csv(tmp_path):
    res = rollout(ScriptedEnv([0.0, 2.0]), lambda o: 1, make_rng(0))
    write_trace_csv(res, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "step,s0,action,reward,terminal"
    assert lines[2].endswith(",1,2.0,1")
