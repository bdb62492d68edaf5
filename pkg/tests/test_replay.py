import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from qcorrect.envcore import Experience, make_rng
from qcorrect.errors import ContractError, ReplayStateError
from qcorrect.replay import ReplayBuffer, SumTree


def exp(i):
    return Experience(np.array([float(i)]), i % 2, float(i), np.array([i + 1.0]), False)


def filled(n, capacity=None, **kw):
    buf = ReplayBuffer(capacity or n, **kw)
    for i in range(n):
        buf.push(exp(i))
    return buf


def test_push_to_empty():
    buf = filled(1, capacity=4)
    assert len(buf) == 1 and buf.priorities[0] == 1.0


def test_fifo_eviction():
    buf = filled(3, capacity=2)
    assert len(buf) == 2
    stored = sorted(buf.experience(i).reward for i in range(2))
    assert stored == [1.0, 2.0]


def test_new_entries_get_max_priority():
    buf = filled(2, capacity=4)
    buf.update_priorities([0], [5.0 - 1e-6])
    buf.push(exp(9))
    assert buf.priorities[2] == pytest.approx(5.0)


def test_priority_floor_and_abs():
    buf = filled(2)
    buf.update_priorities([0, 1], [0.0, -3.0])
    assert buf.priorities[0] == 1e-6
    assert buf.priorities[1] == 3.0 + 1e-6


def test_update_out_of_range():
    with pytest.raises(ContractError):
        filled(2, capacity=4).update_priorities([3], [1.0])


def test_sample_empty_raises():
    with pytest.raises(ReplayStateError):
        ReplayBuffer(4).sample(2, make_rng(0))


def test_probabilities_by_normalization():
    buf = filled(2, alpha=1.0)
    buf.update_priorities([0, 1], [2.0 - 1e-6, 1.0 - 1e-6])
    assert np.allclose(buf.probabilities(), [2 / 3, 1 / 3])


def test_alpha_zero_uniform():
    buf = filled(3, alpha=0.0)
    buf.update_priorities([0, 1, 2], [10.0, 0.1, 3.0])
    assert np.allclose(buf.probabilities(), 1 / 3)


def test_equal_priorities_sample_uniformly():
    buf = filled(4)
    _, batch, w = buf.sample(10_000, make_rng(3))
    counts = np.bincount(batch["reward"].astype(int), minlength=4)
    assert chisquare(counts).pvalue > 0.01
    assert np.allclose(w, 1.0)


def test_dominant_entry_sampled_most():
    buf = filled(6)
    buf.update_priorities(np.arange(6), [0.1] * 6)
    buf.update_priorities([4], [50.0])
    idx, _, _ = buf.sample(5000, make_rng(1))
    counts = np.bincount(idx, minlength=6)
    assert counts.argmax() == 4 and counts[4] > counts[np.arange(6) != 4].max()


def test_importance_weights_normalized():
    buf = filled(5, beta=0.5)
    buf.update_priorities(np.arange(5), [1.0, 2.0, 3.0, 4.0, 5.0])
    idx, _, w = buf.sample(64, make_rng(2))
    P = buf.probabilities()[idx]
    raw = (5 * P) ** -0.5
    assert np.allclose(w, raw / raw.max())
    assert w.max() == 1.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=40))
def test_sum_tree_total_exact(values):
    tree = SumTree(len(values))
    tree.set(np.arange(len(values)), values)
    assert tree.total == pytest.approx(sum(values), rel=1e-12, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 30), st.integers(1, 80))
def test_capacity_never_exceeded(capacity, n):
    buf = filled(n, capacity=capacity)
    assert len(buf) == min(n, capacity)
    # the oldest surviving entry is number n - capacity
    kept = sorted(buf.experience(i).reward for i in range(len(buf)))
    assert kept[0] == max(0, n - capacity)
