"""Prioritized experience replay backed by an array sum tree.

Entry ``i`` is sampled with probability ``p_i**alpha / sum_j p_j**alpha``
(independent draws, with replacement).  ``alpha = 0`` gives uniform replay.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError, ReplayStateError


class SumTree:
    """Complete binary tree over a power-of-two leaf array.

    Internal nodes are recomputed from their children on every update rather
    than adjusted by deltas, so totals never drift.
    """

    def __init__(self, capacity):
        size = 1
        while size < capacity:
            size *= 2
        self.leaves = size
        self.tree = np.zeros(2 * size)

    @property
    def total(self):
        return self.tree[1]

    def set(self, indices, values):
        idx = np.asarray(indices, dtype=np.int64) + self.leaves
        self.tree[idx] = values
        # all leaves share one depth; duplicate parents just get the same sum twice
        while idx[0] > 1:
            idx = idx // 2
            self.tree[idx] = self.tree[2 * idx] + self.tree[2 * idx + 1]

    def get(self, indices):
        return self.tree[np.asarray(indices, dtype=np.int64) + self.leaves]

    def find(self, mass):
        """Leaf index whose cumulative-sum interval contains each ``mass`` value."""
        mass = np.array(mass, dtype=np.float64)
        node = np.ones(mass.shape, dtype=np.int64)
        while node[0] < self.leaves:
            left = 2 * node
            left_sum = self.tree[left]
            go_right = mass >= left_sum
            mass = np.where(go_right, mass - left_sum, mass)
            node = np.where(go_right, left + 1, left)
        return node - self.leaves


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with proportional priorities."""

    def __init__(self, capacity, alpha=0.7, beta=1e-3, priority_floor=1e-6):
        if capacity < 1:
            raise ContractError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.priority_floor = float(priority_floor)
        self.max_priority_seen = 1.0
        self.priorities = np.zeros(self.capacity)
        self._tree = SumTree(self.capacity)
        self._data = None
        self._next = 0
        self.size = 0

    def __len__(self):
        return self.size

    def _allocate(self, exp):
        state = np.asarray(exp.state, dtype=np.float64)
        action = np.asarray(exp.action, dtype=np.int64)
        self._data = {
            "state": np.zeros((self.capacity,) + state.shape),
            "action": np.zeros((self.capacity,) + action.shape, dtype=np.int64),
            "reward": np.zeros(self.capacity),
            "next_state": np.zeros((self.capacity,) + state.shape),
            "terminal": np.zeros(self.capacity, dtype=bool),
        }

    def push(self, exp):
        """Store a transition with the largest priority seen so far."""
        if self._data is None:
            self._allocate(exp)
        i = self._next
        d = self._data
        d["state"][i] = exp.state
        d["action"][i] = exp.action
        d["reward"][i] = exp.reward
        d["next_state"][i] = exp.next_state
        d["terminal"][i] = exp.terminal
        self._set_priority(np.array([i]), np.array([self.max_priority_seen]))
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _set_priority(self, idx, prio):
        self.priorities[idx] = prio
        self._tree.set(idx, prio ** self.alpha)

    def probabilities(self):
        """Current sampling distribution over the stored entries."""
        p = self.priorities[:self.size] ** self.alpha
        return p / p.sum()

    def sample(self, batch_size, rng):
        """Draw ``batch_size`` entries; returns ``(indices, batch dict, weights)``.

        Importance weights ``(N * P(i))**-beta`` are normalized by the batch max.
        """
        if self.size == 0:
            raise ReplayStateError("cannot sample from an empty replay buffer")
        total = self._tree.total
        mass = rng.random(batch_size) * total
        idx = self._tree.find(mass)
        # guard against landing on an empty leaf through rounding at the top end
        idx = np.minimum(idx, self.size - 1)
        probs = self._tree.get(idx) / total
        weights = (self.size * probs) ** (-self.beta)
        weights /= weights.max()
        batch = {k: v[idx] for k, v in self._data.items()}
        return idx, batch, weights

    def update_priorities(self, indices, td_errors):
        idx = np.asarray(indices, dtype=np.int64)
        if np.any(idx < 0) or np.any(idx >= self.size):
            raise ContractError(f"priority index out of range 0..{self.size - 1}")
        prio = np.abs(np.asarray(td_errors, dtype=np.float64)) + self.priority_floor
        # duplicates in a batch: the last write wins, as with sequential updates
        self._set_priority(idx, prio)
        self.max_priority_seen = max(self.max_priority_seen, float(prio.max()))

    def experience(self, i):
        from .envcore import Experience

        d = self._data
        a = d["action"][i]
        return Experience(d["state"][i].copy(), int(a) if a.ndim == 0 else a.copy(),
                          float(d["reward"][i]), d["next_state"][i].copy(), bool(d["terminal"][i]))
