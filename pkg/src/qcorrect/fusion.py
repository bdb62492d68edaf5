"""Utility fusion: combine per-entity value functions into a global one."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ShapeError
from .numerics import ParamNet, forward


class FusionRule(str, Enum):
    MAX_SUM = "max-sum"
    MAX_MIN = "max-min"


@dataclass
class FusedQ:
    """Per-entity value networks over slices of the global state.

    ``slicers[i]`` is an index list selecting entity ``i``'s substate from the
    global observation; ``nets[i]`` evaluates it.  Entities may share a network
    object (evaluated once over all its entities) and slicers may overlap.
    ``correction``, when set, is a network on the full observation whose
    output is added after fusion.
    """

    slicers: list
    nets: list
    rule: FusionRule = FusionRule.MAX_SUM
    correction: ParamNet | None = None
    _groups: list = field(init=False, repr=False)

    def __post_init__(self):
        self.rule = FusionRule(self.rule)
        self.slicers = [np.asarray(s, dtype=np.int64) for s in self.slicers]
        if not self.slicers or len(self.slicers) != len(self.nets):
            raise ShapeError("need one network per entity and at least one entity")
        n_act = {n.output_dim for n in self.nets}
        if len(n_act) != 1:
            raise ShapeError("all entity networks must share the action count")
        for s, n in zip(self.slicers, self.nets):
            if s.size != n.input_dim:
                raise ShapeError(f"slicer of length {s.size} does not match network input dim {n.input_dim}")
        if self.correction is not None and self.correction.output_dim not in n_act:
            raise ShapeError("correction output dim must match the action count")
        # entities grouped by shared network so each network runs once per call
        groups = {}
        for i, n in enumerate(self.nets):
            groups.setdefault(id(n), (n, []))[1].append(i)
        self._groups = [(n, np.array(ix)) for n, ix in groups.values()]
        self.global_dim = int(max(s.max() for s in self.slicers)) + 1

    @property
    def n_entities(self):
        return len(self.slicers)

    @property
    def action_count(self):
        return self.nets[0].output_dim

    def entity_values(self, s):
        """``(..., n_entities, n_actions)`` values ``Q_i(s_i, .)``."""
        s = np.asarray(s, dtype=np.float64)
        if s.shape[-1] < self.global_dim:
            raise ShapeError(f"global state of dim {s.shape[-1]} too short for slicers (need {self.global_dim})")
        lead = s.shape[:-1]
        out = np.empty(lead + (self.n_entities, self.action_count))
        for net, ix in self._groups:
            sub = s[..., np.stack([self.slicers[i] for i in ix])]  # (..., k, d_i)
            vals = forward(net, sub.reshape(-1, net.input_dim))
            out[..., ix, :] = vals.reshape(lead + (ix.size, self.action_count))
        return out

    def fuse(self, s):
        return fuse(self, s)

    __call__ = fuse


def combine(values, rule):
    """Fuse an ``(..., n_entities, n_actions)`` array along the entity axis."""
    rule = FusionRule(rule)
    if rule is FusionRule.MAX_SUM:
        return values.sum(axis=-2)
    return values.min(axis=-2)


def fuse(fq: FusedQ, s):
    """Global action values: sum or elementwise min of entity values, plus the
    correction network's output when one is attached."""
    q = combine(fq.entity_values(s), fq.rule)
    if fq.correction is not None:
        q = q + forward(fq.correction, np.asarray(s, dtype=np.float64))
    return q


def joint_argmax_sum(per_agent_qs):
    """Joint action maximizing ``sum_i Q_i(a_i)``.

    The objective separates over agents, so this is each agent's own argmax
    (lowest index on ties).
    """
    q = np.asarray(per_agent_qs, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] == 0:
        raise ShapeError("expected a non-empty (n_agents, n_actions) array")
    return np.argmax(q, axis=1)
