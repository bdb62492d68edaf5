"""Additive corrections to a frozen low-fidelity value function.

The corrected value is ``Q_lo(s, a) + delta(s, a; theta)``.  Only ``delta`` is
trained, with the same double-Q / target-network / prioritized-replay machinery
as plain DQN; ``Q_lo`` is evaluated but never touched.  With one correction
network per agent, agent ``i`` uses ``Q_lo_i(s, a_i) + delta_i(s, a_i)`` and
the joint action is the per-agent argmax.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .fusion import FusedQ
from .qlearn import DqnConfig, DqnTrainer
from .numerics import forward


@dataclass
class CorrectionSpec:
    """``q_lo`` maps an observation batch ``(B, d)`` to ``(B, A)`` values, or to
    ``(B, n_agents, A)`` when ``per_agent`` is set.  ``deltas`` holds the
    trainable networks (created by the trainer when ``None``).  ``q_lo_ref``
    records which checkpoint ``q_lo`` came from (path and content hash).

    With ``zero_init`` freshly created correction networks get a zero output
    layer, so training starts from the low-fidelity policy itself.
    """

    q_lo: object
    cfg: DqnConfig = field(default_factory=DqnConfig)
    deltas: list | None = None
    per_agent: bool = False
    q_lo_ref: dict | None = None
    zero_init: bool = True


def fused_low_fidelity(fq: FusedQ, per_agent=False):
    """``q_lo`` callable from a fusion: the fused vector, or per-entity values
    when every entity is an agent choosing its own local action."""
    if fq.correction is not None:
        raise ShapeError("low-fidelity fusion must not carry its own correction")
    return fq.entity_values if per_agent else fq.fuse


def _q_lo_batch(spec, obs):
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    return np.asarray(spec.q_lo(obs), dtype=np.float64)


def corrected_q(spec: CorrectionSpec, s):
    """``Q_lo + delta`` at one observation: a vector, or ``(n_agents, A)``."""
    if spec.deltas is None:
        raise ShapeError("correction networks not initialised; train first or pass deltas")
    s = np.asarray(s, dtype=np.float64)
    lo = _q_lo_batch(spec, s)[0]
    if spec.per_agent:
        if lo.shape[0] != len(spec.deltas):
            raise ShapeError(f"q_lo gives {lo.shape[0]} agents but there are {len(spec.deltas)} corrections")
        return lo + np.stack([forward(d, s) for d in spec.deltas])
    return lo + forward(spec.deltas[0], s)


def greedy_policy(spec: CorrectionSpec):
    def policy(obs):
        q = corrected_q(spec, obs)
        return int(np.argmax(q)) if q.ndim == 1 else np.argmax(q, axis=1)

    return policy


def make_trainer(env, spec: CorrectionSpec):
    n = getattr(env, "agent_count", 1)
    if spec.per_agent != (n > 1):
        raise ShapeError("per_agent corrections require a multi-agent environment (and vice versa)")

    def prior(obs):
        return _q_lo_batch(spec, obs)

    fresh = spec.deltas is None
    trainer = DqnTrainer(env, spec.cfg, prior=prior, nets=spec.deltas)
    if fresh and spec.zero_init:
        for net in trainer.nets:
            net.weights[-1][...] = 0.0
            net.biases[-1][...] = 0.0
        trainer.sync_targets()
    spec.deltas = trainer.nets
    return trainer


def correction_train_step(trainer: DqnTrainer):
    """One prioritized minibatch update of the correction networks; returns the loss."""
    return trainer.train_step()


def train_correction(env, spec: CorrectionSpec, on_step=None):
    """Run the correction learner for ``spec.cfg.total_train_steps`` env steps.

    Returns ``(spec, log)``; ``spec.deltas`` holds the trained networks.
    """
    trainer = make_trainer(env, spec).run(on_step)
    return spec, trainer.log
