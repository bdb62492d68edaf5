"""Method recipes for the two environments.

Fisheries networks have one hidden layer of 16 units, crosswalk networks
five layers of 32.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import crosswalk as cw
from . import fisheries as fz
from .corrections import CorrectionSpec, fused_low_fidelity, greedy_policy, make_trainer
from .fusion import FusedQ, FusionRule, joint_argmax_sum
from .numerics import forward
from .qlearn import DqnConfig, DqnTrainer


def fisheries_config(**overrides):
    return replace(DqnConfig(), **overrides)


def crosswalk_config(**overrides):
    base = DqnConfig(total_train_steps=1_000_000, buffer_capacity=400_000, target_update_frequency=5_000,
                     hidden_layers=(32,) * 5, exploration_fraction=0.5, final_epsilon=0.01)
    return replace(base, **overrides)


# best exploration schedules found for the crosswalk corrections: starting from
# the fused policy leaves little to explore
CORRECTION_EXPLORATION = {FusionRule.MAX_MIN: (0.0, 0.01), FusionRule.MAX_SUM: (0.2, 0.0)}


def crosswalk_correction_config(rule, **overrides):
    frac, final = CORRECTION_EXPLORATION[FusionRule(rule)]
    return crosswalk_config(**{"total_train_steps": 500_000, "exploration_fraction": frac, "final_epsilon": final,
                               **overrides})


def greedy(q):
    """Greedy policy over ``q(obs)``: argmax of a vector, row-wise for a matrix."""

    def policy(obs):
        v = np.asarray(q(obs))
        return int(np.argmax(v)) if v.ndim == 1 else np.argmax(v, axis=1)

    return policy


def frozen_heads(nets):
    """Value function over copies of ``nets`` (a vector for one net)."""
    nets = [n.copy() for n in nets]
    if len(nets) == 1:
        return lambda obs: forward(nets[0], obs)
    return lambda obs: np.stack([forward(n, obs) for n in nets])


# fisheries ----------------------------------------------------------------

def train_single_boat(params=fz.FisheriesParams(), cfg=None, on_step=None):
    cfg = fisheries_config(total_train_steps=100_000) if cfg is None else cfg
    trainer = DqnTrainer(fz.single_boat_env(params), cfg).run(on_step)
    return trainer.nets[0], trainer.log


def max_sum_fusion(single_net, params=fz.FisheriesParams()):
    """Every region valued by the single-boat network."""
    return FusedQ(fz.region_slicers(params.n_boats), [single_net] * params.n_boats, FusionRule.MAX_SUM)


def max_sum_policy(single_net, params=fz.FisheriesParams()):
    fq = max_sum_fusion(single_net, params)
    return lambda obs: joint_argmax_sum(fq.entity_values(obs))


def train_decomposed(params=fz.FisheriesParams(), cfg=None, on_step=None):
    """One Q head per boat on the global state and global reward."""
    cfg = fisheries_config() if cfg is None else cfg
    trainer = DqnTrainer(fz.FisheriesEnv(params), cfg).run(on_step)
    return trainer.nets, trainer.log


def decomposed_policy(nets):
    return greedy(frozen_heads(nets))


def fisheries_correction_spec(single_net, params=fz.FisheriesParams(), cfg=None, q_lo_ref=None):
    cfg = fisheries_config(total_train_steps=60_000) if cfg is None else cfg
    fq = max_sum_fusion(single_net, params)
    return CorrectionSpec(fused_low_fidelity(fq, per_agent=True), cfg, per_agent=True, q_lo_ref=q_lo_ref)


def train_fisheries_correction(single_net, params=fz.FisheriesParams(), cfg=None, on_step=None, q_lo_ref=None):
    spec = fisheries_correction_spec(single_net, params, cfg, q_lo_ref)
    trainer = make_trainer(fz.FisheriesEnv(params), spec).run(on_step)
    return spec, trainer.log


# crosswalk ------------------------------------------------------------------

def train_single_pedestrian(params=cw.CrosswalkParams(), cfg=None, on_step=None):
    cfg = crosswalk_config(total_train_steps=500_000) if cfg is None else cfg
    trainer = DqnTrainer(cw.single_pedestrian_env(params), cfg).run(on_step)
    return trainer.nets[0], trainer.log


def pedestrian_fusion(single_net, rule, params=cw.CrosswalkParams()):
    """Fuse the single-pedestrian network over every pedestrian slot."""
    return FusedQ(cw.pedestrian_slicers(params), [single_net] * params.max_pedestrians, rule)


def train_crosswalk_dqn(params=cw.CrosswalkParams(), cfg=None, on_step=None):
    cfg = crosswalk_config() if cfg is None else cfg
    trainer = DqnTrainer(cw.CrosswalkEnv(params), cfg).run(on_step)
    return trainer.nets[0], trainer.log


def crosswalk_correction_spec(single_net, rule, params=cw.CrosswalkParams(), cfg=None, q_lo_ref=None):
    cfg = crosswalk_correction_config(rule) if cfg is None else cfg
    fq = pedestrian_fusion(single_net, rule, params)
    return CorrectionSpec(fused_low_fidelity(fq), cfg, q_lo_ref=q_lo_ref)


def train_crosswalk_correction(single_net, rule, params=cw.CrosswalkParams(), cfg=None, on_step=None,
                               q_lo_ref=None):
    spec = crosswalk_correction_spec(single_net, rule, params, cfg, q_lo_ref)
    trainer = make_trainer(cw.CrosswalkEnv(params), spec).run(on_step)
    return spec, trainer.log


def corrected_policy(spec: CorrectionSpec):
    """Greedy policy over ``Q_lo + delta`` with the correction networks copied."""
    frozen = replace(spec, deltas=[d.copy() for d in spec.deltas])
    return greedy_policy(frozen)
