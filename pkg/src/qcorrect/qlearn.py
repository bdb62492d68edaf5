"""Deep Q-learning: double-Q targets, target network, prioritized replay.

``DqnTrainer`` handles one or several Q heads.  Every head sees the full
observation and outputs values over the local action set:

* one head, no prior -- plain DQN;
* ``env.agent_count`` heads -- decomposed DQN, joint action by per-head argmax
  (the sum of head values separates over agents);
* a frozen ``prior`` added to every head's output -- the correction learner
  (see :mod:`qcorrect.corrections`); the prior never receives gradients.

Every head is trained on the global reward.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .envcore import Experience, check_action, epsilon_schedule, spawn_rngs
from .errors import ContractError, NumericError
from .numerics import (AdamState, ParamNet, adam_step, forward, forward_stack, grad_stack, net_from_dict,
                       net_to_dict)
from .replay import ReplayBuffer


@dataclass
class DqnConfig:
    total_train_steps: int = 160_000
    buffer_capacity: int = 500_000
    target_update_frequency: int = 2_000
    discount: float = 0.99
    learning_rate: float = 1e-4
    batch_size: int = 32
    exploration_fraction: float = 0.2
    final_epsilon: float = 0.05
    alpha: float = 0.7
    beta: float = 1e-3
    priority_floor: float = 1e-6
    hidden_layers: tuple = (16,)
    dueling: bool = True
    double_q: bool = True
    log_every: int = 100
    seed: int = 0

    def __post_init__(self):
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        positive = ("buffer_capacity", "target_update_frequency", "batch_size", "log_every")
        for name in positive:
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.total_train_steps < 0:
            raise ContractError("total_train_steps must be >= 0")
        if not 0.0 < self.discount <= 1.0:
            raise ContractError("discount must be in (0, 1]")
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be > 0")
        if not 0.0 <= self.exploration_fraction <= 1.0:
            raise ContractError("exploration_fraction must be in [0, 1]")
        if not 0.0 <= self.final_epsilon <= 1.0:
            raise ContractError("final_epsilon must be in [0, 1]")

    def to_dict(self):
        d = asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d


@dataclass
class TrainRecord:
    step: int
    loss: float
    epsilon: float
    evaluation: dict | None = None


def td_target(exp, online, target, discount, prior=None):
    """Double-Q target for one transition.

    ``prior`` (optional) maps an observation to frozen action values added to
    both networks' outputs.
    """
    if exp.terminal:
        return float(exp.reward)
    base = 0.0 if prior is None else np.asarray(prior(exp.next_state), dtype=np.float64)
    a_next = int(np.argmax(base + forward(online, exp.next_state)))
    q_next = base + forward(target, exp.next_state)
    return float(exp.reward + discount * q_next[a_next])


class DqnTrainer:
    """Owns the online/target heads, Adam states, replay buffer and RNG streams.

    ``prior(obs_batch)`` must return ``(B, n_heads, n_actions)`` values.
    """

    def __init__(self, env, cfg: DqnConfig, prior=None, nets=None):
        if not 0.0 < env.discount <= 1.0:
            raise ContractError("environment discount must be in (0, 1]")
        self.env = env
        self.cfg = cfg
        self.prior = prior
        self.n_heads = getattr(env, "agent_count", 1)
        init_rng, self.env_rng, self.explore_rng, self.replay_rng = spawn_rngs(cfg.seed, 4)
        sizes = [env.observation_dim, *cfg.hidden_layers, env.action_count]
        if nets is None:
            nets = [ParamNet(sizes, cfg.dueling, rng=init_rng) for _ in range(self.n_heads)]
        if len(nets) != self.n_heads:
            raise ContractError(f"expected {self.n_heads} networks, got {len(nets)}")
        # head parameters live in the rows of one matrix so all heads update together
        self.template = nets[0]
        self.params = np.stack([n.params for n in nets])
        self.target_params = self.params.copy()
        self.nets = [self._bind(n, self.params, h) for h, n in enumerate(nets)]
        self.targets = [self._bind(n.copy(), self.target_params, h) for h, n in enumerate(nets)]
        self.adam = AdamState(np.zeros_like(self.params), np.zeros_like(self.params), 0, cfg.learning_rate)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, cfg.alpha, cfg.beta, cfg.priority_floor)
        self.env_steps = 0
        self.updates = 0
        self.log: list[TrainRecord] = []
        self._loss_acc = []
        self._state = None
        self._obs = None

    @staticmethod
    def _bind(net, matrix, row):
        if net.n_params != matrix.shape[1]:
            raise ContractError("all heads must share one architecture")
        net.params = matrix[row]
        net._bind()
        return net

    # value functions -------------------------------------------------

    def _prior(self, obs):
        if self.prior is None:
            return None
        p = np.asarray(self.prior(obs), dtype=np.float64)
        return p.reshape(obs.shape[0], self.n_heads, self.env.action_count)

    def q_values(self, obs, use_target=False):
        """``(B, n_heads, n_actions)`` values of prior + head outputs."""
        obs = np.atleast_2d(obs)
        return self._heads(self.target_params if use_target else self.params, obs, self._prior(obs))

    def _heads(self, P, obs, prior=None):
        out = forward_stack(self.template, P, obs).transpose(1, 0, 2)
        return out if prior is None else prior + out

    def greedy_values(self, obs):
        """Values used for acting: a vector for one head, a matrix for several."""
        q = self.q_values(obs)[0]
        return q[0] if self.n_heads == 1 else q

    def act(self, obs, epsilon):
        explore = self.explore_rng.random() < epsilon
        if self.n_heads == 1:
            if explore:
                return int(self.explore_rng.integers(self.env.action_count))
            return int(np.argmax(self.greedy_values(obs)))
        if explore:
            return self.explore_rng.integers(self.env.action_count, size=self.n_heads)
        return np.argmax(self.greedy_values(obs), axis=-1)

    # learning --------------------------------------------------------

    def train_step(self):
        cfg = self.cfg
        B = cfg.batch_size
        if len(self.buffer) < B:
            raise ContractError(f"replay holds {len(self.buffer)} < batch_size={B} transitions")
        idx, b, w = self.buffer.sample(B, self.replay_rng)
        s, s2 = b["state"], b["next_state"]
        actions = b["action"].reshape(B, self.n_heads)
        not_done = 1.0 - b["terminal"].astype(np.float64)
        rows = np.arange(B)
        p_s, p_s2 = self._prior(s), self._prior(s2)

        # (B, H, A) throughout
        q_s = self._heads(self.params, s)
        q2 = self._heads(self.target_params, s2, p_s2)
        if cfg.double_q:
            a2 = np.argmax(self._heads(self.params, s2, p_s2), axis=2)
            v2 = np.take_along_axis(q2, a2[..., None], axis=2)[..., 0]
        else:
            v2 = q2.max(axis=2)
        pred = np.take_along_axis(q_s, actions[..., None], axis=2)[..., 0]
        if p_s is not None:
            pred = pred + np.take_along_axis(p_s, actions[..., None], axis=2)[..., 0]
        td = b["reward"][:, None] + (cfg.discount * not_done)[:, None] * v2 - pred

        loss = float(np.mean(w[:, None] * td ** 2))
        if not np.isfinite(loss):
            raise NumericError(f"non-finite TD loss at update {self.updates + 1} (env step {self.env_steps})")
        cot = np.zeros((self.n_heads, B, self.env.action_count))
        cot[np.arange(self.n_heads)[:, None], rows[None, :], actions.T] = (-2.0 * w[:, None] * td / B).T
        adam_step(self.params, grad_stack(self.template, self.params, s, cot), self.adam)
        self.buffer.update_priorities(idx, np.abs(td).mean(axis=1))
        self.updates += 1
        if self.updates % cfg.target_update_frequency == 0:
            self.sync_targets()
        return loss

    def sync_targets(self):
        self.target_params[...] = self.params

    def env_step(self):
        """One environment interaction plus, once replay is warm, one update."""
        cfg = self.cfg
        if self._state is None:
            self._state = self.env.reset(self.env_rng)
            self._obs = self.env.observe(self._state)
            self._ep_len = 0
        eps = epsilon_schedule(self.env_steps, cfg.total_train_steps, cfg.exploration_fraction, cfg.final_epsilon)
        action = check_action(self.env, self.act(self._obs, eps))
        st = self.env.step(self._state, action, self.env_rng)
        next_obs = self.env.observe(st.state)
        self.buffer.push(Experience(self._obs, action, st.reward, next_obs, st.terminal))
        self._ep_len += 1
        if st.terminal or self._ep_len >= self.env.max_steps:
            self._state = None
        else:
            self._state, self._obs = st.state, next_obs
        self.env_steps += 1

        if len(self.buffer) >= cfg.batch_size:
            self._loss_acc.append(self.train_step())
        if self.env_steps % cfg.log_every == 0 or self.env_steps == cfg.total_train_steps:
            loss = float(np.mean(self._loss_acc)) if self._loss_acc else float("nan")
            self.log.append(TrainRecord(self.env_steps, loss, eps))
            self._loss_acc = []

    def run(self, on_step=None):
        """Consume the remaining budget; ``on_step(trainer)`` runs after every step."""
        while self.env_steps < self.cfg.total_train_steps:
            self.env_step()
            if on_step is not None:
                on_step(self)
        return self


def train(env, cfg: DqnConfig, prior=None, on_step=None):
    """Train from scratch for exactly ``cfg.total_train_steps`` environment steps.

    Returns ``(nets, log)``; a single-agent env yields a one-element list.
    """
    trainer = DqnTrainer(env, cfg, prior=prior).run(on_step)
    return trainer.nets, trainer.log


# persistence ----------------------------------------------------------

CHECKPOINT_FORMAT = "qcorrect-checkpoint"


def file_hash(path):
    """Git-style blob hash (sha1 over ``blob <len>\\0`` + content)."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def save_checkpoint(path, nets, meta=None):
    doc = {"format": CHECKPOINT_FORMAT, "version": 1, "meta": meta or {},
           "nets": [net_to_dict(n) for n in nets]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint file")
    return [net_from_dict(d) for d in doc["nets"]], doc.get("meta", {})


def write_log_csv(log, path, extra_columns=()):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss", "epsilon", *extra_columns])
        for rec in log:
            ev = rec.evaluation or {}
            w.writerow([rec.step, repr(rec.loss), repr(rec.epsilon), *(ev.get(c, "") for c in extra_columns)])
