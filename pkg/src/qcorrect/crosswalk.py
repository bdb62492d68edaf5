"""Occluded crosswalk: ego longitudinal control among stochastic pedestrians.

Frame: the ego drives along ``y = 0`` in +x.  Pedestrians walk along the
crosswalk line ``x = crosswalk_x`` in +y, spawning at ``ped_y_min``.  An
axis-aligned obstacle on the near side of the road hides the spawn area from
the ego sensor (located at ``(x_ego, 0)``) until the ego gets close.

The learner sees the last ``history`` observations, oldest first, each
scaled by :func:`featurize`.  Raw observations (:func:`observe`) stay in
physical units.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .envcore import Step
from .errors import ContractError

ACCELERATIONS = (-4.0, -2.0, 0.0, 2.0)
TRAINING = "training"
EVALUATION = "evaluation"


@dataclass(frozen=True)
class CrosswalkParams:
    accelerations: tuple = ACCELERATIONS
    decision_period: float = 0.5
    train_sim_step: float = 0.5
    eval_sim_step: float = 0.1
    pos_noise: float = 0.5
    vel_noise: float = 0.5
    ped_desired_speed: float = 1.0
    train_speed_noise: tuple = (-1.0, 0.0, 1.0)
    eval_speed_noise_max: float = 0.5
    appearance_prob: float = 0.3
    max_pedestrians: int = 10
    initial_presence_prob: float = 0.5
    timeout: float = 20.0
    discount: float = 0.99
    crosswalk_x: float = 25.0
    crosswalk_half_width: float = 3.0
    ped_y_min: float = -5.0
    ped_y_max: float = 5.0
    ego_start_x: float = 5.0
    ego_v_min: float = 6.0
    ego_v_max: float = 8.0
    goal_x: float = 34.0
    obstacle: tuple = (12.0, 22.0, -6.0, -2.0)  # x_min, x_max, y_min, y_max
    ego_length: float = 5.0
    ego_width: float = 2.0
    absent_value: float = -10.0
    history: int = 4

    def __post_init__(self):
        for name in ("accelerations", "train_speed_noise", "obstacle"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        for dt in (self.train_sim_step, self.eval_sim_step):
            if dt <= 0 or not np.isclose(self.decision_period / dt, round(self.decision_period / dt)):
                raise ContractError(f"simulation step {dt} must divide the decision period {self.decision_period}")
        if min(self.pos_noise, self.vel_noise, self.eval_speed_noise_max) < 0:
            raise ContractError("noise levels must be >= 0")
        if self.max_pedestrians < 1 or self.history < 1:
            raise ContractError("max_pedestrians and history must be >= 1")
        if not 0.0 <= self.appearance_prob <= 1.0:
            raise ContractError("appearance_prob must be in [0, 1]")

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @property
    def obs_dim(self):
        return 2 + 2 * self.max_pedestrians


class CrosswalkState(NamedTuple):
    ego_x: float
    ego_v: float
    ped_y: np.ndarray
    ped_v: np.ndarray
    present: np.ndarray
    time: float


def _sim_step(params, mode):
    if mode == TRAINING:
        return params.train_sim_step
    if mode == EVALUATION:
        return params.eval_sim_step
    raise ContractError(f"unknown mode {mode!r}")


def sample_ped_speed(params, rng, mode, size=None):
    """Desired speed plus the mode's noise: a draw from the discrete training
    set, or uniform within +-``eval_speed_noise_max`` in evaluation."""
    if mode == TRAINING:
        noise = rng.choice(np.asarray(params.train_speed_noise), size=size)
    else:
        m = params.eval_speed_noise_max
        noise = rng.uniform(-m, m, size=size)
    return params.ped_desired_speed + noise


def initial_state(params, rng, mode=TRAINING):
    n = params.max_pedestrians
    v0 = rng.uniform(params.ego_v_min, params.ego_v_max)
    present = rng.random(n) < params.initial_presence_prob
    ped_y = rng.uniform(params.ped_y_min, params.ped_y_max, size=n)
    ped_v = sample_ped_speed(params, rng, mode, size=n)
    ped_y = np.where(present, ped_y, 0.0)
    ped_v = np.where(present, ped_v, 0.0)
    return CrosswalkState(params.ego_start_x, float(v0), ped_y, ped_v, present, 0.0)


def integrate_ego(x, v, a, dt):
    """Point-mass update; braking stops at standstill (no reversing)."""
    v_new = v + a * dt
    if v_new < 0.0:
        t_stop = v / -a if a < 0 else 0.0
        return x + v * t_stop + 0.5 * a * t_stop * t_stop, 0.0
    return x + v * dt + 0.5 * a * dt * dt, v_new


def collides(ego_x, ped_y, present, params):
    return bool(np.any(present
                       & (np.abs(params.crosswalk_x - ego_x) <= 0.5 * params.ego_length)
                       & (np.abs(ped_y) <= 0.5 * params.ego_width)))


def step(state: CrosswalkState, action, params: CrosswalkParams, rng, mode=TRAINING):
    """Advance one decision period.  Returns ``(state, reward, terminal, outcome)``."""
    if not (isinstance(action, (int, np.integer)) and 0 <= action < len(params.accelerations)):
        raise ContractError(f"action {action!r} not in 0..{len(params.accelerations) - 1}")
    accel = params.accelerations[int(action)]
    dt = _sim_step(params, mode)
    n_sub = int(round(params.decision_period / dt))

    x, v = state.ego_x, state.ego_v
    ped_y, ped_v, present = state.ped_y.copy(), state.ped_v.copy(), state.present.copy()
    time = state.time
    for _ in range(n_sub):
        x, v = integrate_ego(x, v, accel, dt)
        ped_y = np.where(present, ped_y + ped_v * dt, ped_y)
        present &= ped_y <= params.ped_y_max
        time += dt
        if collides(x, ped_y, present, params):
            return CrosswalkState(x, v, ped_y, ped_v, present, time), -1.0, True, "crash"
    time = round(time, 9)

    # speed noise redrawn around the desired speed for the next period
    speeds = sample_ped_speed(params, rng, mode, size=params.max_pedestrians)
    ped_v = np.where(present, speeds, 0.0)
    ped_y = np.where(present, ped_y, 0.0)
    # at most one newcomer per decision step, in the lowest free slot
    appear = rng.random() < params.appearance_prob
    absent = np.flatnonzero(~present)
    if appear and absent.size:
        i = absent[0]
        present[i] = True
        ped_y[i] = params.ped_y_min
        ped_v[i] = sample_ped_speed(params, rng, mode)

    nxt = CrosswalkState(x, v, ped_y, ped_v, present, time)
    if x >= params.goal_x:
        return nxt, 1.0, True, "success"
    if time >= params.timeout - 1e-9:
        return nxt, 0.0, True, "timeout"
    return nxt, 0.0, False, ""


def segment_hits_box(p0, p1, box):
    """Liang-Barsky test: does segment p0-p1 touch the closed box?"""
    x_min, x_max, y_min, y_max = box
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, p0[0] - x_min), (dx, x_max - p0[0]), (-dy, p0[1] - y_min), (dy, y_max - p0[1])):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        r = q / p
        if p < 0.0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 > t1:
            return False
    return True


def visible(ego_x, ped_y, params, box=None):
    box = params.obstacle if box is None else box
    return not segment_hits_box((ego_x, 0.0), (params.crosswalk_x, ped_y), box)


def observe(state: CrosswalkState, params: CrosswalkParams, rng):
    """Noisy raw observation: ego (x, v) then (pos, vel) per pedestrian slot.

    Noise is drawn for every slot so the stream advances identically whatever
    is visible; absent or occluded slots read ``absent_value`` in both fields.
    """
    n = params.max_pedestrians
    noise = rng.standard_normal(2 + 2 * n)
    obs = np.empty(2 + 2 * n)
    obs[0] = state.ego_x + params.pos_noise * noise[0]
    obs[1] = state.ego_v + params.vel_noise * noise[1]
    for i in range(n):
        if state.present[i] and visible(state.ego_x, state.ped_y[i], params):
            obs[2 + 2 * i] = state.ped_y[i] + params.pos_noise * noise[2 + 2 * i]
            obs[3 + 2 * i] = state.ped_v[i] + params.vel_noise * noise[3 + 2 * i]
        else:
            obs[2 + 2 * i] = obs[3 + 2 * i] = params.absent_value
    return obs


def stack(history):
    """Concatenate observations, oldest first."""
    return np.concatenate([np.asarray(o, dtype=np.float64) for o in history])


# fixed affine scaling of raw observation fields for the networks
_EGO_X = (20.0, 15.0)
_EGO_V = (5.0, 5.0)
_PED_Y = (0.0, 5.0)
_PED_V = (1.0, 2.0)


def feature_transform(params: CrosswalkParams):
    n = params.max_pedestrians
    offset = np.array([_EGO_X[0], _EGO_V[0]] + [_PED_Y[0], _PED_V[0]] * n)
    scale = np.array([_EGO_X[1], _EGO_V[1]] + [_PED_Y[1], _PED_V[1]] * n)
    return offset, scale


def featurize(raw_stack, params: CrosswalkParams):
    offset, scale = feature_transform(params)
    raw = np.asarray(raw_stack, dtype=np.float64)
    k = raw.shape[-1] // offset.size
    return (raw - np.tile(offset, k)) / np.tile(scale, k)


class CrosswalkEnv:
    """k-Markov environment model over stacked, scaled observations."""

    def __init__(self, params: CrosswalkParams = CrosswalkParams(), mode=TRAINING):
        _sim_step(params, mode)
        self.params = params
        self.mode = mode
        self.action_count = len(params.accelerations)
        self.agent_count = 1
        self.raw_dim = params.obs_dim
        self.observation_dim = params.history * params.obs_dim
        self.discount = params.discount
        self.max_steps = int(round(params.timeout / params.decision_period))
        self._offset, self._scale = (np.tile(a, params.history) for a in feature_transform(params))

    def with_mode(self, mode):
        return CrosswalkEnv(self.params, mode)

    def reset(self, rng):
        phys = initial_state(self.params, rng, self.mode)
        o = observe(phys, self.params, rng)
        return phys, (o,) * self.params.history

    def step(self, state, action, rng):
        phys, hist = state
        phys, reward, terminal, outcome = step(phys, action, self.params, rng, self.mode)
        o = observe(phys, self.params, rng)
        return Step((phys, hist[1:] + (o,)), reward, terminal, outcome)

    def observe(self, state):
        return (stack(state[1]) - self._offset) / self._scale

    def features(self, raw_stack):
        return (np.asarray(raw_stack) - self._offset) / self._scale

    def elapsed(self, state):
        return state[0].time


def single_pedestrian_params(params: CrosswalkParams = CrosswalkParams()):
    from dataclasses import replace

    return replace(params, max_pedestrians=1)


def single_pedestrian_env(params: CrosswalkParams = CrosswalkParams(), mode=TRAINING):
    return CrosswalkEnv(single_pedestrian_params(params), mode)


def pedestrian_slicers(params: CrosswalkParams = CrosswalkParams()):
    """Index lists picking (ego x, ego v, ped_i pos, ped_i vel) from every
    stacked frame, matching the single-pedestrian observation layout."""
    d = params.obs_dim
    return [[f * d + j for f in range(params.history) for j in (0, 1, 2 + 2 * i, 3 + 2 * i)]
            for i in range(params.max_pedestrians)]
