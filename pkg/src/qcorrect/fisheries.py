"""Multi-boat fisheries management MDP.

A season fishes the current regional stocks first, then the surviving total
population reproduces (capped logistic growth) and is split equally across
the regions.  The episode ends after ``horizon`` seasons or once the total
population falls below ``min_population``.

Each boat's reward is ``C * (catch - fishing_cost * a**2)`` with
``C = n_boats / max_population``; the global reward is the mean over boats,
which puts returns on the scale of a single region's problem.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

import numpy as np

from .envcore import Step
from .errors import ContractError

LOCAL_ACTIONS = (1.0, 0.5, 0.3, 0.1)


@dataclass(frozen=True)
class FisheriesParams:
    n_boats: int = 10
    initial_population: float = 1.5e5
    max_population: float = 3e5
    min_population: float = 200.0
    growth_rate: float = 0.5
    fishing_cost: float = 1e3
    boat_efficiency: float = 0.98
    discount: float = 0.99
    horizon: int = 100
    local_actions: tuple = LOCAL_ACTIONS

    def __post_init__(self):
        object.__setattr__(self, "local_actions", tuple(float(a) for a in self.local_actions))
        for name in ("n_boats", "initial_population", "max_population", "min_population",
                     "growth_rate", "fishing_cost", "boat_efficiency", "discount", "horizon"):
            if not getattr(self, name) > 0:
                raise ContractError(f"fisheries parameter {name} must be positive")
        if any(not 0.0 < a <= 1.0 for a in self.local_actions):
            raise ContractError("local action values must lie in (0, 1]")

    def to_dict(self):
        d = asdict(self)
        d["local_actions"] = list(self.local_actions)
        return d


class FisheriesState(NamedTuple):
    fish: np.ndarray  # per-region stock
    season: int


def grow(total_fish, params: FisheriesParams):
    """One mating season: ``f * exp(G (1 - f / f_max))`` capped at ``f_max``."""
    f_max = params.max_population
    return min(total_fish * np.exp(params.growth_rate * (1.0 - total_fish / f_max)), f_max)


def catch(fish, action_values, params: FisheriesParams, rng):
    """Poisson catches with mean ``eta * a * f``, clipped to the regional stock."""
    lam = params.boat_efficiency * np.asarray(action_values) * fish
    return np.minimum(rng.poisson(lam).astype(np.float64), fish)


def individual_rewards(catches, action_values, params: FisheriesParams):
    scale = params.n_boats / params.max_population
    a = np.asarray(action_values, dtype=np.float64)
    return scale * (np.asarray(catches, dtype=np.float64) - params.fishing_cost * a * a)


def action_values(action, params: FisheriesParams):
    idx = np.atleast_1d(np.asarray(action))
    if not np.issubdtype(idx.dtype, np.integer) or np.any(idx < 0) or np.any(idx >= len(params.local_actions)):
        raise ContractError(f"action index {action!r} not in 0..{len(params.local_actions) - 1}")
    if idx.shape != (params.n_boats,):
        raise ContractError(f"need {params.n_boats} local actions, got {idx.shape}")
    return np.asarray(params.local_actions)[idx]


def action_index(value, params: FisheriesParams = FisheriesParams()):
    """Index of a proportion in the local action set (e.g. 0.3 -> 2)."""
    try:
        return params.local_actions.index(float(value))
    except ValueError:
        raise ContractError(f"{value} is not in the local action set {params.local_actions}") from None


class FisheriesEnv:
    """Generative model of the fishery.  ``n_boats == 1`` gives scalar actions."""

    def __init__(self, params: FisheriesParams = FisheriesParams()):
        self.params = params
        self.action_count = len(params.local_actions)
        self.agent_count = params.n_boats
        self.observation_dim = params.n_boats
        self.discount = params.discount
        self.max_steps = params.horizon
        self.region_capacity = params.max_population / params.n_boats

    def reset(self, rng=None):
        p = self.params
        return FisheriesState(np.full(p.n_boats, p.initial_population / p.n_boats), 0)

    def observe(self, state):
        """Regional stocks as fractions of one region's share of ``f_max``."""
        return state.fish / self.region_capacity

    def elapsed(self, state):
        return float(state.season)

    def step(self, state, action, rng):
        p = self.params
        a = action_values(action, p)
        c = catch(state.fish, a, p, rng)
        reward = float(np.mean(individual_rewards(c, a, p)))
        total = grow(float(np.sum(state.fish - c)), p)
        season = state.season + 1
        fish = np.full(p.n_boats, total / p.n_boats)
        if total < p.min_population:
            return Step(FisheriesState(fish, season), reward, True, "collapsed")
        if season >= p.horizon:
            return Step(FisheriesState(fish, season), reward, True, "survived")
        return Step(FisheriesState(fish, season), reward, False, "")


def single_boat_params(params: FisheriesParams = FisheriesParams(), initial_population=15_000.0):
    """One boat in one region: population limits scaled to a region's share."""
    n = params.n_boats
    return replace(params, n_boats=1, initial_population=initial_population,
                   max_population=params.max_population / n,
                   min_population=params.min_population / n)


def single_boat_env(params: FisheriesParams = FisheriesParams()):
    return FisheriesEnv(single_boat_params(params))


# baseline policies ----------------------------------------------------

def fixed_policy(value, params: FisheriesParams = FisheriesParams()):
    """Every boat fishes the same proportion at every season."""
    idx = action_index(value, params)
    if params.n_boats == 1:
        return lambda obs: idx
    joint = np.full(params.n_boats, idx, dtype=np.int64)
    return lambda obs: joint


def random_policy(rng, params: FisheriesParams = FisheriesParams()):
    n, m = params.n_boats, len(params.local_actions)
    if n == 1:
        return lambda obs: int(rng.integers(m))
    return lambda obs: rng.integers(m, size=n)


def region_slicers(n_boats):
    """Entity ``i`` of the global state is region ``i``'s stock."""
    return [[i] for i in range(n_boats)]
