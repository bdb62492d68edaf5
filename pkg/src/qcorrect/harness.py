"""Policy evaluation, Pareto fronts, policy slices and convergence tracking."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .crosswalk import EVALUATION, CrosswalkEnv, stack
from .envcore import rollout, spawn_rngs
from .errors import ContractError


def stochastic(factory):
    """Mark ``factory(rng) -> policy`` so :func:`evaluate` gives every episode
    its own policy stream."""
    factory.needs_rng = True
    return factory


@dataclass
class EvalReport:
    n_sims: int
    mean_return: float
    return_stderr: float
    crash_pct: float
    success_pct: float
    timeout_pct: float
    mean_time_to_cross: float
    time_stderr: float
    seeds: list
    episodes: list = field(default_factory=list, repr=False)

    def row(self):
        return {
            "n_sims": self.n_sims,
            "mean_return": self.mean_return,
            "return_stderr": self.return_stderr,
            "crash_pct": self.crash_pct,
            "success_pct": self.success_pct,
            "timeout_pct": self.timeout_pct,
            "mean_time_to_cross": self.mean_time_to_cross,
            "time_stderr": self.time_stderr,
        }


def _stderr(x):
    x = np.asarray(x, dtype=np.float64)
    return float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0


def evaluate(env, policy, n_sims, seeds=None):
    """Run ``n_sims`` seeded episodes and aggregate.

    Episode ``k`` draws its environment stream (and, for policies marked
    with :func:`stochastic`, its policy stream) from ``seeds[k]`` only, so
    results do not depend on evaluation order.  Percentages count the
    crosswalk outcomes ``crash``/``success``/``timeout``; time to cross
    averages successful episodes only.
    """
    if n_sims < 1:
        raise ContractError("n_sims must be >= 1")
    seeds = list(range(n_sims)) if seeds is None else [int(s) for s in seeds]
    if len(seeds) != n_sims:
        raise ContractError(f"{len(seeds)} seeds given for {n_sims} simulations")
    episodes = []
    for seed in seeds:
        env_rng, pol_rng = spawn_rngs(seed, 2)
        pol = policy(pol_rng) if getattr(policy, "needs_rng", False) else policy
        res = rollout(env, pol, env_rng, record=False)
        episodes.append({"seed": seed, "return": res.undiscounted_return,
                         "discounted_return": res.discounted_return, "steps": res.step_count,
                         "outcome": res.outcome_label, "time": res.duration})
    returns = [e["return"] for e in episodes]
    outcomes = [e["outcome"] for e in episodes]
    times = [e["time"] for e in episodes if e["outcome"] == "success"]

    def pct(label):
        return 100.0 * outcomes.count(label) / n_sims

    return EvalReport(
        n_sims=n_sims,
        mean_return=float(np.mean(returns)),
        return_stderr=_stderr(returns),
        crash_pct=pct("crash"),
        success_pct=pct("success"),
        timeout_pct=pct("timeout"),
        mean_time_to_cross=float(np.mean(times)) if times else math.nan,
        time_stderr=_stderr(times),
        seeds=seeds,
        episodes=episodes,
    )


# Pareto analysis -----------------------------------------------------------

@dataclass(frozen=True)
class ParetoPoint:
    policy_id: str
    time_to_cross: float
    crash_rate: float

    def __post_init__(self):
        object.__setattr__(self, "time_to_cross", float(self.time_to_cross))
        object.__setattr__(self, "crash_rate", float(self.crash_rate))
        if not (math.isfinite(self.time_to_cross) and math.isfinite(self.crash_rate)):
            raise ContractError(f"non-finite objectives for {self.policy_id}")

    @property
    def objectives(self):
        return (self.time_to_cross, self.crash_rate)


def dominates(p, q):
    """``p`` no worse than ``q`` in both objectives and strictly better in one
    (both minimized)."""
    a, b = p.objectives, q.objectives
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def pareto_front(points):
    """Non-dominated points, sorted by time to cross (stable)."""
    points = list(points)
    if not points:
        raise ContractError("pareto_front needs at least one point")
    front = [p for p in points if not any(dominates(q, p) for q in points)]
    return sorted(front, key=lambda p: p.time_to_cross)


# policy slices ----------------------------------------------------------

def slice_observation(env: CrosswalkEnv, ego_x, ped_y, ego_v=6.0, ped_v=0.0):
    """Noise-free stacked features with one standing pedestrian in slot 0."""
    p = env.params
    raw = np.full(p.obs_dim, p.absent_value)
    raw[0], raw[1], raw[2], raw[3] = ego_x, ego_v, ped_y, ped_v
    return env.features(stack([raw] * p.history))


def policy_slice(policy, env: CrosswalkEnv, x_range=(5.0, 37.0), y_range=(-5.0, 5.0), resolution=(65, 21),
                 ego_v=6.0):
    """Greedy action index over an (ego x, pedestrian y) grid.

    Returns ``(xs, ys, grid)`` with ``grid[j, i]`` the action at ``(xs[i], ys[j])``.
    """
    nx, ny = resolution
    xs = np.linspace(*x_range, nx)
    ys = np.linspace(*y_range, ny)
    grid = np.empty((ny, nx), dtype=np.int64)
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            grid[j, i] = int(policy(slice_observation(env, x, y, ego_v)))
    return xs, ys, grid


def write_slice_csv(path, xs, ys, grid, accelerations, meta=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for k, v in (meta or {}).items():
            w.writerow([f"# {k}", v])
        w.writerow(["# action legend (m/s^2)", *(f"{i}={a:g}" for i, a in enumerate(accelerations))])
        w.writerow(["ped_y \\ ego_x", *(repr(float(x)) for x in xs)])
        for y, row in zip(ys, grid):
            w.writerow([repr(float(y)), *(int(a) for a in row)])


# convergence tracking ---------------------------------------------------

def snapshot_steps(budget, eval_every):
    """``floor(budget / eval_every) + 1`` snapshot steps ending at ``budget``."""
    if eval_every < 1:
        raise ContractError("eval_every must be >= 1")
    k = budget // eval_every
    return [budget - (k - j) * eval_every for j in range(k + 1)]


def convergence_track(trainer, eval_every, env, n_sims, make_policy, seeds=None):
    """Train to the end of the budget, evaluating frozen copies of the policy.

    ``make_policy(trainer)`` must return a policy that does not share mutable
    state with the trainer (e.g. built from copied networks).  Evaluation uses
    its own seeded streams, so the trained weights are identical with or
    without tracking.  Returns ``[(step, EvalReport), ...]``.
    """
    steps = snapshot_steps(trainer.cfg.total_train_steps, eval_every)
    due = set(steps)
    series = []

    def snap(tr):
        if tr.env_steps in due:
            series.append((tr.env_steps, evaluate(env, make_policy(tr), n_sims, seeds)))

    if trainer.env_steps in due:
        snap(trainer)
    trainer.run(on_step=snap)
    return series


def write_convergence_csv(path, series, meta=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for k, v in (meta or {}).items():
            w.writerow([f"# {k}", v])
        cols = list(EvalReport.row(series[0][1]).keys()) if series else []
        w.writerow(["step", *cols])
        for step, rep in series:
            w.writerow([step, *(_fmt(v) for v in rep.row().values())])


def write_reports_csv(path, rows, meta=None):
    """One row per labelled EvalReport: ``rows`` is ``[(label, report), ...]``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for k, v in (meta or {}).items():
            w.writerow([f"# {k}", v])
        cols = list(rows[0][1].row().keys()) if rows else []
        w.writerow(["policy", *cols])
        for label, rep in rows:
            w.writerow([label, *(_fmt(v) for v in rep.row().values())])


def write_episodes_csv(path, report, meta=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for k, v in (meta or {}).items():
            w.writerow([f"# {k}", v])
        w.writerow(["seed", "return", "discounted_return", "steps", "outcome", "time"])
        for e in report.episodes:
            w.writerow([e["seed"], _fmt(e["return"]), _fmt(e["discounted_return"]), e["steps"], e["outcome"],
                        _fmt(e["time"])])


def write_pareto_csv(path, points, meta=None):
    front = {id(p) for p in pareto_front(points)}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for k, v in (meta or {}).items():
            w.writerow([f"# {k}", v])
        w.writerow(["policy", "time_to_cross_s", "crash_rate_pct", "on_front"])
        for p in points:
            w.writerow([p.policy_id, _fmt(p.time_to_cross), _fmt(p.crash_rate), int(id(p) in front)])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v
