"""Command-line driver: ``qcorrect {train,evaluate,slice,sweep} CONFIG``.

Experiments are described by a JSON file.  Every key is checked; unknown or
mistyped keys are reported with the line they appear on.  Outputs go under
``$QCORRECT_OUTPUT_ROOT/<output_dir>/seed_<n>/`` (the root defaults to the
current directory) and every file carries the hash of the normalized config.

Exit codes: 0 success, 2 configuration or contract error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import crosswalk as cw
from . import experiments as ex
from . import fisheries as fz
from . import harness
from .corrections import CorrectionSpec, fused_low_fidelity, make_trainer
from .errors import ConfigError, ContractError, NumericError, ShapeError
from .fusion import FusionRule
from .qlearn import DqnConfig, DqnTrainer, file_hash, load_checkpoint, save_checkpoint, write_log_csv

OUTPUT_ROOT_VAR = "QCORRECT_OUTPUT_ROOT"
ENVIRONMENTS = ("fisheries", "crosswalk")
METHODS = ("baseline-fixed", "baseline-random", "dqn", "decomposed-dqn", "fusion", "correction")
NEEDS_Q_LO = ("fusion", "correction")


@dataclass
class ExperimentConfig:
    environment: str
    method: str
    env_params: dict = field(default_factory=dict)
    dqn: dict = field(default_factory=dict)
    rule: str | None = None
    fixed_action: float | None = None
    q_lo_checkpoint: str | None = None
    low_fidelity_steps: int | None = None
    seeds: list = field(default_factory=lambda: [0])
    n_sims: int = 100
    eval_seed_offset: int = 1_000_000
    output_dir: str = "runs"
    slice: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def canonical(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    # derived objects ------------------------------------------------

    def env_param_obj(self):
        cls = fz.FisheriesParams if self.environment == "fisheries" else cw.CrosswalkParams
        return cls(**self.env_params)

    def dqn_config(self, seed, correction=False, **overrides):
        """Training settings for ``seed``; ``correction`` selects the correction
        learner's exploration schedule where it differs (crosswalk)."""
        if self.environment == "fisheries":
            base = ex.fisheries_config()
        elif correction and self.rule is not None:
            base = ex.crosswalk_correction_config(self.rule, total_train_steps=ex.crosswalk_config().total_train_steps)
        else:
            base = ex.crosswalk_config()
        return replace(base, **{**self.dqn, "seed": int(seed), **overrides})


_SLICE_KEYS = {"resolution": list, "x_range": list, "y_range": list, "ego_v": (int, float)}
_SWEEP_KEYS = {"exploration_fraction": list, "final_epsilon": list}


def _key_line(text, path):
    """Best-effort line number of a (possibly nested) key in the JSON source."""
    lines = text.splitlines()
    start = 0
    found = None
    for key in path:
        needle = json.dumps(key)
        for i in range(start, len(lines)):
            if needle + ":" in lines[i].replace('" :', '":'):
                found = start = i
                break
    return None if found is None else found + 1


def parse_config(text):
    """Parse and validate a config document; raises :class:`ConfigError`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg} (column {e.colno})", line=e.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object", line=1)

    def fail(msg, *path):
        raise ConfigError(msg, line=_key_line(text, path) if path else None)

    known = {f.name for f in fields(ExperimentConfig)}
    for key in raw:
        if key not in known:
            fail(f"unknown key {key!r}", key)
    for key in ("environment", "method"):
        if key not in raw:
            fail(f"missing required key {key!r}")
    if raw["environment"] not in ENVIRONMENTS:
        fail(f"environment must be one of {ENVIRONMENTS}, got {raw['environment']!r}", "environment")
    if raw["method"] not in METHODS:
        fail(f"method must be one of {METHODS}, got {raw['method']!r}", "method")

    cfg = ExperimentConfig(**raw)
    env_cls = fz.FisheriesParams if cfg.environment == "fisheries" else cw.CrosswalkParams
    _check_section(cfg.env_params, {f.name for f in fields(env_cls)}, "env_params", fail)
    _check_section(cfg.dqn, {f.name for f in fields(DqnConfig)} - {"seed"}, "dqn", fail)
    _check_section(cfg.slice, set(_SLICE_KEYS), "slice", fail)
    _check_section(cfg.sweep, set(_SWEEP_KEYS), "sweep", fail)
    for key, typ in {**_SLICE_KEYS}.items():
        if key in cfg.slice and not isinstance(cfg.slice[key], typ):
            fail(f"slice.{key} has the wrong type", "slice", key)
    for key in cfg.sweep:
        if not isinstance(cfg.sweep[key], list) or not cfg.sweep[key]:
            fail(f"sweep.{key} must be a non-empty list", "sweep", key)

    if not isinstance(cfg.seeds, list) or not cfg.seeds or not all(isinstance(s, int) for s in cfg.seeds):
        fail("seeds must be a non-empty list of integers", "seeds")
    if not isinstance(cfg.n_sims, int) or cfg.n_sims < 1:
        fail("n_sims must be a positive integer", "n_sims")

    m = cfg.method
    if m in NEEDS_Q_LO:
        if cfg.rule is None and cfg.environment == "crosswalk":
            fail(f"method {m!r} on crosswalk needs 'rule' (max-sum or max-min)")
        if cfg.rule is not None and cfg.rule not in [r.value for r in FusionRule]:
            fail(f"rule must be 'max-sum' or 'max-min', got {cfg.rule!r}", "rule")
        if cfg.environment == "fisheries" and cfg.rule not in (None, "max-sum"):
            fail("fisheries fusion is max-sum only", "rule")
        if cfg.q_lo_checkpoint is None and cfg.low_fidelity_steps is None:
            fail(f"method {m!r} needs 'q_lo_checkpoint' (or 'low_fidelity_steps' to train one)")
        if cfg.q_lo_checkpoint is not None and cfg.low_fidelity_steps is not None:
            fail("give either 'q_lo_checkpoint' or 'low_fidelity_steps', not both", "low_fidelity_steps")
    lf = cfg.low_fidelity_steps
    if lf is not None and (not isinstance(lf, int) or lf < 0):
        fail("low_fidelity_steps must be a non-negative integer", "low_fidelity_steps")
    if m == "baseline-fixed" and cfg.fixed_action is None:
        fail("method 'baseline-fixed' needs 'fixed_action'")
    if m == "decomposed-dqn" and cfg.environment != "fisheries":
        fail("decomposed-dqn is defined for fisheries only", "method")

    # build the derived objects now so bad values fail at parse time
    try:
        params = cfg.env_param_obj()
        dqn = cfg.dqn_config(cfg.seeds[0])
        if cfg.fixed_action is not None:
            _fixed_index(cfg, params)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    if lf is not None and cfg.method == "correction" and lf > dqn.total_train_steps:
        fail("low_fidelity_steps exceeds dqn.total_train_steps", "low_fidelity_steps")
    return cfg


def _check_section(section, allowed, name, fail):
    if not isinstance(section, dict):
        fail(f"{name} must be an object", name)
    for key in section:
        if key not in allowed:
            fail(f"unknown key {name}.{key}", name, key)


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}") from None
    return parse_config(text)


def _fixed_index(cfg, params):
    actions = params.local_actions if cfg.environment == "fisheries" else params.accelerations
    try:
        return list(actions).index(float(cfg.fixed_action))
    except ValueError:
        raise ConfigError(f"fixed_action {cfg.fixed_action} not in the action set {list(actions)}") from None


# environments and policies ----------------------------------------------

def train_env(cfg):
    p = cfg.env_param_obj()
    return fz.FisheriesEnv(p) if cfg.environment == "fisheries" else cw.CrosswalkEnv(p, cw.TRAINING)


def eval_env(cfg):
    p = cfg.env_param_obj()
    return fz.FisheriesEnv(p) if cfg.environment == "fisheries" else cw.CrosswalkEnv(p, cw.EVALUATION)


def low_fidelity_env(cfg):
    p = cfg.env_param_obj()
    return fz.single_boat_env(p) if cfg.environment == "fisheries" else cw.single_pedestrian_env(p)


def fusion_of(cfg, single_net):
    p = cfg.env_param_obj()
    if cfg.environment == "fisheries":
        return ex.max_sum_fusion(single_net, p)
    return ex.pedestrian_fusion(single_net, FusionRule(cfg.rule), p)


def _check_dims(net, dim, what):
    if net.input_dim != dim:
        raise ShapeError(f"{what} expects input dim {net.input_dim} but the environment gives {dim}")


def q_lo_spec(cfg, single_net):
    _check_dims(single_net, low_fidelity_env(cfg).observation_dim, "low-fidelity checkpoint")
    fq = fusion_of(cfg, single_net)
    per_agent = cfg.environment == "fisheries"
    return fq, fused_low_fidelity(fq, per_agent=per_agent), per_agent


def build_policy(cfg, run_dir, rng_seed=None):
    """Greedy policy for ``cfg.method`` from the checkpoints in ``run_dir``."""
    params = cfg.env_param_obj()
    env = eval_env(cfg)
    m = cfg.method
    if m == "baseline-fixed":
        idx = _fixed_index(cfg, params)
        if env.agent_count == 1:
            return lambda obs: idx
        joint = np.full(env.agent_count, idx, dtype=np.int64)
        return lambda obs: joint
    if m == "baseline-random":
        n, k = env.agent_count, env.action_count
        return harness.stochastic(lambda rng: (lambda obs: int(rng.integers(k)) if n == 1 else rng.integers(k, size=n)))
    manifest = read_manifest(run_dir)
    if m in ("dqn", "decomposed-dqn"):
        nets, _ = load_checkpoint(run_dir / manifest["checkpoints"]["policy"]["path"])
        for n in nets:
            _check_dims(n, env.observation_dim, "checkpoint")
        if len(nets) != env.agent_count:
            raise ShapeError(f"checkpoint holds {len(nets)} heads, environment has {env.agent_count} agents")
        return ex.greedy(ex.frozen_heads(nets))
    single = _load_q_lo(cfg, run_dir, manifest)
    fq, q_lo, per_agent = q_lo_spec(cfg, single)
    if m == "fusion":
        return ex.greedy(fq.entity_values if per_agent else fq.fuse)
    deltas, _ = load_checkpoint(run_dir / manifest["checkpoints"]["policy"]["path"])
    for d in deltas:
        _check_dims(d, env.observation_dim, "correction checkpoint")
    return ex.corrected_policy(CorrectionSpec(q_lo, deltas=deltas, per_agent=per_agent))


def _load_q_lo(cfg, run_dir, manifest):
    ref = manifest.get("q_lo")
    if ref is None:
        raise ConfigError("run manifest has no low-fidelity checkpoint")
    path = Path(ref["path"])
    path = path if path.is_absolute() else run_dir / path
    if file_hash(path) != ref["hash"]:
        raise ConfigError(f"low-fidelity checkpoint {path} changed since training (hash mismatch)")
    nets, _ = load_checkpoint(path)
    return nets[0]


# training -------------------------------------------------------------

def output_root():
    return Path(os.environ.get(OUTPUT_ROOT_VAR, "."))


def run_dir_for(cfg, seed, sub=None):
    base = output_root() / cfg.output_dir
    if sub:
        base = base / sub
    return base / f"seed_{seed}"


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_manifest(run_dir):
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise ConfigError(f"no training manifest in {run_dir}; run 'train' first")
    return json.loads(path.read_text())


def train_run(cfg, seed, run_dir):
    """Train one seed into ``run_dir``; returns the manifest."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    meta = {"config_hash": cfg.hash(), "seed": seed, "version": __version__}
    manifest = {"config": cfg.to_dict(), "config_hash": cfg.hash(), "seed": seed, "version": __version__,
                "checkpoints": {}}
    m = cfg.method
    if m in ("baseline-fixed", "baseline-random"):
        _write_json(run_dir / "manifest.json", manifest)
        return manifest

    def record(name, path, nets, log=None, extra=None):
        save_checkpoint(path, nets, {**meta, "role": name, **(extra or {})})
        manifest["checkpoints"][name] = {"path": path.name, "hash": file_hash(path)}
        if log is not None:
            write_log_csv(log, run_dir / f"{name}_log.csv")

    if m in ("dqn", "decomposed-dqn"):
        tr = DqnTrainer(train_env(cfg), cfg.dqn_config(seed)).run()
        record("policy", run_dir / "policy.json", tr.nets, tr.log)
        _write_json(run_dir / "manifest.json", manifest)
        return manifest

    total = cfg.dqn_config(seed).total_train_steps
    if cfg.q_lo_checkpoint is not None:
        q_path = Path(cfg.q_lo_checkpoint)
        if not q_path.exists():
            raise ConfigError(f"q_lo_checkpoint {q_path} does not exist")
        q_path = q_path.resolve()
        correction_steps = total
    else:
        q_path = run_dir / "q_lo.json"
        lo = DqnTrainer(low_fidelity_env(cfg), cfg.dqn_config(seed, total_train_steps=cfg.low_fidelity_steps)).run()
        record("q_lo", q_path, lo.nets, lo.log)
        correction_steps = total - cfg.low_fidelity_steps
    manifest["q_lo"] = {"path": str(q_path) if q_path.parent != run_dir else q_path.name, "hash": file_hash(q_path)}
    if m == "fusion":
        _write_json(run_dir / "manifest.json", manifest)
        return manifest

    single = load_checkpoint(q_path)[0][0]
    _, q_lo, per_agent = q_lo_spec(cfg, single)
    dqn = cfg.dqn_config(seed, correction=True, total_train_steps=correction_steps)
    spec = CorrectionSpec(q_lo, dqn, per_agent=per_agent, q_lo_ref=manifest["q_lo"])
    tr = make_trainer(train_env(cfg), spec).run()
    record("policy", run_dir / "policy.json", spec.deltas, tr.log, {"q_lo": manifest["q_lo"]})
    _write_json(run_dir / "manifest.json", manifest)
    return manifest


def evaluate_run(cfg, seed, run_dir):
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    policy = build_policy(cfg, run_dir)
    seeds = [cfg.eval_seed_offset + seed * cfg.n_sims + k for k in range(cfg.n_sims)]
    rep = harness.evaluate(eval_env(cfg), policy, cfg.n_sims, seeds)
    meta = {"config_hash": cfg.hash(), "seed": seed}
    harness.write_reports_csv(run_dir / "eval.csv", [(cfg.method, rep)], meta)
    harness.write_episodes_csv(run_dir / "episodes.csv", rep, meta)
    return rep


# commands -------------------------------------------------------------

def cmd_train(args):
    cfg = load_config(args.config)
    for seed in cfg.seeds:
        run_dir = run_dir_for(cfg, seed)
        train_run(cfg, seed, run_dir)
        print(f"seed {seed}: trained -> {run_dir}")
    return 0


def cmd_evaluate(args):
    cfg = load_config(args.config)
    if args.n_sims is not None:
        cfg = replace(cfg, n_sims=args.n_sims)
    for seed in cfg.seeds:
        run_dir = Path(args.run) if args.run else run_dir_for(cfg, seed)
        rep = evaluate_run(cfg, seed, run_dir)
        line = f"seed {seed}: mean return {rep.mean_return:.4f} +- {rep.return_stderr:.4f}"
        if cfg.environment == "crosswalk":
            line += (f", crash {rep.crash_pct:.1f}%, success {rep.success_pct:.1f}%, "
                     f"time to cross {rep.mean_time_to_cross:.2f} s")
        print(line)
    return 0


def cmd_slice(args):
    cfg = load_config(args.config)
    if cfg.environment != "crosswalk":
        raise ConfigError("policy slices are defined for the crosswalk environment only")
    opts = {"resolution": [65, 21], "x_range": [5.0, 37.0], "y_range": [-5.0, 5.0], "ego_v": 6.0, **cfg.slice}
    if args.resolution:
        opts["resolution"] = args.resolution
    seeds = cfg.seeds if args.run is None else cfg.seeds[:1]
    for seed in seeds:
        run_dir = Path(args.run) if args.run else run_dir_for(cfg, seed)
        policy = build_policy(cfg, run_dir)
        xs, ys, grid = harness.policy_slice(policy, eval_env(cfg), tuple(opts["x_range"]), tuple(opts["y_range"]),
                                            tuple(int(r) for r in opts["resolution"]), float(opts["ego_v"]))
        run_dir.mkdir(parents=True, exist_ok=True)
        out = run_dir / "slice.csv"
        harness.write_slice_csv(out, xs, ys, grid, cfg.env_param_obj().accelerations,
                                {"config_hash": cfg.hash(), "seed": seed, "ego_v": opts["ego_v"]})
        print(f"seed {seed}: slice -> {out}")
    return 0


def cmd_sweep(args):
    cfg = load_config(args.config)
    if not cfg.sweep:
        raise ConfigError("sweep needs a 'sweep' section listing exploration_fraction and/or final_epsilon values")
    base = cfg.dqn_config(0)
    fracs = cfg.sweep.get("exploration_fraction", [base.exploration_fraction])
    finals = cfg.sweep.get("final_epsilon", [base.final_epsilon])
    rows, points = [], []
    for frac in fracs:
        for final in finals:
            sub_cfg = replace(cfg, dqn={**cfg.dqn, "exploration_fraction": frac, "final_epsilon": final}, sweep={})
            label = f"frac{frac:g}_eps{final:g}"
            for seed in cfg.seeds:
                run_dir = run_dir_for(cfg, seed, sub=label)
                train_run(sub_cfg, seed, run_dir)
                rep = evaluate_run(sub_cfg, seed, run_dir)
                rows.append((f"{label}_seed{seed}", rep))
                if cfg.environment == "crosswalk" and np.isfinite(rep.mean_time_to_cross):
                    points.append(harness.ParetoPoint(f"{label}_seed{seed}", rep.mean_time_to_cross, rep.crash_pct))
                print(f"{label} seed {seed}: mean return {rep.mean_return:.4f}")
    out = output_root() / cfg.output_dir
    meta = {"config_hash": cfg.hash()}
    harness.write_reports_csv(out / "sweep.csv", rows, meta)
    if points:
        harness.write_pareto_csv(out / "pareto.csv", points, meta)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="qcorrect", description="Train and evaluate policies from a JSON experiment config.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("train", help="train every seed listed in the config")
    t.add_argument("config")
    t.set_defaults(func=cmd_train)
    e = sub.add_parser("evaluate", help="evaluate trained runs (or baselines)")
    e.add_argument("config")
    e.add_argument("--run", help="run directory to evaluate (default: the config's output location)")
    e.add_argument("--n-sims", type=int, help="override the config's n_sims")
    e.set_defaults(func=cmd_evaluate)
    s = sub.add_parser("slice", help="write a crosswalk policy slice grid")
    s.add_argument("config")
    s.add_argument("--run")
    s.add_argument("--resolution", type=int, nargs=2, metavar=("NX", "NY"))
    s.set_defaults(func=cmd_slice)
    w = sub.add_parser("sweep", help="train and evaluate a seed x exploration-schedule grid")
    w.add_argument("config")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"{args.config}: {e}", file=sys.stderr)
        return 2
    except (ContractError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
