"""Acceptance criteria 1-8.

Each test records one summary line; ``conftest.py`` prints them as a block at
the end of the session.  Criteria 2 and 3 train at full budget and take most
of the suite's runtime (about 40 minutes on one core), so they carry the ``slow``
marker and can be deselected with ``-m "not slow"``.
"""
import itertools
import json
import shutil

import numpy as np
import pytest
from scipy.stats import chisquare

from qcorrect import cli
from qcorrect import crosswalk as cw
from qcorrect import experiments as ex
from qcorrect import fisheries as fz
from qcorrect import harness
from qcorrect.corrections import CorrectionSpec, greedy_policy, train_correction
from qcorrect.envcore import Experience, make_rng
from qcorrect.fusion import FusionRule, joint_argmax_sum
from qcorrect.harness import ParetoPoint, dominates
from qcorrect.numerics import ParamNet, forward, grad
from qcorrect.qlearn import DqnConfig, train
from qcorrect.replay import ReplayBuffer
from toy_mdps import TabularEnv, random_mdp, value_iteration

SEEDS = (0, 1, 2)


def within(value, target, rel):
    return abs(value - target) <= rel * abs(target)


# 1 -------------------------------------------------------------------------

def test_criterion_1_fisheries_baselines(record):
    env = fz.FisheriesEnv()
    target = {"random": 0.84, "a=1.0": 0.42, "a=0.5": 0.86, "a=0.3": 12.47, "a=0.1": 8.47}
    policies = {"random": harness.stochastic(lambda rng: fz.random_policy(rng)),
                **{f"a={v}": fz.fixed_policy(v) for v in (1.0, 0.5, 0.3, 0.1)}}
    got = {name: harness.evaluate(env, pol, 100).mean_return for name, pol in policies.items()}
    ok = all(within(got[k], target[k], 0.15) for k in target)
    record(", ".join(f"{k} {got[k]:.2f} (target {target[k]})" for k in target))
    assert ok


# 2 -------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_2_fisheries_method_ordering(record):
    P = fz.FisheriesParams()
    env = fz.FisheriesEnv(P)
    conservative = harness.evaluate(env, fz.fixed_policy(0.1, P), 100).mean_return
    scores = {"max-sum": [], "correction": [], "decomposed": []}
    for seed in SEEDS:
        single, _ = ex.train_single_boat(P, ex.fisheries_config(total_train_steps=100_000, seed=seed))
        scores["max-sum"].append(harness.evaluate(env, ex.max_sum_policy(single, P), 100).mean_return)
        spec, _ = ex.train_fisheries_correction(single, P, ex.fisheries_config(total_train_steps=60_000, seed=seed))
        scores["correction"].append(harness.evaluate(env, ex.corrected_policy(spec), 100).mean_return)
        nets, _ = ex.train_decomposed(P, ex.fisheries_config(total_train_steps=160_000, seed=seed))
        scores["decomposed"].append(harness.evaluate(env, ex.decomposed_policy(nets), 100).mean_return)
    mean = {k: float(np.mean(v)) for k, v in scores.items()}
    checks = [mean["max-sum"] >= conservative,
              mean["correction"] > mean["max-sum"],
              within(mean["correction"], 13.89, 0.10),
              within(mean["decomposed"], 13.77, 0.10)]
    per_seed = "; ".join(f"{k} " + "/".join(f"{x:.2f}" for x in v) for k, v in scores.items())
    record(f"means: conservative {conservative:.2f}, " + ", ".join(f"{k} {v:.2f}" for k, v in mean.items())
           + f" [per seed {per_seed}]")
    assert all(checks)


# 3 -------------------------------------------------------------------------

# At 50k samples the single-pedestrian learner gets only ten target syncs with
# the default period; a shorter period lets its values settle.
REDUCED_PED_SYNC = 1_000


def pareto_point(name, rep, timeout):
    # a policy that never reaches the goal is charged the full timeout
    t = rep.mean_time_to_cross if rep.success_pct > 0 else timeout
    return ParetoPoint(name, t, rep.crash_pct)


def summarize(reps, timeout):
    """Seed-averaged Pareto points per method and a one-line report."""
    points = {k: [pareto_point(k, r, timeout) for r in v] for k, v in reps.items()}
    avg = {k: ParetoPoint(k, np.mean([p.time_to_cross for p in v]), np.mean([p.crash_rate for p in v]))
           for k, v in points.items()}
    timeouts = {k: np.mean([r.timeout_pct for r in v]) for k, v in reps.items()}
    text = ", ".join(f"{k} {p.time_to_cross:.2f} s / {p.crash_rate:.2f}% crash / {timeouts[k]:.0f}% timeout"
                     for k, p in avg.items())
    text += " [per seed " + "; ".join(
        f"{k} " + "/".join(f"{p.time_to_cross:.2f}s,{p.crash_rate:.1f}%" for p in v) for k, v in points.items()) + "]"
    return avg, text


def test_summarize_handles_policies_that_never_cross():
    def rep(crash, success, t):
        return harness.EvalReport(10, 0.0, 0.0, crash, success, 100.0 - crash - success, t, 0.0, [], [])

    avg, text = summarize({"dqn": [rep(10.0, 50.0, 5.0), rep(20.0, 0.0, float("nan"))]}, 20.0)
    assert avg["dqn"].objectives == (12.5, 15.0)
    assert "12.50 s / 15.00% crash / 60% timeout" in text


@pytest.mark.slow
def test_criterion_3_crosswalk_reduced_budget(record):
    P = cw.CrosswalkParams()
    env = cw.CrosswalkEnv(P, mode=cw.EVALUATION)
    reps = {"max-min": [], "correction": [], "dqn": []}
    for seed in SEEDS:
        ped, _ = ex.train_single_pedestrian(P, ex.crosswalk_config(total_train_steps=50_000, seed=seed,
                                                                    target_update_frequency=REDUCED_PED_SYNC))
        reps["max-min"].append(harness.evaluate(env, ex.greedy(ex.pedestrian_fusion(ped, FusionRule.MAX_MIN, P)), 1000))
        cfg = ex.crosswalk_correction_config(FusionRule.MAX_MIN, total_train_steps=50_000, seed=seed)
        spec, _ = ex.train_crosswalk_correction(ped, FusionRule.MAX_MIN, P, cfg)
        reps["correction"].append(harness.evaluate(env, ex.corrected_policy(spec), 1000))
        dqn, _ = ex.train_crosswalk_dqn(P, ex.crosswalk_config(total_train_steps=100_000, seed=seed))
        reps["dqn"].append(harness.evaluate(env, ex.greedy(ex.frozen_heads([dqn])), 1000))

    avg, text = summarize(reps, P.timeout)
    not_dominated = not dominates(avg["dqn"], avg["correction"])
    safe = avg["max-min"].crash_rate < 1.0
    record(text)
    assert not_dominated and safe


# 4 -------------------------------------------------------------------------

def oracle_cfg(**kw):
    # uniform replay keeps the sampled TD targets unbiased on a tabular problem
    base = dict(total_train_steps=10_000, buffer_capacity=10_000, target_update_frequency=200, learning_rate=1e-3,
                hidden_layers=(32,), discount=0.9, alpha=0.0, batch_size=64, seed=0)
    base.update(kw)
    return DqnConfig(**base)


def test_criterion_4_oracle_equivalence(record):
    T, R = random_mdp(0)
    q_star = value_iteration(T, R, 0.9)
    optimal = q_star.argmax(axis=1).tolist()
    states = np.eye(5)
    env = TabularEnv(T, R, 0.9)

    nets, _ = train(env, oracle_cfg())
    dqn_policy = forward(nets[0], states).argmax(axis=1).tolist()

    bias = np.zeros_like(q_star)
    bias[np.arange(5), q_star.argmin(axis=1)] = 1.0
    spec, _ = train_correction(env, CorrectionSpec(lambda o: np.asarray(o) @ (q_star + bias), oracle_cfg()))
    pol = greedy_policy(spec)
    corrected = [pol(s) for s in states]

    spec_opt, _ = train_correction(env, CorrectionSpec(lambda o: np.asarray(o) @ q_star, oracle_cfg()))
    mean_delta = float(np.mean(np.abs(forward(spec_opt.deltas[0], states))))

    record(f"(a) dqn {dqn_policy} vs optimal {optimal}; (b) corrected {corrected}; (c) mean|delta| {mean_delta:.4f}")
    assert dqn_policy == optimal and corrected == optimal and mean_delta < 0.05


# 5 -------------------------------------------------------------------------

def finite_difference(net, x, cot, h=1e-6):
    out = np.empty(net.n_params)
    base = net.params.copy()
    for k in range(net.n_params):
        net.params[k] = base[k] + h
        up = np.sum(cot * forward(net, x))
        net.params[k] = base[k] - h
        down = np.sum(cot * forward(net, x))
        net.params[k] = base[k]
        out[k] = (up - down) / (2 * h)
    return out


def test_criterion_5_numerics(record):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        sizes = [int(rng.integers(1, 6))] + [int(h) for h in rng.integers(2, 9, size=rng.integers(1, 4))] \
            + [int(rng.integers(1, 5))]
        net = ParamNet(sizes, dueling=bool(rng.integers(2)), rng=rng)
        x = rng.normal(size=(3, sizes[0]))
        cot = rng.normal(size=(3, sizes[-1]))
        g, fd = grad(net, x, cot), finite_difference(net, x, cot)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12))

    mismatches = 0
    for _ in range(1000):
        d, a = int(rng.integers(1, 6)), int(rng.integers(2, 6))
        net = ParamNet([d, 8, a], dueling=True, rng=rng)
        raw = ParamNet([d, 8, a + 1], params=net.params)
        x = rng.normal(size=d)
        q, advantages = forward(net, x), forward(raw, x)[1:]
        shifted = net.copy()
        shifted.biases[-1][1:] += rng.normal() * 10
        if not (np.argmax(q) == np.argmax(advantages) == np.argmax(forward(shifted, x))):
            mismatches += 1
    record(f"worst gradient relative error {worst:.2e} over 100 nets; dueling argmax mismatches {mismatches}/1000")
    assert worst < 1e-4 and mismatches == 0


# 6 -------------------------------------------------------------------------

def brute_force(qs):
    best, best_val = None, -np.inf
    for joint in itertools.product(range(qs.shape[1]), repeat=qs.shape[0]):
        val = sum(qs[i, a] for i, a in enumerate(joint))
        if val > best_val:
            best, best_val = joint, val
    return list(best)


def test_criterion_6_fusion_separability(record):
    rng = np.random.default_rng(6)
    wrong = 0
    for k in range(1000):
        n = int(rng.integers(1, 4))
        # every other instance is integer-valued so ties are common
        qs = rng.normal(size=(n, 4)) if k % 2 else rng.integers(0, 3, size=(n, 4)).astype(float)
        wrong += list(joint_argmax_sum(qs)) != brute_force(qs)
    record(f"{wrong} mismatches over 1000 instances")
    assert wrong == 0


# 7 -------------------------------------------------------------------------

def test_criterion_7_replay_distribution(record):
    rng = np.random.default_rng(7)
    pvalues = []
    for k in range(20):
        n = int(rng.integers(2, 40))
        buf = ReplayBuffer(n, alpha=0.7)
        for i in range(n):
            buf.push(Experience(np.zeros(1), 0, float(i), np.zeros(1), False))
        td = rng.exponential(size=n) * rng.choice([0.01, 1.0, 100.0])
        buf.update_priorities(np.arange(n), td)
        p = (np.abs(td) + buf.priority_floor) ** 0.7
        idx, _, _ = buf.sample(10_000, make_rng(100 + k))
        counts = np.bincount(idx, minlength=n)
        pvalues.append(chisquare(counts, 10_000 * p / p.sum()).pvalue)
    record(f"min p-value {min(pvalues):.3f} over 20 priority vectors")
    assert min(pvalues) > 0.01


# 8 -------------------------------------------------------------------------

TINY = {"total_train_steps": 300, "buffer_capacity": 1000, "log_every": 100, "target_update_frequency": 50,
        "hidden_layers": [8]}
CONFIGS = {
    "fish_dqn": {"environment": "fisheries", "method": "dqn", "dqn": TINY, "n_sims": 3},
    "fish_corr": {"environment": "fisheries", "method": "correction", "low_fidelity_steps": 150, "dqn": TINY,
                  "n_sims": 3, "seeds": [0, 1]},
    "fish_dec": {"environment": "fisheries", "method": "decomposed-dqn", "dqn": TINY, "n_sims": 3},
    "cw_fusion": {"environment": "crosswalk", "method": "fusion", "rule": "max-sum", "low_fidelity_steps": 150,
                  "dqn": TINY, "n_sims": 3},
    "cw_corr": {"environment": "crosswalk", "method": "correction", "rule": "max-min", "low_fidelity_steps": 150,
                "dqn": TINY, "n_sims": 3},
    "cw_fixed": {"environment": "crosswalk", "method": "baseline-fixed", "fixed_action": 0, "n_sims": 3},
}


def snapshot(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_8_determinism(tmp_path, monkeypatch, record):
    root = tmp_path / "out"
    monkeypatch.setenv(cli.OUTPUT_ROOT_VAR, str(root))
    paths = []
    for name, doc in CONFIGS.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps({**doc, "output_dir": name}))
        paths.append(path)

    def run_all():
        for path in paths:
            if "fixed" not in path.name:
                assert cli.main(["train", str(path)]) == 0
            assert cli.main(["evaluate", str(path)]) == 0
        return snapshot(root)

    first = run_all()
    shutil.rmtree(root)
    second = run_all()
    differing = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
    record(f"{len(first)} output files across {len(CONFIGS)} configs, {len(differing)} differ")
    assert not differing
