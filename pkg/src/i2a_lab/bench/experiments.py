"""Experiment runners: imagination efficiency, generalization over box
counts, model-robustness grids, the reward-prediction ablation and nested
retries.

Every record carries the hash of the configuration that produced it and its
seed, so any single record can be reproduced by re-running that config.
"""

import hashlib
import json
import statistics
from dataclasses import asdict, dataclass, field

import numpy as np

from ..models import PerfectModel
from ..planners.bfs import bfs_solve
from ..planners.mcts import SimulatorModel, mcts_play
from ..planners.retries import DEFAULT_RETRIES, MAX_RETRIES, LookaheadAgent, nested_retry_solve, success_curve
from ..rng import Rng, derive_seed
from ..sokoban.core import MAX_STEPS, encode, step, transition
from ..sokoban.procgen import GenerationFailed, GenParams, generate_level
from ..training.trainer import TrainConfig, act, eval_levels, train


class InvariantViolation(AssertionError):
    """An accounting identity or environment invariant did not hold."""


def config_hash(cfg):
    if hasattr(cfg, "to_dict"):
        cfg = cfg.to_dict()
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# Toy task used by the learning, robustness and distillation experiments.
TOY = dict(width=6, height=6, boxes=1, depth=3, max_steps=50, lr=3e-3, embed=64, frame_embed=64, lstm=64,
           hidden=128, episodes=30000, eval_levels=200, eval_every=250)


def toy_config(**overrides):
    return TrainConfig(**dict(TOY, **overrides))


@dataclass
class ExperimentConfig:
    kind: str
    env: dict = field(default_factory=dict)
    agent: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    budgets: list = field(default_factory=list)
    out: str = None

    def to_dict(self):
        return asdict(self)

    def hash(self):
        d = self.to_dict()
        d.pop("out")
        return config_hash(d)


def generate_levels(params, n, seed):
    """``n`` levels from consecutive seeds; returns ``(levels, seeds, failures)``."""
    levels, seeds, failures = [], [], 0
    s = seed
    while len(levels) < n:
        try:
            levels.append(generate_level(params, s).state)
            seeds.append(s)
        except GenerationFailed:
            failures += 1
        s += 1
        if failures > 10 * n + 100:
            break
    return levels, seeds, failures


# -- imagination efficiency ------------------------------------------------

def play_agent(agent, level, rng, max_steps=MAX_STEPS, greedy=False):
    """Play one real episode with a learned agent; returns a record dict.

    For imagination agents every decision must cost exactly ``n * tau``
    model calls; anything else raises :class:`InvariantViolation`.
    """
    before = agent.model_calls
    s, steps, solved = level, 0, False
    while True:
        a, _, _, _ = act(agent, encode(s)[None], rng, greedy)
        out = step(s, int(a[0]), max_steps)
        steps += 1
        s = out.state
        if out.done:
            solved = bool(out.solved)
            break
    calls = agent.model_calls - before
    per = getattr(agent.cfg, "n_actions", 0) * agent.cfg.depth if agent.kind in ("i2a", "mc-search") else 0
    if calls != steps * per:
        raise InvariantViolation(f"{agent.kind}: {calls} model calls for {steps} decisions (expected {steps * per})")
    return {"solved": solved, "steps": steps, "model_calls": calls}


def random_search(level, rng, max_calls=1_000_000, max_steps=MAX_STEPS):
    """Uniform-random rollouts through the exact simulator until one solves."""
    model = SimulatorModel(max_steps)
    while model.calls < max_calls:
        s, plan = level, []
        while s.steps_elapsed < max_steps and model.calls < max_calls:
            a = rng.randbelow(4)
            s, _, done = model.step(s, a)
            plan.append(a)
            if s.solved:
                return {"solved": True, "steps": len(plan), "model_calls": model.calls}
            if done:
                break
    return {"solved": False, "steps": 0, "model_calls": model.calls}


def run_efficiency_bench(levels, agents=None, budgets=(), seed=0, max_steps=MAX_STEPS, cfg_hash=None,
                         random_calls=0):
    """Yield one record per (solver, level).

    ``agents`` maps a name to a learned agent; ``budgets`` are MCTS
    expansion budgets swept over the same levels.
    """
    cfg_hash = cfg_hash or config_hash({"seed": seed, "budgets": list(budgets), "max_steps": max_steps})
    for name, agent in (agents or {}).items():
        rng = Rng(derive_seed("efficiency", seed, name))
        for i, level in enumerate(levels):
            rec = play_agent(agent, level, rng, max_steps)
            yield dict(rec, solver=name, level=i, budget=None, config_hash=cfg_hash, seed=seed)
    for budget in budgets:
        for i, level in enumerate(levels):
            model = SimulatorModel(max_steps)
            before = model.calls
            res = mcts_play(level, budget=budget, model=model, max_steps=max_steps)
            if res.model_calls != model.calls - before:
                raise InvariantViolation("MCTS call counter delta differs from reported total")
            yield {"solver": "mcts", "level": i, "budget": budget, "solved": res.solved, "steps": res.steps,
                   "model_calls": res.model_calls, "config_hash": cfg_hash, "seed": seed}
    if random_calls:
        rng = Rng(derive_seed("random-search", seed))
        for i, level in enumerate(levels):
            rec = random_search(level, rng, random_calls, max_steps)
            yield dict(rec, solver="random", level=i, budget=random_calls, config_hash=cfg_hash, seed=seed)


def summarize_efficiency(records):
    """Per (solver, budget): solve rate and mean model calls per solved level."""
    groups = {}
    for r in records:
        groups.setdefault((r["solver"], r["budget"]), []).append(r)
    rows = []
    for (solver, budget), recs in groups.items():
        solved = [r for r in recs if r["solved"]]
        rows.append({"solver": solver, "budget": budget, "levels": len(recs),
                     "solve_rate": len(solved) / len(recs),
                     "calls_per_solved": float(np.mean([r["model_calls"] for r in solved])) if solved else None})
    return rows


# -- generalization over box counts ---------------------------------------

class OptimalAgent:
    """Scripted agent that replays a BFS-optimal plan (small levels only)."""

    kind = "scripted"

    def policy_fn(self):
        plans = {}

        def choose(s):
            key = (s.walls, s.targets, s.boxes, s.player)
            if key not in plans:
                plan = bfs_solve(s) or [4]
                cur = s
                for a in plan:
                    plans[(cur.walls, cur.targets, cur.boxes, cur.player)] = a
                    b, p, *_ = transition(cur, a)
                    cur = cur.__class__(cur.width, cur.height, cur.walls, cur.targets, b, p)
            return int(plans[key])

        return choose


def agent_policy_fn(agent, rng, greedy=True):
    def choose(s):
        a, _, _, _ = act(agent, encode(s)[None], rng, greedy)
        return int(a[0])

    return choose


def run_generalization(policy_fn, boxes=range(1, 8), levels_per_cell=20, width=10, height=10, seed=0,
                       max_steps=MAX_STEPS):
    """Solve rate per box count; levels that fail to generate are counted and excluded."""
    rows = []
    for nb in boxes:
        params = GenParams(width=width, height=height, num_boxes=nb)
        levels, _, failures = generate_levels(params, levels_per_cell, derive_seed("generalize", seed, nb) % (1 << 40))
        solved = 0
        for level in levels:
            s = level
            while True:
                out = step(s, policy_fn(s), max_steps)
                s = out.state
                if out.done:
                    solved += bool(out.solved)
                    break
        rows.append({"boxes": nb, "levels": len(levels), "generation_failures": failures,
                     "solve_rate": solved / len(levels) if levels else None})
    return rows


# -- robustness and ablation ----------------------------------------------

def _final_solve_rate(cfg):
    res = train(cfg)
    return res.metrics[-1]["eval_solve_rate"], res


def run_robustness(base=None, seeds=(0, 1, 2), agents=("i2a", "mc-search"), models=("perfect", "corrupted"),
                   runner=_final_solve_rate):
    """Final solve rate for every (agent, model, seed); report medians and drops."""
    base = base or toy_config()
    records, grid = [], {}
    for agent in agents:
        for model in models:
            for seed in seeds:
                cfg = TrainConfig.from_dict(dict(base.to_dict(), agent=agent, model=model, seed=seed))
                try:
                    rate, _ = runner(cfg)
                    diverged = False
                except FloatingPointError:
                    rate, diverged = 0.0, True
                records.append({"agent": agent, "model": model, "seed": seed, "solve_rate": rate,
                                "diverged": diverged, "config_hash": cfg.config_hash()})
                grid.setdefault((agent, model), []).append(rate)
    medians = {f"{a}/{m}": statistics.median(v) for (a, m), v in grid.items()}
    report = {"records": records, "medians": medians}
    if set(models) >= {"perfect", "corrupted"}:
        drops = {a: medians[f"{a}/perfect"] - medians[f"{a}/corrupted"] for a in agents}
        report["drops"] = drops
        if "i2a" in drops:
            p = medians["i2a/perfect"]
            report["i2a_retained"] = medians["i2a/corrupted"] / p if p else None
        if {"i2a", "mc-search"} <= set(drops):
            report["i2a_more_robust"] = drops["mc-search"] > drops["i2a"]
    return report


def run_reward_ablation(base=None, seeds=(0, 1, 2), runner=_final_solve_rate):
    """I2A with and without reward prediction in its environment model."""
    base = base or toy_config()
    out = {}
    for flag in (True, False):
        rates = []
        for seed in seeds:
            cfg = TrainConfig.from_dict(dict(base.to_dict(), agent="i2a", reward_prediction=flag, seed=seed))
            rates.append(runner(cfg)[0])
        out["with_rewards" if flag else "frames_only"] = {"rates": rates, "median": statistics.median(rates)}
    return out


# -- nested retries ----------------------------------------------------------

def run_retry_bench(n_attempts=500, max_retries=MAX_RETRIES, width=7, height=7, boxes=1, temperature=0.5,
                    max_steps=30, seed=0):
    """First successful retry for each of ``n_attempts`` imagined solves.

    ``gain_early`` is the success rate after the first ``DEFAULT_RETRIES``
    retries and ``gain_late`` what the remaining retries add.

    Each attempt is a fresh level; the agent is a one-step lookahead through
    the perfect model with Boltzmann exploration.
    """
    params = GenParams(width=width, height=height, num_boxes=boxes)
    levels, _, _ = generate_levels(params, n_attempts, derive_seed("retries", seed) % (1 << 40))
    rng = Rng(derive_seed("retry-rng", seed))
    firsts, calls = [], 0
    for level in levels:
        model = PerfectModel()
        agent = LookaheadAgent(model, temperature)
        res = nested_retry_solve(agent, model, encode(level), rng, max_retries, max_steps)
        if res.model_calls != model.calls:
            raise InvariantViolation("retry call accounting differs from the model counter")
        firsts.append(res.retries_used if res.success else None)
        calls += res.model_calls
    curve = success_curve(firsts, max_retries)
    split = min(DEFAULT_RETRIES, max_retries)
    return {"first_success": firsts, "curve": curve.tolist(), "model_calls": calls,
            "gain_early": float(curve[split - 1]), "gain_late": float(curve[-1] - curve[split - 1])}


__all__ = ["InvariantViolation", "ExperimentConfig", "TOY", "toy_config", "config_hash", "generate_levels",
           "play_agent", "random_search", "run_efficiency_bench", "summarize_efficiency", "OptimalAgent",
           "agent_policy_fn", "run_generalization", "run_robustness", "run_reward_ablation", "run_retry_bench",
           "eval_levels"]
