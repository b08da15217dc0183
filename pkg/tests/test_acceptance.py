"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL summary that is printed at the end of
the pytest run.  Training-based criteria (9, 10, 12) share runs through a
cache so every (agent, model, seed) is trained once.
"""

import functools
import statistics
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE

from i2a_lab.agents.i2a import (BaselineAgent, CopyModelAgent, I2aConfig, I2AAgent, encode_rollouts, heads,
                                model_free_path)
from i2a_lab.bench.experiments import run_retry_bench, toy_config
from i2a_lab.minipacman import MiniPacmanState, Ghost, can_move, default_maze, move_ghost, new_level, step as pm_step
from i2a_lab.minipacman.env import opposite
from i2a_lab.models import CopyModel, PerfectModel
from i2a_lab.numerics import Tape, grad_check, softmax
from i2a_lab.planners.bfs import bfs_solve
from i2a_lab.planners.mc_search import McSearchAgent, McSearchConfig
from i2a_lab.planners.mcts import mcts_play
from i2a_lab.rng import Rng
from i2a_lab.sokoban.core import encode, replay
from i2a_lab.sokoban.core import step as sk_step
from i2a_lab.sokoban.procgen import GenerationFailed, GenParams, generate_level
from i2a_lab.training import train
from i2a_lab.training.losses import actor_critic_loss, distill_term, kstep_advantage

from test_minipacman import reference_ghost_move, from_xy, to_xy
from test_training import brute_force_advantage, random_batch


def report(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


# -- 1, 2: generator ---------------------------------------------------------

@pytest.mark.slow
def test_c01_generator_solvability():
    params = GenParams()
    t0 = time.time()
    n, bad, failed = 0, 0, 0
    seed = 0
    while n < 10_000:
        try:
            cand = generate_level(params, seed)
        except GenerationFailed:
            failed += 1
        else:
            n += 1
            bad += not replay(cand.state, cand.solution_trace).solved
        seed += 1
    elapsed = time.time() - t0
    report(1, bad == 0 and elapsed < 600,
           f"{n} levels, {bad} failed replay, {failed} seeds without a level, {elapsed:.0f}s (< 600s)")


@pytest.mark.slow
def test_c02_generator_uniqueness():
    params = GenParams()
    t0 = time.time()
    seen, dups, n, seed = set(), 0, 0, 50_000_000
    while n < 100_000:
        try:
            s = generate_level(params, seed).state
        except GenerationFailed:
            seed += 1
            continue
        key = (s.walls, s.targets, s.boxes, s.player)
        dups += key in seen
        seen.add(key)
        n += 1
        seed += 1
    elapsed = time.time() - t0
    rate = dups / n
    report(2, rate < 0.01 and elapsed < 1800, f"duplicate rate {rate:.4%} over {n} levels, {elapsed:.0f}s (< 1800s)")


# -- 3: gradients ------------------------------------------------------------

GC = I2aConfig(obs_shape=(4, 5, 5), depth=3, embed=6, frame_embed=5, lstm=4, hidden=7, rollout_embed=3)


def _obs(seed, n=3):
    params = GenParams(width=5, height=5, num_boxes=1)
    return np.stack([encode(generate_level(params, 100 * seed + i).state) for i in range(n)])


def _check(params, build, seed):
    """Gradient check of ``sum(W * build(t, params))`` for a fixed random W."""
    t = Tape()
    w = np.random.default_rng(seed).normal(size=build(t, params).shape)

    def f(values):
        pv = params.with_values(values)
        t = Tape()
        out = build(t, pv)
        loss = t.sum(t.mul(out, t.const(w)))
        return float(loss.value), t.grad_for(t.backward(loss), pv)

    return grad_check(f, params)


def _component_errors(seed):
    agent = I2AAgent(GC, PerfectModel(), Rng(seed))
    obs = _obs(seed)
    flat = obs.reshape(len(obs), -1).astype(np.float64)
    extras = agent.imagine(obs, Rng(seed))
    errs = {}
    errs["embedding"] = _check(agent.params, lambda t, p: model_free_path(t, p, t.const(flat)), seed)
    errs["encoder"] = _check(agent.params, lambda t, p: encode_rollouts(t, p, GC, extras["frames"],
                                                                        extras["rewards"]), seed)
    trunk = np.random.default_rng(seed).normal(size=(3, GC.hidden))
    errs["heads"] = _check(agent.params, lambda t, p: t.concat(list(heads(t, p, t.const(trunk)))), seed)

    mc = McSearchAgent(McSearchConfig(obs_shape=(4, 5, 5), depth=2, embed=5, rollout_embed=3, delta_init=0.7),
                       PerfectModel(), Rng(seed))
    mc_extras = mc.imagine(obs, Rng(seed))
    errs["mc-search head"] = _check(mc.params, lambda t, p: mc.policy_value(t, p, obs, mc_extras)[0], seed)

    rng = np.random.default_rng(seed)
    actions = rng.integers(0, 5, len(obs))
    adv = rng.normal(size=len(obs))
    returns = rng.normal(size=len(obs))
    target = softmax(agent.policy_value(Tape(), agent.params, obs, extras)[0].value)

    def full(values):
        pv = agent.params.with_values(values)
        t = Tape()
        logits, value, distill = agent.policy_value(t, pv, obs, extras)
        loss = actor_critic_loss(t, logits, value, actions, adv, distill, 0.1, 0.5, returns=returns,
                                 distill_target=target)
        return float(loss.total.value), t.grad_for(t.backward(loss.total), pv)

    errs["full I2A loss"] = grad_check(full, agent.params)
    return errs


def test_c03_gradient_integrity():
    worst = {}
    for seed in range(10):
        for name, err in _component_errors(seed).items():
            worst[name] = max(worst.get(name, 0.0), err)
    ok = all(e < 1e-4 for e in worst.values())
    report(3, ok, "max rel err over 10 seeds: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


# -- 4: advantages -------------------------------------------------------------

def test_c04_advantage_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(1000):
        gamma = (0.5, 0.9, 0.99)[i % 3]
        k = (0, 1, 5)[(i // 3) % 3]
        batch = random_batch(rng)
        diff = np.abs(kstep_advantage(*batch, gamma, k) - brute_force_advantage(*batch, gamma, k)).max()
        worst = max(worst, float(diff))
    report(4, worst <= 1e-12, f"max |diff| {worst:.1e} over 1000 batches (<= 1e-12)")


# -- 5: ghost AI ---------------------------------------------------------------

def test_c05_ghost_ai_oracle():
    maze = default_maze()
    rng = Rng(5)
    dirs = [(1, 0), (0, -1), (0, 1), (-1, 0)]
    agree = 0
    for _ in range(10_000):
        cell, player = rng.choice(maze.corridors), rng.choice(maze.corridors)
        timer = rng.choice([0, 0, 4])
        s = MiniPacmanState(maze, frozenset(), frozenset(), (Ghost(cell, rng.choice(dirs)),), player, timer)
        g = s.ghosts[0]
        agree += move_ghost(s, g) == from_xy(reference_ghost_move(maze, to_xy(g.cell), to_xy(g.direction),
                                                         to_xy(player), timer > 0))
    reversals, checks = 0, 0
    s = new_level(5, seed=3)
    for _ in range(100_000):
        for g in s.ghosts:
            if sum(can_move(maze, g.cell, d) for d in dirs) >= 3:
                checks += 1
                reversals += move_ghost(s, g) == opposite(g.direction)
        s, _, _, done = pm_step(s, rng.randbelow(5), "avoid")
        if done:
            s = new_level(5, seed=rng.randbelow(1 << 30))
    report(5, agree == 10_000 and reversals == 0,
           f"{agree}/10000 agree with the transcription; {reversals} reversals in {checks} intersection moves")


# -- 6: accounting -------------------------------------------------------------

def test_c06_accounting_identity():
    cfg = I2aConfig(obs_shape=(4, 10, 10), n_actions=5, depth=5)
    model = PerfectModel()
    agent = I2AAgent(cfg, model, Rng(0))
    level = generate_level(GenParams(num_boxes=4), 0).state
    agent.forward(encode(level)[None], Rng(1))
    one = model.calls
    model.reset_calls()
    s, rng = level, Rng(2)
    for _ in range(50):
        out = agent.forward(encode(s)[None], rng)
        nxt = sk_step(s, int(np.argmax(out.logits[0])), max_steps=10_000)
        s = level if nxt.done else nxt.state
    episode = model.calls
    ratio = episode / 1400
    report(6, one == 25 and episode == 1250 and 0.5 <= ratio <= 2.0,
           f"one decision {one} calls, 50 decisions {episode} calls ({ratio:.2f}x the reference ~1400)")


# -- 7: copy model / zeroed imagination ------------------------------------------

def test_c07_copy_equivalence_and_reduction():
    obs = _obs(7, 4)
    i2a = I2AAgent(GC, CopyModel(), Rng(0))
    copy = CopyModelAgent(GC, Rng(1))
    copy.params = i2a.params.copy()
    a, b = i2a.forward(obs, Rng(2)), copy.forward(obs, Rng(3))
    same_copy = np.array_equal(a.logits, b.logits) and np.array_equal(a.value, b.value)

    full = I2AAgent(GC, PerfectModel(), Rng(4))
    full.params["head.w_ia"] = 0.0
    base = BaselineAgent(GC, Rng(5))
    for name in base.params.names():
        base.params[name] = full.params[name]
    c, d = full.forward(obs, Rng(6)), base.forward(obs)
    same_base = np.array_equal(c.logits, d.logits) and np.array_equal(c.value, d.value)
    report(7, same_copy and same_base, f"copy-model bit-exact {same_copy}; zeroed imagination = baseline {same_base}")


# -- 8: MCTS -------------------------------------------------------------------

@pytest.mark.slow
def test_c08_mcts_small_scale():
    params = GenParams(num_boxes=1)
    levels, seed = [], 0
    while len(levels) < 200:
        try:
            levels.append(generate_level(params, seed).state)
        except GenerationFailed:
            pass
        seed += 1
    solvable = sum(bfs_solve(s) is not None for s in levels)
    t0 = time.time()
    solved = sum(mcts_play(s, budget=10_000, c=1.0).solved for s in levels)
    elapsed = time.time() - t0
    rate = solved / len(levels)
    report(8, solvable == 200 and rate >= 0.95 and elapsed < 300,
           f"BFS solvable {solvable}/200; MCTS solved {rate:.1%} in {elapsed:.0f}s")


# -- 9, 10, 12: toy-scale training ----------------------------------------------

TOY_SEEDS = (0, 1, 2)


@functools.lru_cache(maxsize=None)
def toy_run(agent, model, seed):
    res = train(toy_config(agent=agent, model=model, seed=seed))
    return res.metrics


def final_rate(agent, model, seed):
    return toy_run(agent, model, seed)[-1]["eval_solve_rate"]


@pytest.mark.slow
def test_c09_toy_learning():
    i2a = [final_rate("i2a", "perfect", s) for s in TOY_SEEDS]
    copy = [final_rate("copy", "copy", s) for s in TOY_SEEDS]
    mi, mc = statistics.median(i2a), statistics.median(copy)
    report(9, mi >= 0.90 and mi > mc, f"median solve rate I2A {mi:.3f} {i2a} vs copy {mc:.3f} {copy} "
                                      f"(need >= 0.90 and strictly greater)")


@pytest.mark.slow
def test_c10_robustness_direction():
    rates = {(a, m): [final_rate(a, m, s) for s in TOY_SEEDS]
             for a in ("i2a", "mc-search") for m in ("perfect", "corrupted")}
    med = {k: statistics.median(v) for k, v in rates.items()}
    drop_i2a = med["i2a", "perfect"] - med["i2a", "corrupted"]
    drop_mc = med["mc-search", "perfect"] - med["mc-search", "corrupted"]
    retained = med["i2a", "corrupted"] / med["i2a", "perfect"]
    report(10, drop_mc > drop_i2a and retained >= 0.70,
           f"drop I2A {drop_i2a:.3f}, MC-search {drop_mc:.3f}; I2A retains {retained:.1%} "
           + " ".join(f"{a}/{m}={v:.3f}" for (a, m), v in med.items()))


# -- 11: nested retries -----------------------------------------------------------

@pytest.mark.slow
def test_c11_nested_retries():
    res = run_retry_bench(n_attempts=500, max_retries=16)
    curve = res["curve"]
    monotone = all(a <= b for a, b in zip(curve, curve[1:]))
    report(11, monotone and res["gain_late"] < res["gain_early"],
           f"success after 1/10/16 retries {curve[0]:.3f}/{curve[9]:.3f}/{curve[-1]:.3f}; "
           f"gain retries 1-10 {res['gain_early']:.3f} vs 11-16 {res['gain_late']:.3f}")


# -- 12: distillation --------------------------------------------------------------

def _distill_policy_grad():
    agent = I2AAgent(GC, PerfectModel(), Rng(12))
    obs = _obs(12)
    extras = agent.imagine(obs, Rng(0))
    t = Tape()
    _, _, distill = agent.policy_value(t, agent.params, obs, extras)
    g = t.grad_for(t.backward(distill_term(t, *distill)), agent.params)
    pi_names = [n for n in agent.params.names() if not n.startswith("rp.")]
    return max(float(np.abs(agent.params.view(n, g)).max()) for n in pi_names)


def kl_quartiles(metrics):
    last = metrics[-1]["episodes"]
    first = [m["kl_distill"] for m in metrics if m["episodes"] <= 0.25 * last]
    final = [m["kl_distill"] for m in metrics if m["episodes"] >= 0.75 * last]
    return float(np.mean(first)), float(np.mean(final))


@pytest.mark.slow
def test_c12_distillation_contract():
    analytic = _distill_policy_grad()
    quart = [kl_quartiles(toy_run("i2a", "perfect", s)) for s in TOY_SEEDS]
    deltas = [b - a for a, b in quart]
    med = statistics.median(deltas)
    report(12, analytic == 0.0 and med < 0,
           f"max |d distill / d pi params| = {analytic:.1e}; KL first->last quartile "
           + ", ".join(f"{a:.3f}->{b:.3f}" for a, b in quart) + f" (median change {med:+.3f})")
