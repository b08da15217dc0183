import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from i2a_lab.agents.i2a import I2aConfig, I2AAgent
from i2a_lab.models import PerfectModel
from i2a_lab.numerics import ParamVector, RMSProp, Tape
from i2a_lab.rng import Rng
from i2a_lab.sokoban.core import encode
from i2a_lab.sokoban.procgen import GenParams, generate_level
from i2a_lab.training import TrainConfig, train
from i2a_lab.training.losses import (actor_critic_loss, distill_term, kl_divergence, kstep_advantage,
                                     policy_terms, value_term)
from i2a_lab.training.trainer import TrainingDiverged, load_checkpoint, save_checkpoint


def brute_force_advantage(rewards, values, next_values, terminals, truncations, gamma, k):
    """Step-by-step discounted sums, one environment and one start at a time."""
    T, E = rewards.shape
    out = np.zeros((T, E))
    for e in range(E):
        for t in range(T):
            acc, discount, j = 0.0, 1.0, t
            while True:
                acc += discount * rewards[j, e]
                discount *= gamma
                if terminals[j, e]:
                    break
                if truncations[j, e] or j == t + k or j == T - 1:
                    acc += discount * next_values[j, e]
                    break
                j += 1
            out[t, e] = acc - values[t, e]
    return out


def random_batch(rng, T=7, E=4):
    r = rng.normal(size=(T, E))
    v = rng.normal(size=(T, E))
    nv = rng.normal(size=(T, E))
    ends = rng.random((T, E))
    return r, v, nv, ends < 0.15, (ends >= 0.15) & (ends < 0.25)


def test_one_step_example():
    adv = kstep_advantage(np.ones((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1), bool),
                          np.zeros((1, 1), bool), 1.0, 0)
    assert adv[0, 0] == 1.0


def test_two_step_example():
    r = np.array([[1.0], [2.0]])
    v = np.zeros((2, 1))
    nv = np.array([[0.0], [4.0]])
    adv = kstep_advantage(r, v, nv, np.zeros((2, 1), bool), np.zeros((2, 1), bool), 0.5, 1)
    assert adv[0, 0] == pytest.approx(3.0, abs=1e-15)


def test_terminal_bootstraps_zero_and_truncation_bootstraps_value():
    r = np.array([[1.0, 1.0]])
    nv = np.array([[5.0, 5.0]])
    adv = kstep_advantage(r, np.zeros((1, 2)), nv, np.array([[True, False]]), np.array([[False, True]]), 0.9, 3)
    np.testing.assert_allclose(adv[0], [1.0, 1.0 + 0.9 * 5.0])


@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.99])
@pytest.mark.parametrize("k", [0, 1, 5])
def test_matches_brute_force(gamma, k):
    rng = np.random.default_rng(int(gamma * 100) + k)
    for _ in range(30):
        batch = random_batch(rng)
        got = kstep_advantage(*batch, gamma, k)
        np.testing.assert_allclose(got, brute_force_advantage(*batch, gamma, k), rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 8), st.floats(0.05, 1.0))
def test_matches_brute_force_property(seed, k, gamma):
    batch = random_batch(np.random.default_rng(seed), T=5, E=3)
    np.testing.assert_allclose(kstep_advantage(*batch, gamma, k), brute_force_advantage(*batch, gamma, k),
                               rtol=0, atol=1e-12)


def test_advantage_rejects_bad_arguments():
    batch = random_batch(np.random.default_rng(0))
    with pytest.raises(ValueError):
        kstep_advantage(*batch, 0.9, -1)
    with pytest.raises(ValueError):
        kstep_advantage(*batch, 0.0, 1)


def _logits_values(seed, n=4, b=5):
    rng = np.random.default_rng(seed)
    pv = ParamVector([("pi", (b, n)), ("v", (b, 1))], rng.normal(size=b * n + b))
    return pv


def test_zero_advantage_gives_zero_policy_and_value_gradients():
    pv = _logits_values(0)
    t = Tape()
    logits, values = t.param(pv, "pi"), t.param(pv, "v")
    loss = actor_critic_loss(t, logits, values, np.arange(5) % 4, np.zeros(5), lambda_ent=0.0)
    grads = t.grad_for(t.backward(loss.total), pv)
    assert np.all(grads == 0.0)


def test_uniform_policy_entropy_term():
    t = Tape()
    logits = t.const(np.zeros((3, 5)))
    _, neg_entropy = policy_terms(t, logits, np.zeros(3, dtype=int), np.zeros(3))
    assert float(neg_entropy.value) == pytest.approx(-math.log(5))


def test_entropy_gradient_points_toward_uniform():
    pv = ParamVector([("pi", (1, 3))], np.array([2.0, 0.0, -1.0]))
    t = Tape()
    _, neg_entropy = policy_terms(t, t.param(pv, "pi"), np.zeros(1, dtype=int), np.zeros(1))
    g = t.grad_for(t.backward(neg_entropy), pv)
    # gradient descent lowers the largest logit and raises the smallest
    assert g[0] > 0 and g[2] < 0


def test_value_gradient_is_minus_advantage():
    pv = ParamVector([("v", (3, 1))], np.array([0.5, -1.0, 2.0]))
    returns = np.array([1.5, -1.0, 0.0])
    t = Tape()
    loss = value_term(t, t.param(pv, "v"), returns)
    g = t.grad_for(t.backward(loss), pv)
    np.testing.assert_allclose(g, -(returns - pv.values) / 3)


def test_zero_probability_action_rejected():
    t = Tape()
    with pytest.raises(FloatingPointError):
        policy_terms(t, t.const(np.array([[0.0, -1e6]])), np.array([1]), np.ones(1))


def test_distillation_identities():
    p = np.array([[0.2, 0.5, 0.3]])
    t = Tape()
    logits = t.const(np.log(p))
    ce = distill_term(t, logits, logits)
    assert float(ce.value) == pytest.approx(-(p * np.log(p)).sum())
    onehot = t.const(np.array([[0.0, -800.0, -800.0]]))
    assert float(distill_term(t, onehot, onehot).value) == pytest.approx(0.0, abs=1e-12)
    assert float(distill_term(t, logits, logits, literal_sign=True).value) == pytest.approx((p * np.log(p)).sum())


def test_distillation_gradient_never_reaches_the_policy():
    cfg = I2aConfig(obs_shape=(4, 5, 5), depth=2, embed=6, frame_embed=5, lstm=4, hidden=7, rollout_embed=3)
    agent = I2AAgent(cfg, PerfectModel(), Rng(0))
    obs = np.stack([encode(generate_level(GenParams(width=5, height=5, num_boxes=1), i).state) for i in range(3)])
    extras = agent.imagine(obs, Rng(1))
    t = Tape()
    _, _, distill = agent.policy_value(t, agent.params, obs, extras)
    g = t.grad_for(t.backward(distill_term(t, *distill)), agent.params)
    for name in agent.params.names():
        sl = agent.params.view(name, g)
        if name.startswith("rp."):
            continue
        assert np.all(sl == 0.0), name
    assert np.any(agent.params.view("rp.w2", g) != 0.0)


def test_kl_divergence():
    p = np.array([[0.5, 0.5]])
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)
    assert kl_divergence(p, np.array([[0.9, 0.1]])) == pytest.approx(0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(5))


def test_bandit_learns_better_arm():
    pv = ParamVector([("pi", (1, 2)), ("v", (1, 1))])
    opt = RMSProp(pv.size, lr=0.05)
    rng = np.random.default_rng(0)
    for _ in range(300):
        t = Tape()
        logits = t.param(pv, "pi")
        p = np.exp(logits.value[0] - logits.value[0].max())
        p /= p.sum()
        a = int(rng.random() > p[0])
        r = 1.0 if a == 0 else 0.0
        values = t.param(pv, "v")
        adv = np.array([r - values.value[0, 0]])
        loss = actor_critic_loss(t, logits, values, np.array([a]), adv)
        opt.step(pv.values, t.grad_for(t.backward(loss.total), pv))
    p = np.exp(pv["pi"][0]) / np.exp(pv["pi"][0]).sum()
    assert p[0] >= 0.95


TINY = dict(agent="i2a", episodes=40, n_envs=4, k=2, depth=2, eval_every=5, eval_levels=8, probe_states=8,
            width=5, height=5, embed=8, frame_embed=8, lstm=8, hidden=8, rollout_embed=4, max_steps=15)


def test_training_is_deterministic_and_logs_metrics(tmp_path):
    cfg = TrainConfig(**TINY)
    path = tmp_path / "m.jsonl"
    a = train(cfg, metrics_path=str(path))
    b = train(cfg)
    assert np.array_equal(a.agent.params.values, b.agent.params.values)
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert lines == a.metrics
    rec = lines[-1]
    assert rec["config_hash"] == cfg.config_hash() and rec["seed"] == cfg.seed
    assert rec["episodes"] >= 40
    for key in ("eval_solve_rate", "mean_return", "model_calls", "loss_entropy", "kl_distill"):
        assert key in rec


@pytest.mark.parametrize("agent", ["copy", "baseline", "baseline-large", "mc-search"])
def test_every_agent_kind_trains(agent):
    res = train(TrainConfig(**dict(TINY, agent=agent, episodes=10)))
    assert np.all(np.isfinite(res.agent.params.values))


def test_checkpoint_round_trip(tmp_path):
    cfg = TrainConfig(**dict(TINY, episodes=8))
    res = train(cfg)
    path = tmp_path / "agent.json"
    save_checkpoint(res.agent, cfg, str(path))
    agent, cfg2 = load_checkpoint(str(path))
    assert cfg2 == cfg
    assert np.array_equal(agent.params.values, res.agent.params.values)
    with pytest.raises(ValueError):
        load_checkpoint({"format": "other"})


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_with_checkpoint():
    cfg = TrainConfig(**dict(TINY, episodes=8))
    from i2a_lab.training.trainer import make_agent
    agent = make_agent(cfg)
    agent.params["pi.w"] = np.inf
    with pytest.raises(TrainingDiverged) as info:
        train(cfg, agent=agent)
    assert info.value.checkpoint["diverged"]


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"nope": 1})
    with pytest.raises(ValueError):
        TrainConfig(k=-1)
    assert TrainConfig(seed=1).config_hash() != TrainConfig(seed=2).config_hash()
