"""Synchronous advantage actor-critic over a batch of Sokoban environments."""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..agents.i2a import BaselineAgent, CopyModelAgent, I2aConfig, I2AAgent
from ..models import CopyModel, CorruptedModel, CorruptionParams, PerfectModel
from ..numerics import RMSProp, Tape, clip_by_global_norm, softmax
from ..planners.mc_search import McSearchAgent, McSearchConfig
from ..rng import Rng, derive_seed
from ..sokoban.core import encode, step
from ..sokoban.procgen import GenerationFailed, GenParams, generate_level
from .losses import LAMBDA_DIST, LAMBDA_ENT, actor_critic_loss, kl_divergence, kstep_advantage

CHECKPOINT_FORMAT = "i2a-lab-agent"
CHECKPOINT_VERSION = 1
EVAL_SEED_BASE = 1_000_000_000


class TrainingDiverged(FloatingPointError):
    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    agent: str = "i2a"            # i2a | copy | baseline | baseline-large | mc-search
    model: str = "perfect"        # perfect | corrupted | copy
    corruption: float = 0.2
    reward_prediction: bool = True
    width: int = 6
    height: int = 6
    boxes: int = 1
    walk_steps: int = None
    max_steps: int = 50
    depth: int = 3
    embed: int = 32
    frame_embed: int = 32
    lstm: int = 32
    hidden: int = 64
    rollout_embed: int = 16
    n_envs: int = 16
    k: int = 5
    gamma: float = 0.99
    lr: float = 1e-3
    rms_decay: float = 0.99
    rms_eps: float = 1e-5
    clip_norm: float = 10.0
    lambda_ent: float = LAMBDA_ENT
    lambda_dist: float = LAMBDA_DIST
    literal_distill: bool = False
    literal_sign: bool = False
    episodes: int = 2000
    eval_every: int = 50
    eval_levels: int = 100
    eval_greedy: bool = False
    probe_states: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.n_envs < 1 or self.episodes < 1:
            raise ValueError("n_envs and episodes must be positive")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def gen_params(self):
        return GenParams(width=self.width, height=self.height, num_boxes=self.boxes, walk_steps=self.walk_steps)


def make_model(cfg, seed=None):
    if cfg.model == "perfect":
        return PerfectModel(predicts_reward=cfg.reward_prediction)
    if cfg.model == "corrupted":
        s = derive_seed("corruption", cfg.seed if seed is None else seed)
        return CorruptedModel(CorruptionParams(flip_prob=cfg.corruption, seed=s),
                              predicts_reward=cfg.reward_prediction)
    if cfg.model == "copy":
        return CopyModel()
    raise ValueError(f"unknown model {cfg.model!r}")


def make_agent(cfg, model=None, rng=None):
    rng = rng or Rng(derive_seed("agent", cfg.seed))
    obs_shape = (4, cfg.height, cfg.width)
    if cfg.agent == "mc-search":
        mc = McSearchConfig(obs_shape=obs_shape, depth=cfg.depth, gamma=cfg.gamma, embed=cfg.embed,
                            rollout_embed=cfg.rollout_embed, literal_sign=cfg.literal_sign)
        return McSearchAgent(mc, model or make_model(cfg), rng)
    icfg = I2aConfig(obs_shape=obs_shape, depth=cfg.depth, embed=cfg.embed, frame_embed=cfg.frame_embed,
                     lstm=cfg.lstm, hidden=cfg.hidden, rollout_embed=cfg.rollout_embed)
    if cfg.agent == "i2a":
        return I2AAgent(icfg, model or make_model(cfg), rng)
    if cfg.agent == "copy":
        return CopyModelAgent(icfg, rng)
    if cfg.agent in ("baseline", "baseline-large"):
        return BaselineAgent(icfg, rng, large=cfg.agent == "baseline-large")
    raise ValueError(f"unknown agent {cfg.agent!r}")


class LevelSource:
    """Deterministic stream of generated levels; seeds never repeat within a stream."""

    def __init__(self, params, base_seed):
        self.params = params
        self.next_seed = base_seed

    def __call__(self):
        while True:
            s = self.next_seed
            self.next_seed += 1
            try:
                return generate_level(self.params, s).state
            except GenerationFailed:
                continue


def eval_levels(cfg, n=None, offset=0):
    src = LevelSource(cfg.gen_params, EVAL_SEED_BASE + offset)
    return [src() for _ in range(cfg.eval_levels if n is None else n)]


def act(agent, obs, rng, greedy=False, params=None, extras=None):
    """One batched decision; returns ``(actions, probs, values, extras)``.

    Passing ``extras`` (imagined rollouts for ``obs``) skips imagination.
    """
    params = params or agent.params
    if extras is None:
        extras = agent.imagine(obs, rng, params)
    t = Tape()
    logits, value, _ = agent.policy_value(t, params, obs, extras)
    probs = softmax(logits.value)
    if greedy:
        actions = probs.argmax(axis=1)
    else:
        u = np.array([rng.random() for _ in range(len(obs))])
        actions = np.minimum((u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1), probs.shape[1] - 1)
    return actions, probs, value.value[:, 0], extras


def evaluate(agent, levels, rng, greedy=False, max_steps=50):
    """Play every level once (batched); returns solve rate and per-level records."""
    states = list(levels)
    live = list(range(len(states)))
    solved = [False] * len(states)
    steps = [0] * len(states)
    calls_before = agent.model_calls
    while live:
        obs = np.stack([encode(states[i]) for i in live])
        actions, _, _, _ = act(agent, obs, rng, greedy)
        still = []
        for i, a in zip(live, actions):
            out = step(states[i], int(a), max_steps)
            states[i] = out.state
            steps[i] += 1
            if out.solved:
                solved[i] = True
            elif not out.done:
                still.append(i)
        live = still
    return {"solve_rate": float(np.mean(solved)), "solved": solved, "steps": steps,
            "model_calls": agent.model_calls - calls_before}


def _concat_extras(items):
    if not items[0]:
        return {}
    return {k: np.concatenate([it[k] for it in items], axis=1) for k in items[0]}


def _policy_pair(agent, params, obs, extras):
    t = Tape()
    _, _, distill = agent.policy_value(t, params, obs, extras)
    if distill is None:
        return None
    return softmax(distill[0].value), softmax(distill[1].value)


def save_checkpoint(agent, cfg, path=None, extra=None):
    ck = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "kind": agent.kind,
          "train_config": cfg.to_dict(), "agent_config": agent.cfg.to_dict(),
          "large": getattr(agent, "large", False), "params": agent.params.to_dict()}
    if extra:
        ck.update(extra)
    if path:
        with open(path, "w") as fh:
            json.dump(ck, fh)
    return ck


def load_checkpoint(path_or_dict, model=None):
    from ..numerics import ParamVector
    ck = path_or_dict
    if not isinstance(ck, dict):
        with open(ck) as fh:
            ck = json.load(fh)
    if ck.get("format") != CHECKPOINT_FORMAT or ck.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not an i2a-lab agent checkpoint of a supported version")
    cfg = TrainConfig.from_dict(ck["train_config"])
    agent = make_agent(cfg, model)
    agent.params = ParamVector.from_dict(ck["params"])
    return agent, cfg


@dataclass
class TrainResult:
    agent: object
    metrics: list = field(default_factory=list)
    checkpoint: dict = None


def train(cfg, agent=None, metrics_path=None, log=None):
    """Train until ``cfg.episodes`` episodes have finished; returns :class:`TrainResult`.

    Every ``eval_every`` updates (and at the end) the agent is evaluated on
    held-out levels and a metrics record is appended (and written as a JSON
    line to ``metrics_path``).
    """
    agent = agent or make_agent(cfg)
    opt = RMSProp(agent.params.size, cfg.lr, cfg.rms_decay, cfg.rms_eps)
    act_rng = Rng(derive_seed("act", cfg.seed))
    eval_rng_seed = derive_seed("eval", cfg.seed)
    train_src = LevelSource(cfg.gen_params, derive_seed("train-levels", cfg.seed) % (1 << 40))
    held_out = eval_levels(cfg)
    probe = np.stack([encode(s) for s in eval_levels(cfg, cfg.probe_states, offset=10_000_000)])
    config_hash = cfg.config_hash()
    states = [train_src() for _ in range(cfg.n_envs)]
    obs = np.stack([encode(s) for s in states])
    episodes, env_steps, update = 0, 0, 0
    recent_solved, recent_returns = [], []
    ep_return = np.zeros(cfg.n_envs)
    metrics = []
    out = open(metrics_path, "w") if metrics_path else None

    def record(last_losses):
        ev = evaluate(agent, held_out, Rng(eval_rng_seed), cfg.eval_greedy, cfg.max_steps)
        rec = {"config_hash": config_hash, "seed": cfg.seed, "update": update, "episodes": episodes,
               "env_steps": env_steps, "eval_solve_rate": ev["solve_rate"],
               "train_solve_rate": float(np.mean(recent_solved[-100:])) if recent_solved else 0.0,
               "mean_return": float(np.mean(recent_returns[-100:])) if recent_returns else 0.0,
               "model_calls": agent.model_calls}
        rec.update(last_losses)
        pair = _policy_pair(agent, agent.params, probe,
                            agent.imagine(probe, Rng(eval_rng_seed)))
        if pair is not None:
            rec["kl_distill"] = kl_divergence(*pair)
        metrics.append(rec)
        if out:
            out.write(json.dumps(rec) + "\n")
            out.flush()
        if log:
            log(rec)

    last = {}
    carried = None
    try:
        while episodes < cfg.episodes:
            batch_obs, batch_extras, batch_act = [], [], []
            rew, vals, next_vals, terms, truncs = [], [], [], [], []
            for _ in range(cfg.k + 1):
                actions, probs, values, extras = act(agent, obs, act_rng, extras=carried)
                carried = None
                r = np.zeros(cfg.n_envs)
                term = np.zeros(cfg.n_envs, dtype=bool)
                trunc = np.zeros(cfg.n_envs, dtype=bool)
                final_obs = {}
                next_obs = obs.copy()
                for i, a in enumerate(actions):
                    o = step(states[i], int(a), cfg.max_steps)
                    r[i] = o.reward
                    ep_return[i] += o.reward
                    if o.done:
                        episodes += 1
                        recent_solved.append(bool(o.solved))
                        recent_returns.append(float(ep_return[i]))
                        ep_return[i] = 0.0
                        term[i] = o.solved
                        trunc[i] = o.truncated
                        if o.truncated:
                            final_obs[i] = encode(o.state)
                        states[i] = train_src()
                    else:
                        states[i] = o.state
                    next_obs[i] = encode(states[i])
                env_steps += cfg.n_envs
                batch_obs.append(obs)
                batch_extras.append(extras)
                batch_act.append(actions)
                rew.append(r)
                vals.append(values)
                terms.append(term)
                truncs.append(trunc)
                nv = np.zeros(cfg.n_envs)
                if final_obs:
                    idx = sorted(final_obs)
                    _, _, v_final, _ = act(agent, np.stack([final_obs[i] for i in idx]), act_rng)
                    nv[idx] = v_final
                next_vals.append(nv)
                obs = next_obs
            # bootstrap values for the observation after each step
            _, _, v_obs, carried = act(agent, obs, act_rng)
            for t_ in range(cfg.k + 1):
                following = vals[t_ + 1] if t_ + 1 <= cfg.k else v_obs
                next_vals[t_] = np.where(truncs[t_], next_vals[t_], following)
            adv = kstep_advantage(np.array(rew), np.array(vals), np.array(next_vals), np.array(terms),
                                  np.array(truncs), cfg.gamma, cfg.k)
            flat_obs_ = np.concatenate(batch_obs)
            extras = _concat_extras(batch_extras)
            tape = Tape()
            logits, value, distill = agent.policy_value(tape, agent.params, flat_obs_, extras)
            losses = actor_critic_loss(tape, logits, value, np.concatenate(batch_act), adv.reshape(-1),
                                       distill, cfg.lambda_ent, cfg.lambda_dist, cfg.literal_distill)
            if not np.isfinite(losses.total.value):
                raise FloatingPointError("non-finite loss")
            grads = tape.backward(losses.total)
            g = clip_by_global_norm(tape.grad_for(grads, agent.params), cfg.clip_norm)
            opt.step(agent.params.values, g)
            update += 1
            last = {f"loss_{k}": v for k, v in losses.scalars().items()}
            if cfg.eval_every and update % cfg.eval_every == 0:
                record(last)
        record(last)
    except FloatingPointError as exc:
        ck = save_checkpoint(agent, cfg, extra={"diverged": str(exc), "update": update})
        raise TrainingDiverged(f"training diverged at update {update}: {exc}", ck) from exc
    finally:
        if out:
            out.close()
    return TrainResult(agent, metrics, save_checkpoint(agent, cfg))
