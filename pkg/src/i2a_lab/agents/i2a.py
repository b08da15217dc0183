"""Imagination-augmented agent and its model-free and copy-model baselines.

All agents share parameter names, so a baseline's ParamVector slices can be
copied into the I2A (and vice versa) to compare them at shared parameters.
The policy head's first layer takes ``[c_ia, c_mf]``; it is evaluated as
``c_ia @ W_ia + c_mf @ W_mf`` which is the same affine map as a matmul on
the concatenation.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..models import CopyModel, rollout_batch
from ..numerics import Tape, init_params, lstm_param_specs, softmax
from ..numerics.layers import dense


@dataclass
class I2aConfig:
    obs_shape: tuple = (4, 10, 10)
    n_actions: int = 5
    depth: int = 5
    embed: int = 32          # model-free path width (c_mf)
    frame_embed: int = 32    # rollout frame embedding width
    lstm: int = 32           # rollout encoder hidden units
    hidden: int = 64         # policy/value trunk
    rollout_embed: int = 16  # distilled rollout policy width
    reverse: bool = True     # encoder reads the rollout last-to-first
    reward_input: bool = True

    def __post_init__(self):
        self.obs_shape = tuple(self.obs_shape)
        if self.depth < 1:
            raise ValueError("rollout depth must be >= 1")
        if self.n_actions < 2:
            raise ValueError("need at least 2 actions")

    @property
    def obs_size(self):
        return int(np.prod(self.obs_shape))

    def to_dict(self):
        return asdict(self)


@dataclass
class AgentOutput:
    logits: np.ndarray
    value: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def probs(self):
        return softmax(self.logits)


def flat_obs(obs):
    obs = np.asarray(obs)
    return obs.reshape(len(obs), -1).astype(np.float64)


def _check_activations(**nodes):
    for name, node in nodes.items():
        if not np.all(np.isfinite(node.value)):
            raise FloatingPointError(f"non-finite activations in layer {name!r}")


def baseline_specs(cfg, scale=1):
    e, h = cfg.embed * scale, cfg.hidden * scale
    return [("mf.w", (cfg.obs_size, e)), ("mf.b", (e,)),
            ("head.w_mf", (e, h)), ("head.b", (h,)),
            ("pi.w", (h, cfg.n_actions)), ("pi.b", (cfg.n_actions,)),
            ("v.w", (h, 1)), ("v.b", (1,))]


def rollout_policy_specs(cfg):
    return [("rp.w1", (cfg.obs_size, cfg.rollout_embed)), ("rp.b1", (cfg.rollout_embed,)),
            ("rp.w2", (cfg.rollout_embed, cfg.n_actions)), ("rp.b2", (cfg.n_actions,))]


def i2a_specs(cfg):
    n_in = cfg.frame_embed + (1 if cfg.reward_input else 0)
    return (baseline_specs(cfg)
            + [("enc.emb.w", (cfg.obs_size, cfg.frame_embed)), ("enc.emb.b", (cfg.frame_embed,))]
            + lstm_param_specs("enc.lstm", n_in, cfg.lstm)
            + [("head.w_ia", (cfg.n_actions * cfg.lstm, cfg.hidden))]
            + rollout_policy_specs(cfg))


def rollout_policy_probs(params, obs):
    """Distilled rollout policy on raw observations (no tape)."""
    x = flat_obs(obs)
    h = dense(x, params["rp.w1"], params["rp.b1"], "relu")
    return softmax(dense(h, params["rp.w2"], params["rp.b2"]))


def rollout_policy_logits(t, params, x):
    h = t.relu(t.affine(x, t.param(params, "rp.w1"), t.param(params, "rp.b1")))
    return t.affine(h, t.param(params, "rp.w2"), t.param(params, "rp.b2"))


def model_free_path(t, params, x):
    return t.relu(t.affine(x, t.param(params, "mf.w"), t.param(params, "mf.b")))


def heads(t, params, trunk):
    logits = t.affine(trunk, t.param(params, "pi.w"), t.param(params, "pi.b"))
    value = t.affine(trunk, t.param(params, "v.w"), t.param(params, "v.b"))
    return logits, value


def encode_rollouts(t, params, cfg, frames, rewards):
    """Rollout encoder over ``frames`` (tau, M, 4, H, W) and ``rewards`` (tau, M).

    Returns the final LSTM hidden state node (M, lstm).
    """
    tau, m = frames.shape[:2]
    h = t.const(np.zeros((m, cfg.lstm)))
    c = t.const(np.zeros((m, cfg.lstm)))
    wx, wh, b = (t.param(params, f"enc.lstm.{k}") for k in ("wx", "wh", "b"))
    ew, eb = t.param(params, "enc.emb.w"), t.param(params, "enc.emb.b")
    order = range(tau - 1, -1, -1) if cfg.reverse else range(tau)
    for step in order:
        f = t.relu(t.affine(t.const(flat_obs(frames[step])), ew, eb))
        if cfg.reward_input:
            f = t.concat([f, t.const(rewards[step][:, None])])
        h, c = t.lstm(f, h, c, wx, wh, b)
    return h


class BaselineAgent:
    """Model-free agent: embedding -> FC -> (policy logits, value)."""

    kind = "baseline"

    def __init__(self, cfg, rng, large=False):
        self.cfg = cfg
        self.large = large
        self.params = init_params(baseline_specs(cfg, 2 if large else 1), rng.split("init"))

    @property
    def model_calls(self):
        return 0

    def imagine(self, obs, rng, params=None):
        return {}

    def policy_value(self, t, params, obs, extras):
        x = t.const(flat_obs(obs))
        c_mf = model_free_path(t, params, x)
        trunk = t.relu(t.affine(c_mf, t.param(params, "head.w_mf"), t.param(params, "head.b")))
        logits, value = heads(t, params, trunk)
        _check_activations(c_mf=c_mf, trunk=trunk, logits=logits)
        return logits, value, None

    def forward(self, obs, rng=None, params=None):
        t = Tape()
        logits, value, _ = self.policy_value(t, params or self.params, obs, {})
        return AgentOutput(logits.value, value.value[:, 0])


def baseline_forward(obs, params, cfg):
    """Functional form of the model-free baseline."""
    agent = BaselineAgent.__new__(BaselineAgent)
    agent.cfg = cfg
    t = Tape()
    logits, value, _ = agent.policy_value(t, params, obs, {})
    return AgentOutput(logits.value, value.value[:, 0])


class I2AAgent:
    """Full I2A: one rollout per action through ``model``, reverse-order LSTM
    encoder, concatenating aggregator, and a two-path policy/value head."""

    kind = "i2a"

    def __init__(self, cfg, model, rng):
        self.cfg = cfg
        self.model = model
        self.params = init_params(i2a_specs(cfg), rng.split("init"))

    @property
    def model_calls(self):
        return self.model.calls

    def _rollout_policy(self, params):
        return lambda x: rollout_policy_probs(params, x)

    def imagine(self, obs, rng, params=None):
        """n rollouts per observation; rollout i starts with action i.

        Returns frames (tau, B*n, ...) and rewards (tau, B*n) ordered
        observation-major (row ``b * n + i``).
        """
        params = params or self.params
        n = self.cfg.n_actions
        obs = np.asarray(obs, dtype=np.uint8)
        start = np.repeat(obs, n, axis=0)
        first = np.tile(np.arange(n), len(obs))
        frames, rewards, actions = rollout_batch(self.model, start, first, self._rollout_policy(params),
                                                 self.cfg.depth, rng)
        return {"frames": frames, "rewards": rewards, "actions": actions}

    def policy_value(self, t, params, obs, extras):
        cfg = self.cfg
        x = t.const(flat_obs(obs))
        c_mf = model_free_path(t, params, x)
        e = encode_rollouts(t, params, cfg, extras["frames"], extras["rewards"])
        c_ia = t.reshape(e, (len(obs), cfg.n_actions * cfg.lstm))
        pre = t.add(t.matmul(c_ia, t.param(params, "head.w_ia")),
                    t.matmul(c_mf, t.param(params, "head.w_mf")))
        trunk = t.relu(t.add(pre, t.param(params, "head.b")))
        logits, value = heads(t, params, trunk)
        _check_activations(c_mf=c_mf, c_ia=c_ia, trunk=trunk, logits=logits)
        distill = (logits, rollout_policy_logits(t, params, x))
        self._last = {"c_ia": c_ia.value, "c_mf": c_mf.value, "e": e.value}
        return logits, value, distill

    def forward(self, obs, rng, params=None):
        params = params or self.params
        extras = self.imagine(obs, rng, params)
        t = Tape()
        logits, value, _ = self.policy_value(t, params, obs, extras)
        diag = dict(self._last)
        diag["rollout_rewards"] = extras["rewards"]
        return AgentOutput(logits.value, value.value[:, 0], diag)


class CopyModelAgent(I2AAgent):
    """I2A architecture whose imagined frames are the input observation and
    whose predicted rewards are zero; issues no model calls."""

    kind = "copy"

    def __init__(self, cfg, rng):
        super().__init__(cfg, CopyModel(), rng)

    def imagine(self, obs, rng, params=None):
        n, tau = self.cfg.n_actions, self.cfg.depth
        obs = np.asarray(obs, dtype=np.uint8)
        start = np.repeat(obs, n, axis=0)
        frames = np.stack([start.copy() for _ in range(tau)])
        return {"frames": frames, "rewards": np.zeros((tau, len(start))),
                "actions": np.tile(np.arange(n), (tau, len(obs)))}


def imagine(obs, model, rollout_policy, cfg, rng):
    """Functional imagination: n rollouts per observation, rollout i forced to action i."""
    n = cfg.n_actions
    obs = np.asarray(obs, dtype=np.uint8)
    if obs.ndim == 3:
        obs = obs[None]
    start = np.repeat(obs, n, axis=0)
    first = np.tile(np.arange(n), len(obs))
    return rollout_batch(model, start, first, rollout_policy, cfg.depth, rng)


def encode_rollout(frames, rewards, params, cfg):
    """Embedding of a single rollout (frames (tau, 4, H, W), rewards (tau,))."""
    t = Tape()
    e = encode_rollouts(t, params, cfg, np.asarray(frames)[:, None], np.asarray(rewards, dtype=np.float64)[:, None])
    return e.value[0]
