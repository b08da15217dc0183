"""Monte-Carlo search agent: one rollout per action, no rollout encoder.

For each action ``a`` the agent imagines a rollout of depth ``tau`` that
starts with ``a`` and continues with the distilled policy, then scores it as

    R_a = sum_{t=0}^{tau-1} gamma^t r_{a,t} + V(x_{a,tau})

and acts with probabilities proportional to ``exp(R_a / delta)``, with the
temperature ``delta = softplus(rho) + DELTA_FLOOR``.  ``literal_sign=True``
uses ``exp(-R_a / delta)`` instead.  Only V, the rollout policy and delta
have parameters.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..agents.i2a import (AgentOutput, flat_obs, rollout_policy_logits, rollout_policy_probs,
                          rollout_policy_specs)
from ..models import rollout_batch
from ..numerics import Tape, init_params, softmax

DELTA_FLOOR = 1e-6


@dataclass
class McSearchConfig:
    obs_shape: tuple = (4, 10, 10)
    n_actions: int = 5
    depth: int = 5
    gamma: float = 1.0
    embed: int = 32
    rollout_embed: int = 16
    delta_init: float = 1.0
    literal_sign: bool = False

    def __post_init__(self):
        self.obs_shape = tuple(self.obs_shape)
        if self.depth < 1:
            raise ValueError("rollout depth must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    @property
    def obs_size(self):
        return int(np.prod(self.obs_shape))

    def to_dict(self):
        return asdict(self)


def mc_search_specs(cfg):
    return ([("v.emb.w", (cfg.obs_size, cfg.embed)), ("v.emb.b", (cfg.embed,)),
             ("v.out.w", (cfg.embed, 1)), ("v.out.b", (1,)), ("delta.rho", (1,))]
            + rollout_policy_specs(cfg))


def inverse_softplus(y):
    return float(np.log(np.expm1(y)))


def mc_search_probs(returns, delta, literal_sign=False):
    """Action distribution for returns ``R`` (..., n) at temperature ``delta``."""
    returns = np.asarray(returns, dtype=np.float64)
    if not np.all(np.isfinite(returns)):
        raise FloatingPointError("non-finite rollout returns")
    if delta <= 0:
        raise ValueError("temperature must be positive")
    sign = -1.0 if literal_sign else 1.0
    return softmax(sign * returns / delta)


def discounted_rewards(rewards, gamma):
    """``sum_t gamma^t r_t`` over the leading (depth) axis."""
    rewards = np.asarray(rewards, dtype=np.float64)
    weights = gamma ** np.arange(len(rewards))
    return np.tensordot(weights, rewards, axes=(0, 0))


def _value(t, params, x):
    h = t.relu(t.affine(x, t.param(params, "v.emb.w"), t.param(params, "v.emb.b")))
    return t.affine(h, t.param(params, "v.out.w"), t.param(params, "v.out.b"))


class McSearchAgent:
    kind = "mc-search"

    def __init__(self, cfg, model, rng):
        self.cfg = cfg
        self.model = model
        self.params = init_params(mc_search_specs(cfg), rng.split("init"))
        self.params["delta.rho"] = inverse_softplus(cfg.delta_init)

    @property
    def model_calls(self):
        return self.model.calls

    def delta(self, params=None):
        rho = float((params or self.params)["delta.rho"][0])
        return float(np.logaddexp(0.0, rho)) + DELTA_FLOOR

    def imagine(self, obs, rng, params=None):
        params = params or self.params
        n = self.cfg.n_actions
        obs = np.asarray(obs, dtype=np.uint8)
        start = np.repeat(obs, n, axis=0)
        first = np.tile(np.arange(n), len(obs))
        frames, rewards, actions = rollout_batch(self.model, start, first,
                                                 lambda x: rollout_policy_probs(params, x), self.cfg.depth, rng)
        return {"frames": frames, "rewards": rewards, "actions": actions}

    def policy_value(self, t, params, obs, extras):
        cfg = self.cfg
        b, n = len(obs), cfg.n_actions
        x = t.const(flat_obs(obs))
        value = _value(t, params, x)
        last = t.const(flat_obs(extras["frames"][-1]))
        v_last = t.reshape(_value(t, params, last), (b, n))
        disc = discounted_rewards(extras["rewards"], cfg.gamma).reshape(b, n)
        returns = t.add(t.const(disc), v_last)
        if not np.all(np.isfinite(returns.value)):
            raise FloatingPointError("non-finite rollout returns")
        delta = t.add_const(t.softplus(t.param(params, "delta.rho")), DELTA_FLOOR)
        logits = t.div(returns, delta)
        if cfg.literal_sign:
            logits = t.scale(logits, -1.0)
        distill = (logits, rollout_policy_logits(t, params, x))
        self._last = {"returns": returns.value, "delta": float(delta.value[0])}
        return logits, value, distill

    def forward(self, obs, rng, params=None):
        params = params or self.params
        extras = self.imagine(obs, rng, params)
        t = Tape()
        logits, value, _ = self.policy_value(t, params, obs, extras)
        return AgentOutput(logits.value, value.value[:, 0], dict(self._last))


def mc_search_act(obs, model, agent, rng):
    """Action probabilities of ``agent`` (a :class:`McSearchAgent`) for ``obs`` using ``model``."""
    saved = agent.model
    agent.model = model
    try:
        return agent.forward(np.asarray(obs)[None] if np.ndim(obs) == 3 else obs, rng).probs
    finally:
        agent.model = saved
