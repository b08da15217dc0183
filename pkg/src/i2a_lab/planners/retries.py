"""Mental retries: replay whole episodes inside a model, act on the first success."""

from dataclasses import dataclass, field

import numpy as np

from ..models import solved_mask
from ..numerics import softmax
from ..sokoban.core import MAX_STEPS, decode
from .heuristics import heuristic_value

MAX_RETRIES = 16
DEFAULT_RETRIES = 10


@dataclass
class RetryResult:
    plan: list
    success: bool
    retries_used: int
    model_calls: int
    attempts: list = field(default_factory=list)  # per retry: (solved, length)


class LookaheadAgent:
    """One-step lookahead through ``model``: ``p(a) ~ exp((r_a + h(s'_a)) / temperature)``.

    Costs ``n_actions`` model calls per decision; predictions that do not
    decode to a valid state score ``-inf``.
    """

    def __init__(self, model, temperature=1.0, n_actions=5):
        self.model = model
        self.temperature = temperature
        self.n_actions = n_actions

    @property
    def model_calls(self):
        return self.model.calls

    def policy(self, obs, rng=None):
        obs = np.asarray(obs, dtype=np.uint8)
        n = self.n_actions
        start = np.repeat(obs, n, axis=0)
        nxt, rew = self.model.predict(start, np.tile(np.arange(n), len(obs)))
        rew = np.zeros(len(start)) if rew is None else rew
        scores = np.empty(len(start))
        for i, planes in enumerate(nxt):
            try:
                scores[i] = rew[i] + heuristic_value(decode(planes))
            except ValueError:
                scores[i] = -np.inf
        return softmax(scores.reshape(len(obs), n) / self.temperature)


def _sample(probs, rng):
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(probs), u, side="right"), len(probs) - 1))


def nested_retry_solve(agent, model, obs, rng, max_retries=DEFAULT_RETRIES, max_steps=MAX_STEPS):
    """Play up to ``max_retries`` imagined episodes from ``obs`` with ``agent``.

    ``agent.policy(obs_batch, rng)`` returns action probabilities and may use
    a model of its own.  Every model call is counted: the outer loop's and
    the agent's (once, if they share a model).  Returns the first action
    sequence whose imagined episode reaches a solved frame, or
    ``success=False`` when all retries fail.
    """
    if not 1 <= max_retries <= MAX_RETRIES:
        raise ValueError(f"max_retries must lie in [1, {MAX_RETRIES}]")
    counters = {id(model): model}
    inner = getattr(agent, "model", None)
    if inner is not None:
        counters[id(inner)] = inner
    before = {k: m.calls for k, m in counters.items()}

    def used():
        return sum(m.calls - before[k] for k, m in counters.items())

    attempts = []
    start = np.asarray(obs, dtype=np.uint8)
    for retry in range(1, max_retries + 1):
        x, plan, solved = start, [], False
        for _ in range(max_steps):
            a = _sample(agent.policy(x[None], rng)[0], rng)
            x, _ = model.step(x, a)
            plan.append(a)
            if solved_mask(x[None])[0]:
                solved = True
                break
        attempts.append((solved, len(plan)))
        if solved:
            return RetryResult(plan, True, retry, used(), attempts)
    return RetryResult([], False, max_retries, used(), attempts)


def success_curve(first_success, max_retries=MAX_RETRIES):
    """Cumulative success rate after r retries, r = 1..max_retries.

    ``first_success`` holds, per attempt, the 1-based retry that first
    succeeded (or ``None``).
    """
    firsts = np.array([np.inf if f is None else f for f in first_success], dtype=np.float64)
    return np.array([(firsts <= r).mean() for r in range(1, max_retries + 1)])
