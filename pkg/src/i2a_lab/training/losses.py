"""Actor-critic surrogate losses, k-step advantages and policy distillation."""

from dataclasses import dataclass

import numpy as np

from ..numerics import softmax

LAMBDA_ENT = 1e-2
LAMBDA_DIST = 1e-2


def kstep_advantage(rewards, values, next_values, terminals, truncations, gamma, k):
    """Bootstrapped k-step advantage for a (T, E) batch of unrolled steps.

    For step t the return window runs over ``t .. end`` where ``end`` is the
    first of ``t + k``, the last step of the batch, or the step at which the
    episode ended.  Then

        A_t = sum_{j=t}^{end} gamma^(j-t) r_j + gamma^(end-t+1) B_end - V(o_t)

    with ``B_end = 0`` if step ``end`` was terminal and ``B_end =
    next_values[end]`` (the value of the observation that followed it)
    otherwise, including steps truncated by a step cap.  ``k = 0`` is the
    one-step TD error.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    nv = np.asarray(next_values, dtype=np.float64)
    term = np.asarray(terminals, dtype=bool)
    ended = term | np.asarray(truncations, dtype=bool)
    if not np.all(np.isfinite(r)):
        raise ValueError("rewards must be finite")
    n_steps = len(r)
    adv = np.empty_like(r)
    for t in range(n_steps):
        total = np.zeros(r.shape[1:])
        boot = np.zeros(r.shape[1:])
        open_ = np.ones(r.shape[1:], dtype=bool)
        last = min(t + k, n_steps - 1)
        for j in range(t, last + 1):
            total = total + np.where(open_, gamma ** (j - t) * r[j], 0.0)
            closes = open_ & (ended[j] | (j == last))
            tail = np.where(term[j], 0.0, gamma ** (j - t + 1) * nv[j])
            boot = np.where(closes, tail, boot)
            open_ = open_ & ~closes
        adv[t] = total + boot - v[t]
    return adv


@dataclass
class LossBreakdown:
    """Tape nodes of each term; ``total`` is their weighted sum."""

    policy: object
    value: object
    entropy: object
    distillation: object
    total: object
    lambda_ent: float
    lambda_dist: float

    def scalars(self):
        out = {}
        for name in ("policy", "value", "entropy", "distillation", "total"):
            node = getattr(self, name)
            out[name] = 0.0 if node is None else float(node.value)
        return out


def policy_terms(t, logits, actions, advantages):
    """Policy surrogate ``-mean(A * log pi(a))`` (A constant) and negative entropy ``mean(sum pi log pi)``."""
    logp = t.log_softmax(logits)
    chosen = t.gather(logp, actions)
    if np.any(np.exp(chosen.value) == 0.0):
        raise FloatingPointError("chosen action has zero probability")
    adv = t.const(np.asarray(advantages, dtype=np.float64))
    policy = t.scale(t.mean(t.mul(adv, chosen)), -1.0)
    probs = t.exp(logp)
    neg_entropy = t.mean(t.sum_rows(t.mul(probs, logp)))
    return policy, neg_entropy


def value_term(t, values, returns):
    """``mean(0.5 (R - V)^2)`` with R constant; its gradient is ``-A dV``."""
    diff = t.sub(t.const(np.asarray(returns, dtype=np.float64)[:, None]), values)
    return t.scale(t.mean(t.square(diff)), 0.5)


def distill_term(t, target_logits, student_logits, literal_sign=False, target_probs=None):
    """Cross-entropy ``-mean(sum sg(pi) log pi_hat)``.

    The target distribution enters as a constant so no gradient reaches its
    parameters; ``target_probs`` overrides it (finite-difference checks pin
    it at the unperturbed point).  ``log pi_hat`` comes from a stable log-softmax and is finite
    for finite logits, so no clipping epsilon is needed.
    ``literal_sign=True`` drops the minus sign.
    """
    if target_probs is None:
        target_probs = softmax(np.asarray(target_logits.value))
    target = t.const(target_probs)
    logq = t.log_softmax(student_logits)
    ce = t.mean(t.sum_rows(t.mul(target, logq)))
    return ce if literal_sign else t.scale(ce, -1.0)


def actor_critic_loss(t, logits, values, actions, advantages, distill=None, lambda_ent=LAMBDA_ENT,
                      lambda_dist=LAMBDA_DIST, literal_distill=False, returns=None, distill_target=None):
    """Full surrogate: ``policy + value + lambda_ent*entropy + lambda_dist*distillation``.

    The value target defaults to ``A + V``.  ``returns`` and ``distill_target``
    pin the stop-gradient quantities explicitly.
    """
    advantages = np.asarray(advantages, dtype=np.float64)
    if returns is None:
        returns = advantages + values.value[:, 0]
    policy, neg_entropy = policy_terms(t, logits, actions, advantages)
    value = value_term(t, values, returns)
    total = t.add(t.add(policy, value), t.scale(neg_entropy, lambda_ent))
    dist = None
    if distill is not None:
        dist = distill_term(t, *distill, literal_sign=literal_distill, target_probs=distill_target)
        total = t.add(total, t.scale(dist, lambda_dist))
    return LossBreakdown(policy, value, neg_entropy, dist, total, lambda_ent, lambda_dist)


def kl_divergence(p, q, eps=1e-12):
    """Mean ``KL(p || q)`` over rows."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float(np.mean(np.sum(p * (np.log(p + eps) - np.log(q + eps)), axis=-1)))
