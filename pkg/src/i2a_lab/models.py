"""Environment models used for imagination.

Every model maps a batch of symbolic observations (``N x 4 x H x W`` uint8
planes: wall, target, box, player) and actions to next observations and
optionally predicted rewards.  Each (observation, action) pair counts as one
model call.
"""

import json
import threading
from dataclasses import dataclass

import numpy as np

from .sokoban.core import (BOX, BOX_OFF_TARGET, BOX_ON_TARGET, PLAYER, SOLVE_BONUS,
                           STEP_PENALTY, TARGET, WALL, Action, LevelError)

# (row, col) shift for each action; NOOP is (0, 0)
_SHIFTS = {Action.UP: (-1, 0), Action.DOWN: (1, 0), Action.LEFT: (0, -1), Action.RIGHT: (0, 1)}


def shift(x, dr, dc):
    """Move the content of boolean grids (..., H, W) by (dr, dc), zero-filling."""
    out = np.zeros_like(x)
    h, w = x.shape[-2:]
    src_r = slice(max(0, -dr), h - max(0, dr))
    dst_r = slice(max(0, dr), h - max(0, -dr))
    src_c = slice(max(0, -dc), w - max(0, dc))
    dst_c = slice(max(0, dc), w - max(0, -dc))
    out[..., dst_r, dst_c] = x[..., src_r, src_c]
    return out


def solved_mask(planes):
    boxes = planes[:, BOX].astype(bool)
    off = boxes & ~planes[:, TARGET].astype(bool)
    return boxes.any(axis=(1, 2)) & ~off.any(axis=(1, 2))


def step_planes(planes, actions):
    """Sokoban dynamics applied directly to observation planes.

    Coincides with ``sokoban.core.transition`` on valid observations and stays
    well defined on corrupted ones (no player, several players, stray boxes).
    An already-solved observation is absorbing with reward 0.
    """
    planes = np.asarray(planes, dtype=np.uint8)
    actions = np.asarray(actions, dtype=np.int64)
    wall = planes[:, WALL].astype(bool)
    tgt = planes[:, TARGET].astype(bool)
    box = planes[:, BOX].astype(bool)
    ply = planes[:, PLAYER].astype(bool)
    new_box, new_ply = box.copy(), ply.copy()
    on_count = np.zeros(len(planes))
    off_count = np.zeros(len(planes))
    free = ~wall & ~box
    for action, (dr, dc) in _SHIFTS.items():
        sel = actions == action
        if not sel.any():
            continue
        P, B, F, T = ply[sel], box[sel], free[sel], tgt[sel]
        ahead = shift(P, dr, dc)
        move_to = ahead & F
        push_from = ahead & B
        push_to = shift(push_from, dr, dc) & F
        push_from = shift(push_to, -dr, -dc)
        entered = move_to | push_from
        left = shift(entered, -dr, -dc)
        new_ply[sel] = (P & ~left) | entered
        new_box[sel] = (B & ~push_from) | push_to
        on_count[sel] = (push_to & T & shift(push_from & ~T, dr, dc)).sum(axis=(1, 2))
        off_count[sel] = (push_to & ~T & shift(push_from & T, dr, dc)).sum(axis=(1, 2))
    out = planes.copy()
    out[:, BOX] = new_box
    out[:, PLAYER] = new_ply
    solved = solved_mask(out)
    reward = STEP_PENALTY + BOX_ON_TARGET * on_count + BOX_OFF_TARGET * off_count + SOLVE_BONUS * solved
    done_in = solved_mask(planes)
    out[done_in] = planes[done_in]
    reward[done_in] = 0.0
    return out, reward


def frame_reward(before, after):
    """Reward implied by a predicted transition between two (possibly invalid) frames.

    Equals :func:`step_planes`'s reward whenever ``after`` is the exact
    successor of a valid ``before``.
    """
    before = np.asarray(before, dtype=np.uint8)
    after = np.asarray(after, dtype=np.uint8)
    on_b = (before[:, BOX] & before[:, TARGET]).sum(axis=(1, 2))
    on_a = (after[:, BOX] & after[:, TARGET]).sum(axis=(1, 2))
    done_in = solved_mask(before)
    reward = STEP_PENALTY + BOX_ON_TARGET * (on_a - on_b) + SOLVE_BONUS * solved_mask(after)
    reward = reward.astype(np.float64)
    reward[done_in] = 0.0
    return reward


def validate_planes(planes):
    """Raise :class:`LevelError` unless every observation decodes to a valid state."""
    wall = planes[:, WALL].astype(bool)
    box = planes[:, BOX].astype(bool)
    ply = planes[:, PLAYER].astype(bool)
    n_players = ply.sum(axis=(1, 2))
    bad = (n_players != 1) | (box & wall).any(axis=(1, 2)) | (ply & (wall | box)).any(axis=(1, 2))
    bad |= ~box.any(axis=(1, 2))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise LevelError(f"observation {i} does not decode to a valid Sokoban state "
                         f"({int(n_players[i])} players)")


class WorldModel:
    """Base class: subclasses implement ``_predict``; ``predict`` does the accounting."""

    predicts_reward = True

    def __init__(self):
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self):
        return self._calls

    def reset_calls(self):
        with self._lock:
            self._calls = 0

    def predict(self, features, actions):
        """Batched prediction; returns ``(next_features, rewards or None)``."""
        features = np.asarray(features, dtype=np.uint8)
        if features.ndim == 3:
            features = features[None]
        actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        if len(actions) != len(features):
            raise ValueError("features and actions disagree on batch size")
        with self._lock:
            self._calls += len(features)
        nxt, rew = self._predict(features, actions)
        if nxt.shape != features.shape:
            raise RuntimeError("model changed the observation shape")
        if not self.predicts_reward:
            rew = None
        return nxt, rew

    def step(self, features, action):
        """Single-observation convenience wrapper."""
        nxt, rew = self.predict(np.asarray(features)[None], [int(action)])
        return nxt[0], (None if rew is None else float(rew[0]))

    def _predict(self, features, actions):
        raise NotImplementedError


class PerfectModel(WorldModel):
    """Simulator-backed model: exact next observation and reward."""

    def __init__(self, predicts_reward=True):
        super().__init__()
        self.predicts_reward = predicts_reward

    def _predict(self, features, actions):
        validate_planes(features)
        return step_planes(features, actions)


@dataclass
class CorruptionParams:
    """Per-cell corruption applied after each exact step.

    ``mode`` is ``toggle`` (cell flips: missing or duplicate sprites),
    ``delete`` (cell cleared) or ``duplicate`` (cell set).

    ``reward_mode`` ``frame`` reports the reward implied by the corrupted
    output frame (step penalty, change in boxes on targets, solve bonus if
    the frame shows a solved room); ``exact`` reports the exact step's
    reward on the input, which ignores the corruption of the output.
    """

    flip_prob: float = 0.1
    planes: tuple = (BOX, PLAYER)
    mode: str = "toggle"
    seed: int = 0
    reward_mode: str = "frame"

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")
        if self.mode not in ("toggle", "delete", "duplicate"):
            raise ValueError(f"unknown corruption mode {self.mode!r}")
        if self.reward_mode not in ("frame", "exact"):
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")


class CorruptedModel(WorldModel):
    """Exact dynamics followed by independent per-cell corruption.

    Rewards are those of the exact step on the (possibly already corrupted)
    input, so errors compound along a rollout.
    """

    def __init__(self, params=None, predicts_reward=True):
        super().__init__()
        self.params = params or CorruptionParams()
        self.predicts_reward = predicts_reward
        self._gen = np.random.Generator(np.random.PCG64(self.params.seed))

    def _predict(self, features, actions):
        out, reward = step_planes(features, actions)
        p = self.params.flip_prob
        if p > 0.0:
            for plane in self.params.planes:
                hit = self._gen.random(out[:, plane].shape) < p
                if self.params.mode == "toggle":
                    out[:, plane] ^= hit.astype(np.uint8)
                elif self.params.mode == "delete":
                    out[:, plane][hit] = 0
                else:
                    out[:, plane][hit] = 1
            if self.params.reward_mode == "frame":
                reward = frame_reward(features, out)
        return out, reward


class CopyModel(WorldModel):
    """Returns its input unchanged and predicts zero reward."""

    def _predict(self, features, actions):
        return features.copy(), np.zeros(len(features))


# ---------------------------------------------------------------------------
# learned local model

_WALL_CODE = 1
_N_CODES = 16


def cell_codes(planes):
    """Per-cell class in [0, 16): wall + 2*target + 4*box + 8*player."""
    p = np.asarray(planes, dtype=np.int64)
    return p[:, WALL] + 2 * p[:, TARGET] + 4 * p[:, BOX] + 8 * p[:, PLAYER]


def _contexts(codes, actions):
    """Integer context per cell: action plus the 5 cells on the action's axis
    centred on the cell (out-of-grid cells read as wall)."""
    n, h, w = codes.shape
    keys = np.zeros((n, h, w), dtype=np.int64)
    padded = np.full((n, h + 4, w + 4), _WALL_CODE, dtype=np.int64)
    padded[:, 2:h + 2, 2:w + 2] = codes
    for a in range(len(Action)):
        sel = actions == a
        if not sel.any():
            continue
        dr, dc = _SHIFTS.get(Action(a), (0, 0))
        k = np.full((int(sel.sum()), h, w), a, dtype=np.int64)
        for off in (-2, -1, 0, 1, 2):
            r0, c0 = 2 + off * dr, 2 + off * dc
            k = k * _N_CODES + padded[sel, r0:r0 + h, c0:c0 + w]
        keys[sel] = k
    return keys


def _reward_features(before, after):
    on_b = (before[:, BOX] & before[:, TARGET]).sum(axis=(1, 2))
    on_a = (after[:, BOX] & after[:, TARGET]).sum(axis=(1, 2))
    return np.stack([np.ones(len(before)), on_a - on_b, solved_mask(after)], axis=1).astype(np.float64)


class LocalModel(WorldModel):
    """Per-cell categorical predictor fit by maximum likelihood (counts),
    decoded by argmax, plus a linear reward regressor."""

    FORMAT = "i2a-lab-local-model"
    VERSION = 1

    def __init__(self, keys, codes, reward_coef, shape, predicts_reward=True):
        super().__init__()
        order = np.argsort(keys)
        self.keys = np.asarray(keys, dtype=np.int64)[order]
        self.codes = np.asarray(codes, dtype=np.int64)[order]
        self.reward_coef = np.asarray(reward_coef, dtype=np.float64)
        self.shape = tuple(shape)
        self.predicts_reward = predicts_reward

    def predict_codes(self, features, actions):
        codes = cell_codes(features)
        ctx = _contexts(codes, actions)
        idx = np.searchsorted(self.keys, ctx)
        idx_c = np.minimum(idx, len(self.keys) - 1)
        known = self.keys[idx_c] == ctx
        return np.where(known, self.codes[idx_c], codes)

    def _predict(self, features, actions):
        codes = self.predict_codes(features, actions)
        out = np.stack([(codes >> bit) & 1 for bit in range(4)], axis=1).astype(np.uint8)
        reward = _reward_features(features, out) @ self.reward_coef
        return out, reward

    def to_json(self):
        return json.dumps({"format": self.FORMAT, "version": self.VERSION,
                           "shape": list(self.shape), "keys": self.keys.tolist(),
                           "codes": self.codes.tolist(), "reward_coef": self.reward_coef.tolist(),
                           "predicts_reward": self.predicts_reward})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if d.get("format") != cls.FORMAT or d.get("version") != cls.VERSION:
            raise ValueError("not a version-1 local model file")
        return cls(d["keys"], d["codes"], d["reward_coef"], d["shape"], d["predicts_reward"])


def fit_local_model(transitions):
    """Fit a :class:`LocalModel` from ``(obs, action, next_obs, reward)`` tuples."""
    if not transitions:
        raise ValueError("cannot fit a model on empty data")
    obs = np.stack([t[0] for t in transitions]).astype(np.uint8)
    acts = np.array([int(t[1]) for t in transitions], dtype=np.int64)
    nxt = np.stack([t[2] for t in transitions]).astype(np.uint8)
    rew = np.array([float(t[3]) for t in transitions])
    if obs.shape != nxt.shape:
        raise ValueError("inconsistent observation shapes")
    ctx = _contexts(cell_codes(obs), acts).ravel()
    target = cell_codes(nxt).ravel()
    pair = ctx * _N_CODES + target
    uniq, counts = np.unique(pair, return_counts=True)
    ctx_u, tgt_u = uniq // _N_CODES, uniq % _N_CODES
    # for each context keep the most frequent next code (ties -> smallest code)
    order = np.lexsort((tgt_u, -counts, ctx_u))
    ctx_s, tgt_s = ctx_u[order], tgt_u[order]
    first = np.ones(len(ctx_s), dtype=bool)
    first[1:] = ctx_s[1:] != ctx_s[:-1]
    coef, *_ = np.linalg.lstsq(_reward_features(obs, nxt), rew, rcond=None)
    return LocalModel(ctx_s[first], tgt_s[first], coef, obs.shape[1:])


def cell_accuracy(model, transitions):
    """Fraction of cells predicted exactly on held-out transitions."""
    obs = np.stack([t[0] for t in transitions]).astype(np.uint8)
    acts = np.array([int(t[1]) for t in transitions], dtype=np.int64)
    nxt = np.stack([t[2] for t in transitions]).astype(np.uint8)
    return float((model.predict_codes(obs, acts) == cell_codes(nxt)).mean())


# ---------------------------------------------------------------------------
# rollouts

@dataclass
class Rollout:
    """One imagined trajectory: ``frames[t]`` and ``rewards[t]`` for t = 1..tau."""

    frames: np.ndarray
    rewards: np.ndarray
    actions: np.ndarray

    def __len__(self):
        return len(self.frames)


def sample_actions(probs, rng):
    """One categorical draw per row of ``probs`` from an :class:`Rng`."""
    u = np.array([rng.random() for _ in range(len(probs))])
    cdf = np.cumsum(probs, axis=1)
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def rollout_batch(model, features, first_actions, rollout_policy, depth, rng):
    """Imagine ``depth`` steps for each row; exactly ``depth * N`` model calls.

    Returns frames ``(depth, N, 4, H, W)``, rewards ``(depth, N)`` (zeros if
    the model predicts none) and actions ``(depth, N)``.
    """
    if depth < 1:
        raise ValueError("rollout depth must be >= 1")
    x = np.asarray(features, dtype=np.uint8)
    a = np.asarray(first_actions, dtype=np.int64)
    frames, rewards, actions = [], [], []
    for t in range(depth):
        if t > 0:
            a = sample_actions(rollout_policy(x), rng)
        x, r = model.predict(x, a)
        frames.append(x)
        rewards.append(np.zeros(len(x)) if r is None else np.asarray(r, dtype=np.float64))
        actions.append(a)
    return np.stack(frames), np.stack(rewards), np.stack(actions)


def rollout(model, features, first_action, rollout_policy, depth, rng):
    frames, rewards, actions = rollout_batch(model, np.asarray(features)[None], [first_action],
                                             rollout_policy, depth, rng)
    return Rollout(frames[:, 0], rewards[:, 0], actions[:, 0])
