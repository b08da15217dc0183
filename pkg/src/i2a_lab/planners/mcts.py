"""UCT Monte-Carlo tree search over a Sokoban model.

Nodes are shared through a depth-wise transposition table keyed by
``(depth, boxes, player)``, where depth is the number of steps elapsed in
the episode.  Leaves are scored by a value function; there are no random
rollouts.  Because the table outlives a single search, calling
:meth:`Mcts.search` on the state reached after acting reuses the matching
subtree.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..models import PerfectModel
from ..sokoban.core import MAX_STEPS, Action, decode, encode, transition
from .heuristics import heuristic_value

N_ACTIONS = len(Action)


class SimulatorModel:
    """Exact Sokoban dynamics on :class:`SokobanState` with call accounting."""

    def __init__(self, max_steps=MAX_STEPS):
        self.max_steps = max_steps
        self.calls = 0

    def legal_actions(self, s):
        return range(N_ACTIONS)

    def step(self, s, action):
        self.calls += 1
        boxes, player, reward, _, _, solved = transition(s, action)
        nxt = s.__class__(s.width, s.height, s.walls, s.targets, boxes, player, s.steps_elapsed + 1)
        return nxt, reward, solved or nxt.steps_elapsed >= self.max_steps


class PlaneModel:
    """Adapter running a plane-level :class:`WorldModel` on states.

    The inner model's own counter does the accounting; predictions that do not
    decode to a valid state are treated as terminal.
    """

    def __init__(self, world_model=None, max_steps=MAX_STEPS):
        self.inner = world_model or PerfectModel()
        self.max_steps = max_steps

    @property
    def calls(self):
        return self.inner.calls

    def legal_actions(self, s):
        return range(N_ACTIONS)

    def step(self, s, action):
        planes, reward = self.inner.step(encode(s), action)
        reward = 0.0 if reward is None else reward
        try:
            nxt = decode(planes, s.steps_elapsed + 1)
        except ValueError:
            return s, reward, True
        return nxt, reward, nxt.solved or nxt.steps_elapsed >= self.max_steps


class _Node:
    __slots__ = ("state", "terminal", "value", "n", "na", "wa", "children", "rewards", "proof")

    def __init__(self, state, terminal, value):
        self.state = state
        self.terminal = terminal
        self.value = value
        self.n = 0
        self.na = [0] * N_ACTIONS
        self.wa = [0.0] * N_ACTIONS
        self.children = [None] * N_ACTIONS
        self.rewards = [0.0] * N_ACTIONS
        # moves to a solved state along expanded edges (None if unknown)
        self.proof = 0 if terminal and state.solved else None


@dataclass
class SearchStats:
    expansions: int = 0
    simulations: int = 0
    model_calls: int = 0
    nodes: int = 0
    q: list = field(default_factory=list)
    visits: list = field(default_factory=list)
    proven: bool = False


class Mcts:
    """UCT search with a persistent depth-wise transposition table.

    ``use_proofs`` lets a root action that provably reaches a solved state
    (through already expanded, deterministic edges) end the search early and
    be played; otherwise the final action is ``argmax_a Q(a)`` at the root.
    """

    def __init__(self, model=None, value_fn=heuristic_value, c=1.0, gamma=1.0, use_proofs=True,
                 max_simulations_factor=10):
        self.model = model or SimulatorModel()
        self.value_fn = value_fn
        self.c = c
        self.gamma = gamma
        self.use_proofs = use_proofs
        self.max_simulations_factor = max_simulations_factor
        self.table = {}

    @staticmethod
    def key(s):
        return (s.steps_elapsed, s.boxes, s.player)

    def _node(self, s, terminal):
        k = self.key(s)
        node = self.table.get(k)
        if node is None:
            node = _Node(s, terminal, 0.0 if terminal else float(self.value_fn(s)))
            self.table[k] = node
        return node

    def _select(self, node, actions):
        for a in actions:
            if node.na[a] == 0:
                return a
        log_n = math.log(node.n)
        best, best_score = None, -math.inf
        for a in actions:
            score = node.wa[a] / node.na[a] + self.c * math.sqrt(log_n / node.na[a])
            if score > best_score:
                best, best_score = a, score
        return best

    def _simulate(self, root):
        node, path, expanded = root, [], False
        while True:
            if node.terminal:
                leaf = 0.0
                break
            a = self._select(node, self.model.legal_actions(node.state))
            child = node.children[a]
            path.append((node, a))
            if child is None:
                nxt, reward, terminal = self.model.step(node.state, a)
                child = self._node(nxt, terminal)
                node.children[a] = child
                node.rewards[a] = float(reward)
                expanded = True
                leaf = child.value
                break
            node = child
        g = leaf
        for parent, a in reversed(path):
            g = parent.rewards[a] + self.gamma * g
            parent.n += 1
            parent.na[a] += 1
            parent.wa[a] += g
            child = parent.children[a]
            if child.proof is not None and (parent.proof is None or child.proof + 1 < parent.proof):
                parent.proof = child.proof + 1
        return expanded

    def _proven_action(self, root, actions):
        best, best_len = None, None
        for a in actions:
            child = root.children[a]
            if child is not None and child.proof is not None and (best_len is None or child.proof < best_len):
                best, best_len = a, child.proof
        return best

    def search(self, s, budget):
        """Spend up to ``budget`` node expansions from ``s``; returns ``(action, stats)``.

        ``action`` is ``None`` when ``s`` is terminal.
        """
        if budget < 1:
            raise ValueError("budget must be >= 1")
        calls_before = self.model.calls
        root = self._node(s, s.solved or s.steps_elapsed >= getattr(self.model, "max_steps", MAX_STEPS))
        stats = SearchStats()
        if root.terminal:
            return None, stats
        actions = list(self.model.legal_actions(s))
        if len(actions) == 1:
            stats.model_calls = self.model.calls - calls_before
            return actions[0], stats
        limit = budget * self.max_simulations_factor
        while stats.expansions < budget and stats.simulations < limit:
            if self.use_proofs and root.proof is not None:
                stats.proven = True
                break
            stats.simulations += 1
            stats.expansions += self._simulate(root)
        stats.model_calls = self.model.calls - calls_before
        stats.nodes = len(self.table)
        stats.q = [root.wa[a] / root.na[a] if root.na[a] else float("nan") for a in range(N_ACTIONS)]
        stats.visits = list(root.na)
        if self.use_proofs and root.proof is not None:
            stats.proven = True
            return self._proven_action(root, actions), stats
        visited = [a for a in actions if root.na[a] > 0]
        return max(visited, key=lambda a: root.wa[a] / root.na[a]), stats

    def prune(self, depth):
        """Drop nodes above ``depth``; they can no longer be reached."""
        self.table = {k: v for k, v in self.table.items() if k[0] >= depth}


def mcts_search(root, model=None, value_fn=heuristic_value, budget=1000, c=1.0, **kwargs):
    """One-shot search (fresh table)."""
    return Mcts(model, value_fn, c, **kwargs).search(root, budget)


@dataclass
class EpisodeResult:
    solved: bool
    steps: int
    model_calls: int
    actions: list
    total_return: float


def mcts_play(level, budget=10_000, c=1.0, model=None, value_fn=heuristic_value, max_steps=MAX_STEPS,
              reuse_tree=True, **kwargs):
    """Play one episode in the real environment, searching before every move."""
    model = model or SimulatorModel(max_steps)
    search = Mcts(model, value_fn, c, **kwargs)
    env = SimulatorModel(max_steps)
    s, ret, actions = level, 0.0, []
    calls_before = model.calls
    while not s.solved and s.steps_elapsed < max_steps:
        if not reuse_tree:
            search.table = {}
        a, _ = search.search(s, budget)
        s, r, _ = env.step(s, a)
        ret += r
        actions.append(int(a))
        search.prune(s.steps_elapsed)
    return EpisodeResult(bool(s.solved), len(actions), model.calls - calls_before, actions, ret)


def q_values(stats):
    return np.asarray(stats.q, dtype=np.float64)
