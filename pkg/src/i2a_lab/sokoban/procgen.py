"""Procedural Sokoban levels: random-walk topology, entity placement, and
reverse play scored by ``RoomScore = BoxSwaps * sum(box displacement)``."""

import os
from dataclasses import dataclass, field

from ..rng import Rng, derive_seed, splitmix64
from .core import OPPOSITE, Action, SokobanState, replay

try:
    if os.environ.get("I2A_LAB_PURE_PYTHON"):
        raise ImportError("compiled kernels disabled by I2A_LAB_PURE_PYTHON")
    from ._kernels import reverse_play as _compiled_reverse_play
except ImportError:  # pragma: no cover - depends on build
    _compiled_reverse_play = None

from ._reverse_play import reverse_play as _python_reverse_play

HAVE_COMPILED = _compiled_reverse_play is not None
reverse_play_kernel = _compiled_reverse_play or _python_reverse_play

DIRECTIONS = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT)
# carve patterns as (row, col) offsets from the visited cell
PATTERNS = (
    ((0, 0),),
    ((0, 0), (0, 1)),
    ((0, 0), (1, 0)),
    ((0, 0), (0, 1), (1, 0), (1, 1)),
)
_ZOBRIST_SEED = 0x5EED_50C0_BA11_0001


class GenerationFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class GenParams:
    width: int = 10
    height: int = 10
    walk_steps: int = None
    turn_prob: float = 0.35
    max_depth: int = 300
    max_visited: int = 1_000_000
    topology_retries: int = 10
    placement_retries: int = 10
    num_boxes: int = 4

    def __post_init__(self):
        if self.walk_steps is None:
            object.__setattr__(self, "walk_steps", round(1.5 * (self.width + self.height)))
        if self.width < 5 or self.height < 5:
            raise ValueError("rooms must be at least 5x5")
        if not 0.0 <= self.turn_prob <= 1.0:
            raise ValueError("turn_prob must lie in [0, 1]")
        for name in ("max_depth", "max_visited", "topology_retries", "placement_retries", "num_boxes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.walk_steps < 0:
            raise ValueError("walk_steps must be non-negative")


@dataclass
class RoomCandidate:
    state: SokobanState
    score: int
    solution_trace: list
    seed: int = None
    visited: int = 0
    stats: dict = field(default_factory=dict)


_zobrist_cache = {}


def zobrist_table(n_cells):
    """``2 * n_cells`` fixed 64-bit keys: box-at-cell keys then player-at-cell keys."""
    table = _zobrist_cache.get(n_cells)
    if table is None:
        state = _ZOBRIST_SEED ^ n_cells
        table = []
        for _ in range(2 * n_cells):
            state, z = splitmix64(state)
            table.append(z)
        _zobrist_cache[n_cells] = table
    return table


def generate_topology(params, rng):
    """Carve corridors into a solid room with a turning random walk.

    Returns a frozenset of wall cells. The outer ring is never carved.
    """
    w, h = params.width, params.height
    floor = set()

    def carve(r, c):
        for dr, dc in rng.choice(PATTERNS):
            rr, cc = r + dr, c + dc
            if 1 <= rr <= h - 2 and 1 <= cc <= w - 2:
                floor.add(rr * w + cc)

    if params.walk_steps > 0:
        r = 1 + rng.randbelow(h - 2)
        c = 1 + rng.randbelow(w - 2)
        dr, dc = _dir_offsets(rng.choice(DIRECTIONS))
        for _ in range(params.walk_steps):
            if rng.random() < params.turn_prob:
                dr, dc = _dir_offsets(rng.choice(DIRECTIONS))
            r = min(max(r + dr, 1), h - 2)
            c = min(max(c + dc, 1), w - 2)
            carve(r, c)
    return frozenset(range(w * h)) - floor


def _dir_offsets(action):
    return {Action.UP: (-1, 0), Action.DOWN: (1, 0), Action.LEFT: (0, -1), Action.RIGHT: (0, 1)}[action]


def place_entities(walls, width, height, num_boxes, rng):
    """Pick target cells and the player start among empty cells.

    Returns ``(targets, player)`` or ``None`` when the room is too small.
    """
    empty = [cell for cell in range(width * height) if cell not in walls]
    if len(empty) < num_boxes + 1:
        return None
    picked = rng.sample(empty, num_boxes + 1)
    return picked[:num_boxes], picked[num_boxes]


def room_score(box_swaps, displacements):
    return box_swaps * sum(displacements)


def forward_trace(reverse_path):
    """Map reverse moves/pulls to the forward actions that undo them."""
    return [OPPOSITE[DIRECTIONS[a & 3]] for a in reversed(reverse_path)]


def reverse_play_search(walls, targets, player, params, rng, width=None, kernel=None):
    """Run reverse play from boxes-on-targets; return a :class:`RoomCandidate` or ``None``."""
    width = width or params.width
    n_cells = width * params.height
    wall_vec = [1 if cell in walls else 0 for cell in range(n_cells)]
    kernel = kernel or reverse_play_kernel
    out = kernel(wall_vec, list(targets), player, width, params.max_depth,
                 params.max_visited, zobrist_table(n_cells), rng.state)
    rng.state = out["rng_state"]
    if out["score"] <= 0:
        return None
    state = SokobanState(width, params.height, frozenset(walls), frozenset(targets),
                         frozenset(out["boxes"]), out["player"])
    stats = {"visited": out["visited"], "max_depth_seen": out["max_depth_seen"],
             "reverse_length": len(out["path"])}
    return RoomCandidate(state, out["score"], forward_trace(out["path"]),
                         visited=out["visited"], stats=stats)


def generate_level(params=GenParams(), seed=0, kernel=None):
    """Deterministic level for ``(params, seed)``.

    Retries up to ``topology_retries`` rooms, each with ``placement_retries``
    placements, until reverse play reaches a positive score.
    """
    rng = Rng(derive_seed("sokoban-level", seed))
    attempts = 0
    for _ in range(params.topology_retries):
        walls = generate_topology(params, rng)
        for _ in range(params.placement_retries):
            attempts += 1
            placed = place_entities(walls, params.width, params.height, params.num_boxes, rng)
            if placed is None:
                break
            targets, player = placed
            cand = reverse_play_search(walls, targets, player, params, rng, kernel=kernel)
            if cand is not None:
                cand.seed = seed
                cand.stats["attempts"] = attempts
                return cand
    raise GenerationFailed(f"no level with positive score for seed {seed} after {attempts} attempts")


def verify_candidate(cand):
    """Forward-replay oracle: the recorded trace must solve the level."""
    return replay(cand.state, cand.solution_trace).solved


def level_stream(params, seed):
    """Callable yielding a fresh generated level per call (seeds ``seed, seed+1, ...``)."""
    counter = [seed]

    def next_level():
        while True:
            s = counter[0]
            counter[0] += 1
            try:
                return generate_level(params, s).state
            except GenerationFailed:
                continue

    return next_level
