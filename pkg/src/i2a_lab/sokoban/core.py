"""Sokoban dynamics with the shaped reward and 120-step episode cap."""

from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

STEP_PENALTY = -0.1
BOX_ON_TARGET = 1.0
BOX_OFF_TARGET = -1.0
SOLVE_BONUS = 10.0
MAX_STEPS = 120

# Observation planes, in order.
PLANES = ("wall", "target", "box", "player")
WALL, TARGET, BOX, PLAYER = range(4)


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    NOOP = 4


N_ACTIONS = len(Action)
MOVES = {Action.UP: (-1, 0), Action.DOWN: (1, 0), Action.LEFT: (0, -1), Action.RIGHT: (0, 1)}
OPPOSITE = {Action.UP: Action.DOWN, Action.DOWN: Action.UP,
            Action.LEFT: Action.RIGHT, Action.RIGHT: Action.LEFT}
ACTION_LETTERS = {Action.UP: "u", Action.DOWN: "d", Action.LEFT: "l", Action.RIGHT: "r", Action.NOOP: "n"}
LETTER_ACTIONS = {v: k for k, v in ACTION_LETTERS.items()}


class LevelError(ValueError):
    pass


class EpisodeDone(RuntimeError):
    pass


@dataclass(frozen=True)
class SokobanState:
    """Immutable Sokoban position. Cells are linear indices ``row * width + col``."""

    width: int
    height: int
    walls: frozenset
    targets: frozenset
    boxes: frozenset
    player: int
    steps_elapsed: int = 0

    def delta(self, action):
        dr, dc = MOVES[Action(action)]
        return dr * self.width + dc

    @property
    def solved(self):
        return self.boxes <= self.targets

    @property
    def boxes_on_target(self):
        return len(self.boxes & self.targets)

    def key(self):
        return (self.boxes, self.player)

    def free(self, cell):
        return cell not in self.walls and cell not in self.boxes

    def check(self):
        """Raise :class:`LevelError` if any structural invariant is broken."""
        n = self.width * self.height
        if self.player in self.walls or self.player in self.boxes:
            raise LevelError(f"player on blocked cell {self.rc(self.player)}")
        if self.boxes & self.walls:
            raise LevelError(f"box on wall at {self.rc(min(self.boxes & self.walls))}")
        if not self.boxes:
            raise LevelError("level has no boxes")
        if len(self.targets) < len(self.boxes):
            raise LevelError("fewer targets than boxes")
        for cell in (self.player, *self.boxes, *self.targets):
            if not 0 <= cell < n:
                raise LevelError(f"cell {cell} outside {self.height}x{self.width} grid")
        if not 0 <= self.steps_elapsed <= MAX_STEPS:
            raise LevelError(f"steps_elapsed {self.steps_elapsed} outside [0, {MAX_STEPS}]")

    def rc(self, cell):
        return divmod(cell, self.width)


@dataclass(frozen=True)
class StepOutcome:
    state: SokobanState
    reward: float
    done: bool
    truncated: bool
    pushed_on_target: bool
    pushed_off_target: bool
    solved: bool


def transition(s, action):
    """One move without episode bookkeeping.

    Returns ``(boxes, player, reward, pushed_on, pushed_off, solved)``.
    """
    action = Action(action)
    boxes, player = s.boxes, s.player
    pushed_on = pushed_off = False
    if action != Action.NOOP:
        d = s.delta(action)
        nxt = player + d
        if nxt not in s.walls:
            if nxt in boxes:
                beyond = nxt + d
                if beyond not in s.walls and beyond not in boxes:
                    boxes = (boxes - {nxt}) | {beyond}
                    player = nxt
                    pushed_on = beyond in s.targets and nxt not in s.targets
                    pushed_off = nxt in s.targets and beyond not in s.targets
            else:
                player = nxt
    solved = boxes <= s.targets
    reward = STEP_PENALTY
    if pushed_on:
        reward += BOX_ON_TARGET
    if pushed_off:
        reward += BOX_OFF_TARGET
    if solved:
        reward += SOLVE_BONUS
    return boxes, player, reward, pushed_on, pushed_off, solved


def step(s, action, max_steps=MAX_STEPS):
    """Advance an episode by one action.

    ``done`` is set when the level is solved or ``max_steps`` is reached; the
    latter also sets ``truncated`` so a learner can bootstrap from the last frame.
    """
    if s.solved or s.steps_elapsed >= max_steps:
        raise EpisodeDone("cannot step a finished episode")
    boxes, player, reward, on, off, solved = transition(s, action)
    steps = s.steps_elapsed + 1
    nxt = replace(s, boxes=boxes, player=player, steps_elapsed=steps)
    truncated = not solved and steps >= max_steps
    return StepOutcome(nxt, reward, solved or truncated, truncated, on, off, solved)


def replay(s, actions):
    """Apply actions ignoring the step cap; stop early once solved."""
    for a in actions:
        if s.solved:
            break
        boxes, player, *_ = transition(s, a)
        s = replace(s, boxes=boxes, player=player)
    return s


# ---------------------------------------------------------------------------
# text format

_SYMBOLS = {"#", " ", ".", "$", "*", "@", "+", "-", "_"}


def parse_level(text):
    """Parse the standard text format (``#`` wall, ``.`` target, ``$`` box,
    ``*`` box on target, ``@`` player, ``+`` player on target).

    ``;`` comment lines and blank lines are ignored.
    """
    rows = [line.rstrip("\n") for line in text.splitlines()]
    rows = [r for r in rows if r.strip() and not r.lstrip().startswith(";")]
    if not rows:
        raise LevelError("empty level")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise LevelError(f"non-rectangular level: row {i} has length {len(row)}, expected {width}")
    walls, targets, boxes, players = set(), set(), set(), []
    for r, row in enumerate(rows):
        for c, ch in enumerate(row):
            if ch not in _SYMBOLS:
                raise LevelError(f"unknown symbol {ch!r} at row {r}, col {c}")
            cell = r * width + c
            if ch == "#":
                walls.add(cell)
            if ch in ".*+":
                targets.add(cell)
            if ch in "$*":
                boxes.add(cell)
            if ch in "@+":
                players.append((r, c))
    if not players:
        raise LevelError("no player")
    if len(players) > 1:
        raise LevelError(f"multiple players at {players}")
    r, c = players[0]
    s = SokobanState(width, len(rows), frozenset(walls), frozenset(targets),
                     frozenset(boxes), r * width + c)
    s.check()
    return s


def render(s):
    out = []
    for r in range(s.height):
        row = []
        for c in range(s.width):
            cell = r * s.width + c
            if cell in s.walls:
                row.append("#")
            elif cell == s.player:
                row.append("+" if cell in s.targets else "@")
            elif cell in s.boxes:
                row.append("*" if cell in s.targets else "$")
            elif cell in s.targets:
                row.append(".")
            else:
                row.append(" ")
        out.append("".join(row))
    return "\n".join(out)


def parse_level_file(text):
    """Split a multi-level file into ``(metadata, state)`` pairs.

    Levels are separated by blank lines; ``; key: value`` comments preceding a
    level become its metadata.
    """
    levels, meta, block = [], {}, []

    def flush():
        nonlocal meta, block
        if block:
            levels.append((meta, parse_level("\n".join(block))))
        meta, block = {}, []

    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith(";"):
            if block:
                flush()
            body = stripped[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip()] = v.strip()
        elif not stripped:
            flush()
        else:
            block.append(line)
    flush()
    return levels


def format_level(s, meta=None):
    lines = [f"; {k}: {v}" for k, v in (meta or {}).items()]
    lines.append(render(s))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# symbolic observation planes

def encode(s):
    """4 x H x W one-hot planes (wall, target, box, player) as uint8."""
    planes = np.zeros((4, s.height * s.width), dtype=np.uint8)
    planes[WALL, list(s.walls)] = 1
    planes[TARGET, list(s.targets)] = 1
    if s.boxes:
        planes[BOX, list(s.boxes)] = 1
    planes[PLAYER, s.player] = 1
    return planes.reshape(4, s.height, s.width)


def decode(planes, steps_elapsed=0):
    """Inverse of :func:`encode`; raises :class:`LevelError` on invalid planes."""
    planes = np.asarray(planes)
    if planes.ndim != 3 or planes.shape[0] != 4:
        raise LevelError(f"expected 4 x H x W planes, got shape {planes.shape}")
    _, h, w = planes.shape
    flat = planes.reshape(4, -1)
    players = np.flatnonzero(flat[PLAYER])
    if len(players) != 1:
        raise LevelError(f"planes hold {len(players)} players")
    s = SokobanState(w, h,
                     frozenset(np.flatnonzero(flat[WALL]).tolist()),
                     frozenset(np.flatnonzero(flat[TARGET]).tolist()),
                     frozenset(np.flatnonzero(flat[BOX]).tolist()),
                     int(players[0]), steps_elapsed)
    s.check()
    return s


# ---------------------------------------------------------------------------
# environment wrapper used by agents

class SokobanEnv:
    """Episode runner over a level source (a callable returning a fresh state)."""

    def __init__(self, level_source, max_steps=MAX_STEPS):
        self.level_source = level_source
        self.max_steps = max_steps
        self.state = None

    def reset(self):
        self.state = self.level_source()
        return encode(self.state)

    def step(self, action):
        out = step(self.state, action, self.max_steps)
        self.state = out.state
        return encode(out.state), out.reward, out.done, out
