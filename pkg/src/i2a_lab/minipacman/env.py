"""MiniPacman: a 15-wide, 19-high maze with food, two power pills and ghosts.

Positions are ``(row, col)``.  Five reward tasks share the dynamics and
differ only in the event reward vector and in when a level counts as cleared.
"""

import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from ..rng import Rng, derive_seed

PILL_DURATION = 19

# Direction vectors in (row, col); ghosts scan them in this order.
DOWN, LEFT, RIGHT, UP = (1, 0), (0, -1), (0, 1), (-1, 0)
GHOST_DIRECTIONS = (DOWN, LEFT, RIGHT, UP)
# player actions
ACTIONS = (UP, DOWN, LEFT, RIGHT, (0, 0))
N_ACTIONS = len(ACTIONS)

EVENT_NAMES = ("moving", "food", "pill", "ghost", "eaten")
MOVING, FOOD, PILL, GHOST, EATEN = range(5)


def opposite(direction):
    return (-direction[0], -direction[1])


class EpisodeOver(RuntimeError):
    pass


@dataclass(frozen=True)
class Maze:
    height: int
    width: int
    walls: frozenset

    @classmethod
    def from_text(cls, text):
        rows = [r for r in text.splitlines() if r.strip()]
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ValueError("maze rows must have equal length")
        walls = frozenset((r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == "#")
        return cls(len(rows), width, walls)

    def is_wall(self, cell):
        r, c = cell
        return not (0 <= r < self.height and 0 <= c < self.width) or cell in self.walls

    @property
    def corridors(self):
        return [(r, c) for r in range(self.height) for c in range(self.width) if (r, c) not in self.walls]


def default_maze():
    text = resources.files("i2a_lab.minipacman").joinpath("maze.txt").read_text()
    return Maze.from_text(text)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    w_rew: tuple
    clear_rule: str

    def reward(self, events):
        return float(np.dot(self.w_rew, events))


TASKS = {
    "regular": TaskSpec("regular", (0.0, 1.0, 2.0, 5.0, 0.0), "all-food"),
    "avoid": TaskSpec("avoid", (0.1, -0.1, -5.0, -10.0, -20.0), "fixed-128-steps"),
    "hunt": TaskSpec("hunt", (0.0, 0.0, 1.0, 10.0, -20.0), "ghosts-or-80"),
    "ambush": TaskSpec("ambush", (0.0, -0.1, 0.0, 10.0, -20.0), "ghosts-or-80"),
    "rush": TaskSpec("rush", (0.0, -0.1, 10.0, 0.0, 0.0), "all-pills"),
}


@dataclass(frozen=True)
class Ghost:
    cell: tuple
    direction: tuple


@dataclass(frozen=True)
class MiniPacmanState:
    maze: Maze = field(repr=False)
    food: frozenset
    pills: frozenset
    ghosts: tuple
    player: tuple
    pill_timer: int = 0
    level: int = 1
    steps_in_level: int = 0
    seed: int = 0
    done: bool = False


def ghost_count(level):
    return 1 + (level - 1) // 2


def can_move(maze, cell, direction):
    return not maze.is_wall((cell[0] + direction[0], cell[1] + direction[1]))


def move_ghost(state, ghost):
    """Direction the ghost takes this step (``None`` if it is walled in)."""
    maze = state.maze
    current = ghost.direction
    allowed = [d for d in GHOST_DIRECTIONS if can_move(maze, ghost.cell, d)]
    if not allowed:
        return None
    if len(allowed) == 2:
        # straight corridor or bend
        if current in allowed:
            return current
        if opposite(current) == allowed[0]:
            return allowed[1]
        return allowed[0]
    if len(allowed) == 1:
        # dead end: the only way out is back
        return allowed[0]
    if opposite(current) in allowed:
        allowed.remove(opposite(current))
    dr, dc = state.player[0] - ghost.cell[0], state.player[1] - ghost.cell[1]
    norm = math.hypot(dr, dc)
    x = (dr / norm, dc / norm) if norm > 0 else (0.0, 0.0)
    dots = [x[0] * d[0] + x[1] * d[1] for d in allowed]
    if state.pill_timer > 0:
        return allowed[int(np.argmin(dots))]
    return allowed[int(np.argmax(dots))]


def new_level(level_index, seed, maze=None):
    """Fresh level: food everywhere, 2 pills, ghosts and player at random cells."""
    if level_index < 1:
        raise ValueError("levels are numbered from 1")
    maze = maze or default_maze()
    rng = Rng(derive_seed("minipacman-level", seed, level_index))
    n_ghosts = ghost_count(level_index)
    cells = rng.sample(maze.corridors, 3 + n_ghosts)
    player, pills, ghost_cells = cells[0], frozenset(cells[1:3]), cells[3:]
    ghosts = []
    for cell in ghost_cells:
        options = [d for d in GHOST_DIRECTIONS if can_move(maze, cell, d)]
        ghosts.append(Ghost(cell, rng.choice(options)))
    food = frozenset(maze.corridors) - pills
    return MiniPacmanState(maze, food, pills, tuple(ghosts), player, 0, level_index, 0, seed)


def _player_path(state, action, powered):
    d = ACTIONS[action]
    path = [state.player]
    if d == (0, 0):
        return path
    for _ in range(2 if powered else 1):
        nxt = (path[-1][0] + d[0], path[-1][1] + d[1])
        if state.maze.is_wall(nxt):
            # a double move ending in a wall is moved back onto the corridor
            break
        path.append(nxt)
    return path


def _meets(path, old, new):
    if new in path[1:] or new == path[-1]:
        return True
    return any(old == path[k + 1] and new == path[k] for k in range(len(path) - 1))


def level_cleared(state, task):
    rule = task.clear_rule
    if rule == "all-food":
        return not state.food
    if rule == "fixed-128-steps":
        return state.steps_in_level >= 128
    if rule == "ghosts-or-80":
        return not state.ghosts or state.steps_in_level >= 80
    if rule == "all-pills":
        return not state.pills
    raise ValueError(f"unknown clear rule {rule!r}")


def step(state, action, task):
    """Advance one step. Returns ``(next_state, reward, events, done)``.

    A cleared level is replaced by the next level; the episode only ends when
    Pacman is eaten.
    """
    if state.done:
        raise EpisodeOver("cannot step after Pacman was eaten")
    if isinstance(task, str):
        task = TASKS[task]
    events = np.zeros(5, dtype=np.int64)
    events[MOVING] = 1
    powered = state.pill_timer > 0

    new_dirs = [move_ghost(state, g) for g in state.ghosts]
    path = _player_path(state, action, powered)
    food, pills = set(state.food), set(state.pills)
    ate_pill = False
    for cell in path[1:]:
        if cell in food:
            food.discard(cell)
            events[FOOD] += 1
        if cell in pills:
            pills.discard(cell)
            events[PILL] += 1
            ate_pill = True
    edible = powered or ate_pill

    ghosts, eaten = [], False
    for g, d in zip(state.ghosts, new_dirs):
        new_cell = g.cell if d is None else (g.cell[0] + d[0], g.cell[1] + d[1])
        moved = Ghost(new_cell, g.direction if d is None else d)
        if not eaten and _meets(path, g.cell, new_cell):
            if edible:
                events[GHOST] += 1
                continue
            eaten = True
        ghosts.append(moved)
    if eaten:
        events[EATEN] = 1

    timer = PILL_DURATION if ate_pill else max(0, state.pill_timer - 1)
    nxt = replace(state, food=frozenset(food), pills=frozenset(pills), ghosts=tuple(ghosts),
                  player=path[-1], pill_timer=timer, steps_in_level=state.steps_in_level + 1,
                  done=eaten)
    reward = task.reward(events)
    if not eaten and level_cleared(nxt, task):
        fresh = new_level(state.level + 1, state.seed, state.maze)
        nxt = replace(fresh, seed=state.seed)
    return nxt, reward, events, eaten


PLANE_NAMES = ("wall", "food", "pill", "ghost", "edible_ghost", "player")


def encode(state):
    """6 x H x W uint8 planes."""
    m = state.maze
    planes = np.zeros((6, m.height, m.width), dtype=np.uint8)
    for r, c in m.walls:
        planes[0, r, c] = 1
    for r, c in state.food:
        planes[1, r, c] = 1
    for r, c in state.pills:
        planes[2, r, c] = 1
    for g in state.ghosts:
        planes[4 if state.pill_timer > 0 else 3][g.cell] = 1
    planes[5][state.player] = 1
    return planes


def render(state):
    m = state.maze
    grid = [["#" if (r, c) in m.walls else " " for c in range(m.width)] for r in range(m.height)]
    for r, c in state.food:
        grid[r][c] = "."
    for r, c in state.pills:
        grid[r][c] = "o"
    for g in state.ghosts:
        grid[g.cell[0]][g.cell[1]] = "g" if state.pill_timer > 0 else "G"
    grid[state.player[0]][state.player[1]] = "P"
    return "\n".join("".join(row) for row in grid)


class MiniPacmanEnv:
    def __init__(self, task="regular", seed=0):
        self.task = TASKS[task] if isinstance(task, str) else task
        self.seed = seed
        self.state = None

    def reset(self):
        self.state = new_level(1, self.seed)
        return encode(self.state)

    def step(self, action):
        self.state, reward, events, done = step(self.state, action, self.task)
        return encode(self.state), reward, done, events
