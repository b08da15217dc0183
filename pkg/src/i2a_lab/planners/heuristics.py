"""Hand-written Sokoban value estimate used for MCTS leaf evaluation.

``heuristic_value(s) = 10 * solved + boxes_on_target - 0.1 * matching
- penalty * deadlocked`` where ``matching`` is the minimum total Manhattan
distance of a box-to-target assignment and a box is deadlocked when it sits
off-target in a corner (a wall on one vertical and one horizontal side).
``penalty = 0.1 * n_boxes * (width + height) + 1`` exceeds any possible
difference in the distance term, so a deadlocked state ranks below every
live state with the same number of boxes on target.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..sokoban.core import SOLVE_BONUS, STEP_PENALTY


def manhattan(s, a, b):
    ar, ac = divmod(a, s.width)
    br, bc = divmod(b, s.width)
    return abs(ar - br) + abs(ac - bc)


def matching_distance(s):
    """Minimum-cost assignment of boxes to targets under Manhattan distance."""
    boxes, targets = sorted(s.boxes), sorted(s.targets)
    if len(boxes) == 1:
        return min(manhattan(s, boxes[0], t) for t in targets)
    cost = np.array([[manhattan(s, b, t) for t in targets] for b in boxes])
    rows, cols = linear_sum_assignment(cost)
    return int(cost[rows, cols].sum())


def is_corner(s, cell):
    w = s.width
    vertical = (cell - w) in s.walls or (cell + w) in s.walls
    horizontal = (cell - 1) in s.walls or (cell + 1) in s.walls
    return vertical and horizontal


def corner_deadlocks(s):
    """Number of off-target boxes stuck in a corner (never movable again)."""
    return sum(1 for b in s.boxes if b not in s.targets and is_corner(s, b))


def deadlock_penalty(s):
    return -STEP_PENALTY * len(s.boxes) * (s.width + s.height) + 1.0


def heuristic_value(s):
    value = SOLVE_BONUS * s.solved + s.boxes_on_target + STEP_PENALTY * matching_distance(s)
    if corner_deadlocks(s):
        value -= deadlock_penalty(s)
    return float(value)
