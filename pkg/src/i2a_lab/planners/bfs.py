"""Breadth-first Sokoban solver used as an oracle for small levels."""

from collections import deque

from ..sokoban.core import MOVES, transition


def bfs_solve(s, max_states=2_000_000, max_length=None):
    """Shortest move sequence solving ``s`` (``[]`` if already solved).

    Returns ``None`` if no solution exists within ``max_length`` moves or
    the search would exceed ``max_states``.  NOOP is never useful and is
    not expanded.
    """
    if s.solved:
        return []
    start = (s.boxes, s.player)
    parent = {start: None}
    frontier = deque([(s, 0)])
    while frontier:
        cur, depth = frontier.popleft()
        if max_length is not None and depth >= max_length:
            continue
        for a in MOVES:
            boxes, player, _, _, _, solved = transition(cur, a)
            key = (boxes, player)
            if key in parent:
                continue
            parent[key] = ((cur.boxes, cur.player), a)
            if solved:
                plan = []
                while parent[key] is not None:
                    key, act = parent[key]
                    plan.append(act)
                return plan[::-1]
            if len(parent) >= max_states:
                return None
            frontier.append((cur.__class__(cur.width, cur.height, cur.walls, cur.targets, boxes, player), depth + 1))
    return None
