"""Pure-Python reverse-play search.

Reference implementation of the hot loop in ``_kernels.pyx``; both must
return identical results for identical inputs (checked in the test suite).
Cells are linear indices; the room border is assumed to be wall so
neighbour lookups never leave the grid.
"""

import sys

from ..rng import MASK64, splitmix64

# reverse actions: 0-3 move, 4-7 move+pull, direction = action & 3
# direction order matches sokoban.Action: up, down, left, right


def _randbelow(state, n):
    threshold = (1 << 64) % n
    while True:
        state, x = splitmix64(state)
        if x >= threshold:
            return state, x % n


def reverse_play(walls, targets, player, width, max_depth, max_visited, zobrist, rng_state):
    """Depth-first reverse play from boxes-on-targets.

    Parameters
    ----------
    walls : sequence of 0/1 per cell
    targets : list of target cells; box ``i`` starts on ``targets[i]``
    zobrist : sequence of ``2 * n_cells`` uint64 keys (boxes, then player)

    Returns
    -------
    dict with ``score``, ``player``, ``boxes`` (by identity), ``path``
    (reverse actions), ``visited``, ``max_depth_seen`` and ``rng_state``.
    """
    n_cells = len(walls)
    deltas = (-width, width, -1, 1)
    walls = [bool(w) for w in walls]
    is_target = [False] * n_cells
    for t in targets:
        is_target[t] = True
    boxes = list(targets)
    origin = list(targets)
    box_at = [-1] * n_cells
    for i, b in enumerate(boxes):
        box_at[b] = i
    zbox = [int(z) for z in zobrist[:n_cells]]
    zply = [int(z) for z in zobrist[n_cells:2 * n_cells]]

    h0 = zply[player]
    for b in boxes:
        h0 ^= zbox[b]

    visited = set()
    path = []
    st = {
        "rng": int(rng_state) & MASK64,
        "player": player,
        "best_score": 0,
        "best_player": player,
        "best_boxes": list(boxes),
        "best_path": [],
        "stop": False,
        "max_depth_seen": 0,
    }

    def score(ply, swaps):
        if is_target[ply]:
            return 0
        disp = 0
        for i, b in enumerate(boxes):
            if is_target[b]:
                return 0
            o = origin[i]
            disp += abs(b // width - o // width) + abs(b % width - o % width)
        return swaps * disp

    def visit(depth, swaps, last_box, h):
        key = h if h else 1
        if key in visited:
            return
        if len(visited) >= max_visited:
            st["stop"] = True
            return
        visited.add(key)
        if depth > st["max_depth_seen"]:
            st["max_depth_seen"] = depth
        ply = st["player"]
        sc = score(ply, swaps)
        if sc > st["best_score"]:
            st["best_score"] = sc
            st["best_player"] = ply
            st["best_boxes"] = list(boxes)
            st["best_path"] = list(path)
        if depth >= max_depth:
            return
        order = [0, 1, 2, 3, 4, 5, 6, 7]
        rng = st["rng"]
        for i in range(7, 0, -1):
            rng, j = _randbelow(rng, i + 1)
            order[i], order[j] = order[j], order[i]
        st["rng"] = rng
        for a in order:
            if st["stop"]:
                return
            ply = st["player"]
            d = deltas[a & 3]
            nxt = ply + d
            if walls[nxt] or box_at[nxt] >= 0:
                continue
            if a < 4:
                st["player"] = nxt
                path.append(a)
                visit(depth + 1, swaps, last_box, h ^ zply[ply] ^ zply[nxt])
                path.pop()
                st["player"] = ply
            else:
                behind = ply - d
                bi = box_at[behind]
                if bi < 0:
                    continue
                box_at[behind] = -1
                box_at[ply] = bi
                boxes[bi] = ply
                st["player"] = nxt
                path.append(a)
                nh = h ^ zply[ply] ^ zply[nxt] ^ zbox[behind] ^ zbox[ply]
                visit(depth + 1, swaps + (bi != last_box), bi, nh)
                path.pop()
                st["player"] = ply
                boxes[bi] = behind
                box_at[ply] = -1
                box_at[behind] = bi

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * max_depth + 200))
    try:
        visit(0, 0, -1, h0)
    finally:
        sys.setrecursionlimit(limit)
    return {
        "score": st["best_score"],
        "player": st["best_player"],
        "boxes": st["best_boxes"],
        "path": st["best_path"],
        "visited": len(visited),
        "max_depth_seen": st["max_depth_seen"],
        "rng_state": st["rng"],
    }
