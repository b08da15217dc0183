from collections import deque

import pytest

from i2a_lab.rng import Rng
from i2a_lab.sokoban import procgen
from i2a_lab.sokoban._reverse_play import reverse_play as python_reverse_play
from i2a_lab.sokoban.core import render, replay
from i2a_lab.sokoban.procgen import (GenerationFailed, GenParams, forward_trace, generate_level, generate_topology,
                                     place_entities, reverse_play_search, room_score, verify_candidate, zobrist_table)


def floor_cells(walls, w, h):
    return {c for c in range(w * h) if c not in walls}


def connected(cells, w):
    if not cells:
        return True
    start = next(iter(cells))
    seen, todo = {start}, deque([start])
    while todo:
        c = todo.popleft()
        for d in (-w, w, -1, 1):
            n = c + d
            if n in cells and n not in seen:
                seen.add(n)
                todo.append(n)
    return seen == cells


def test_default_walk_steps():
    assert GenParams().walk_steps == 30
    assert GenParams(width=6, height=6).walk_steps == 18


@pytest.mark.parametrize("kwargs", [{"width": 4}, {"turn_prob": 1.5}, {"max_depth": 0}, {"num_boxes": 0}])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        GenParams(**kwargs)


def test_topologies_are_connected_and_keep_the_border():
    p = GenParams()
    for seed in range(1000):
        walls = generate_topology(p, Rng(seed))
        floor = floor_cells(walls, 10, 10)
        assert floor
        for cell in floor:
            r, c = divmod(cell, 10)
            assert 1 <= r <= 8 and 1 <= c <= 8
        assert connected(floor, 10)


def test_zero_walk_carves_nothing_and_placement_fails():
    p = GenParams(walk_steps=0)
    walls = generate_topology(p, Rng(0))
    assert len(walls) == 100
    assert place_entities(walls, 10, 10, 4, Rng(0)) is None


def _room_with_empty(n):
    cells = [11 + i for i in range(n)]  # row 1, cols 1..n
    return frozenset(range(100)) - set(cells), cells


def test_placement_counting():
    walls, cells = _room_with_empty(5)
    targets, player = place_entities(walls, 10, 10, 4, Rng(3))
    assert {*targets, player} == set(cells)
    walls4, _ = _room_with_empty(4)
    assert place_entities(walls4, 10, 10, 4, Rng(3)) is None


def test_placements_never_overlap():
    p = GenParams()
    rng = Rng(1)
    for _ in range(1000):
        walls = generate_topology(p, rng)
        placed = place_entities(walls, 10, 10, 4, rng)
        if placed is None:
            continue
        targets, player = placed
        assert len({*targets, player}) == 5
        assert not ({*targets, player} & walls)


def test_room_score_formula():
    assert room_score(1, [3]) == 3
    assert room_score(1, [2, 3]) == 5
    assert room_score(2, [2, 3]) == 10
    assert room_score(0, [4, 4]) == 0


def test_forward_trace_reverses_and_flips():
    # reverse path: pull up, then move left -> forward: move right, then push down
    from i2a_lab.sokoban.core import Action
    assert forward_trace([4 + 0, 2]) == [Action.RIGHT, Action.DOWN]


def test_reverse_play_in_a_corridor():
    # 1-box corridor, target at col 1, player to its right; pulling right moves the box
    p = GenParams(width=7, height=5, num_boxes=1)
    walls = frozenset(range(35)) - {8, 9, 10, 11, 12}
    cand = reverse_play_search(walls, [8], 9, p, Rng(0))
    assert cand is not None
    # best: box pulled to col 4 with player at col 5 -> 1 swap * 3 = 3
    assert cand.score == 3
    assert cand.state.boxes == frozenset({11})
    assert verify_candidate(cand)


def test_boxes_on_targets_without_moves_fail():
    # player boxed in next to the box: no reverse move can score
    p = GenParams(width=5, height=5, num_boxes=1)
    walls = frozenset(range(25)) - {6, 7}
    assert reverse_play_search(walls, [6], 7, p, Rng(0)) is None


def test_generate_level_is_deterministic_and_solvable():
    p = GenParams()
    for seed in range(30):
        a, b = generate_level(p, seed), generate_level(p, seed)
        assert render(a.state) == render(b.state)
        assert a.score == b.score > 0
        assert replay(a.state, a.solution_trace).solved
        a.state.check()


def test_generation_failure_is_explicit():
    with pytest.raises(GenerationFailed):
        generate_level(GenParams(walk_steps=0), 0)


def test_visited_cap_is_respected():
    p = GenParams(max_visited=50)
    for seed in range(20):
        try:
            cand = generate_level(p, seed)
        except GenerationFailed:
            continue
        assert cand.visited <= 50
        assert cand.stats["max_depth_seen"] <= p.max_depth


def test_depth_cap_is_respected():
    p = GenParams(max_depth=5)
    for seed in range(20):
        try:
            cand = generate_level(p, seed)
        except GenerationFailed:
            continue
        assert len(cand.solution_trace) <= 5


@pytest.mark.skipif(not procgen.HAVE_COMPILED, reason="compiled kernel not built")
def test_compiled_kernel_matches_python():
    p = GenParams()
    for seed in range(20):
        rng = Rng(seed)
        walls = generate_topology(p, rng)
        targets, player = place_entities(walls, 10, 10, 4, rng)
        wall_vec = [1 if c in walls else 0 for c in range(100)]
        args = (wall_vec, list(targets), player, 10, p.max_depth, p.max_visited, zobrist_table(100), rng.state)
        assert procgen._compiled_reverse_play(*args) == python_reverse_play(*args)


def test_python_fallback_generates_identical_levels():
    for seed in range(5):
        a = generate_level(GenParams(), seed)
        b = generate_level(GenParams(), seed, kernel=python_reverse_play)
        assert a.state == b.state and a.solution_trace == b.solution_trace
