import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from i2a_lab.models import CopyModel, PerfectModel
from i2a_lab.planners.bfs import bfs_solve
from i2a_lab.planners.heuristics import (corner_deadlocks, deadlock_penalty, heuristic_value, is_corner,
                                         matching_distance)
from i2a_lab.planners.mc_search import DELTA_FLOOR, McSearchAgent, McSearchConfig, discounted_rewards, \
    mc_search_probs
from i2a_lab.planners.mcts import Mcts, PlaneModel, SimulatorModel, mcts_play, mcts_search, q_values
from i2a_lab.planners.retries import (MAX_RETRIES, LookaheadAgent, nested_retry_solve, success_curve)
from i2a_lab.rng import Rng
from i2a_lab.sokoban.core import Action, encode, parse_level, replay
from i2a_lab.sokoban.procgen import GenParams, generate_level


@lru_cache(maxsize=None)
def small_level(seed):
    return generate_level(GenParams(width=7, height=7, num_boxes=1), seed).state


# heuristics ---------------------------------------------------------------

def test_matching_distance_prefers_cheapest_assignment():
    s = parse_level("#######\n#.$  .#\n#   $ #\n#@    #\n#######")
    # box (1,2)->(1,1) costs 1, box (2,4)->(1,5) costs 2
    assert matching_distance(s) == 3


def test_solved_state_scores_highest(two_box):
    solved = replay(two_box, bfs_solve(two_box))
    assert solved.solved
    assert heuristic_value(solved) > heuristic_value(two_box)
    assert heuristic_value(solved) == pytest.approx(10.0 + 2)


def test_corner_deadlock_ranks_below_live_state():
    live = parse_level("######\n#    #\n# $ .#\n#  @ #\n######")
    dead = parse_level("######\n#$   #\n#   .#\n#  @ #\n######")
    assert is_corner(dead, next(iter(dead.boxes)))
    assert corner_deadlocks(dead) == 1 and corner_deadlocks(live) == 0
    assert heuristic_value(dead) < heuristic_value(live)
    assert deadlock_penalty(dead) == pytest.approx(0.1 * 1 * (6 + 5) + 1)


def test_box_on_target_in_corner_is_not_deadlocked():
    s = parse_level("#####\n#*  #\n# @ #\n#####")
    assert corner_deadlocks(s) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_pushing_closer_never_lowers_value(seed):
    s = small_level(seed % 40)
    plan = bfs_solve(s)
    states = [s]
    for a in plan:
        states.append(replay(states[-1], [a]))
    # the final state of an optimal plan beats the start
    assert heuristic_value(states[-1]) > heuristic_value(states[0])


# BFS ----------------------------------------------------------------------

def test_bfs_corridor(corridor):
    assert bfs_solve(corridor) == [Action.RIGHT, Action.RIGHT, Action.RIGHT]


def test_bfs_unsolvable_and_limits():
    stuck = parse_level("######\n#$ . #\n#  @ #\n######")
    assert bfs_solve(stuck) is None
    s = parse_level("#######\n#@ $ .#\n#######")
    assert bfs_solve(s, max_length=2) is None
    assert bfs_solve(replay(s, [3, 3, 3])) == []


def test_bfs_plans_replay_to_solution():
    for seed in range(20):
        s = small_level(seed)
        plan = bfs_solve(s)
        assert plan is not None and replay(s, plan).solved


# MCTS ---------------------------------------------------------------------

def test_terminal_root_returns_no_action(corridor):
    done = replay(corridor, [3, 3, 3])
    a, stats = mcts_search(done, budget=10)
    assert a is None and stats.expansions == 0


def test_single_legal_action_skips_search(corridor):
    class OneAction(SimulatorModel):
        def legal_actions(self, s):
            return [Action.DOWN]

    model = OneAction()
    a, stats = Mcts(model).search(corridor, budget=100)
    assert a == Action.DOWN and model.calls == 0 and stats.model_calls == 0


def test_unvisited_actions_are_tried_first(corridor):
    a, stats = mcts_search(corridor, budget=5, use_proofs=False)
    assert stats.visits == [1, 1, 1, 1, 1]


def test_mcts_solves_corridor_optimally(corridor):
    res = mcts_play(corridor, budget=200)
    assert res.solved and res.actions == [3, 3, 3]


def test_mcts_matches_bfs_length_on_small_levels():
    for seed in range(10):
        s = small_level(seed)
        res = mcts_play(s, budget=2000)
        assert res.solved
        assert res.steps == len(bfs_solve(s))


def test_budget_counts_expansions_and_calls(two_box):
    s = two_box
    model = SimulatorModel()
    a, stats = Mcts(model, use_proofs=False).search(s, budget=50)
    assert stats.expansions == 50
    assert stats.model_calls == model.calls == 50
    assert len(q_values(stats)) == 5


def test_transposition_table_bounded_by_distinct_states():
    s = small_level(5)
    search = Mcts(SimulatorModel(), use_proofs=False)
    search.search(s, budget=500)
    distinct = {(k[0], k[1], k[2]) for k in search.table}
    assert len(search.table) == len(distinct)
    assert all(node.state.steps_elapsed == k[0] for k, node in search.table.items())


def test_tree_reuse_keeps_subtree():
    s = small_level(1)
    search = Mcts(SimulatorModel(), use_proofs=False)
    a, _ = search.search(s, budget=300)
    nxt, _, _ = SimulatorModel().step(s, a)
    search.prune(nxt.steps_elapsed)
    assert Mcts.key(nxt) in search.table
    assert min(k[0] for k in search.table) >= 1


def test_plane_model_counts_calls_of_wrapped_model(corridor):
    inner = PerfectModel()
    res = mcts_play(corridor, budget=100, model=PlaneModel(inner))
    assert res.solved and res.model_calls == inner.calls > 0


def test_copy_model_search_cannot_solve(corridor):
    res = mcts_play(corridor, budget=50, model=PlaneModel(CopyModel()), max_steps=10)
    assert not res.solved and res.steps == 10


def test_invalid_budget(corridor):
    with pytest.raises(ValueError):
        mcts_search(corridor, budget=0)


# MC search ----------------------------------------------------------------

def test_mc_probs_uniform_for_equal_returns():
    np.testing.assert_allclose(mc_search_probs([2.0, 2.0, 2.0, 2.0], 1.0), 0.25)


def test_mc_probs_two_action_closed_form():
    p = mc_search_probs([1.0, 0.0], 1.0)
    e = math.e
    np.testing.assert_allclose(p, [e / (e + 1), 1 / (e + 1)], rtol=1e-12)
    np.testing.assert_allclose(mc_search_probs([1.0, 0.0], 1.0, literal_sign=True), p[::-1], rtol=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.floats(-100, 100), st.floats(0.05, 10))
def test_mc_probs_shift_invariant(returns, shift, delta):
    a = mc_search_probs(returns, delta)
    b = mc_search_probs(np.asarray(returns) + shift, delta)
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert a.sum() == pytest.approx(1.0)


def test_mc_probs_small_temperature_is_argmax():
    p = mc_search_probs([0.3, 1.0, 0.99], 1e-4)
    assert p[1] > 1 - 1e-12


def test_mc_probs_reject_bad_input():
    with pytest.raises(FloatingPointError):
        mc_search_probs([np.nan, 1.0], 1.0)
    with pytest.raises(ValueError):
        mc_search_probs([0.0, 1.0], 0.0)


def test_discounted_rewards():
    r = np.array([[1.0], [1.0], [1.0]])
    assert discounted_rewards(r, 0.5)[0] == pytest.approx(1.75)


def test_mc_search_agent_delta_and_returns():
    cfg = McSearchConfig(obs_shape=(4, 5, 5), depth=2, delta_init=0.7)
    agent = McSearchAgent(cfg, PerfectModel(), Rng(0))
    assert agent.delta() == pytest.approx(0.7 + DELTA_FLOOR)
    s = parse_level("#####\n#@$.#\n#   #\n#   #\n#####")
    out = agent.forward(encode(s)[None], Rng(1))
    assert agent.model_calls == 5 * 2
    r = out.diagnostics["returns"][0]
    np.testing.assert_allclose(out.logits[0], r / out.diagnostics["delta"], rtol=1e-12)
    # pushing right solves immediately; that rollout's return dominates the reward part
    assert r[Action.RIGHT] == pytest.approx(r.max())


# retries ------------------------------------------------------------------

def test_success_curve_is_cumulative():
    curve = success_curve([1, None, 3, 2, None], max_retries=4)
    np.testing.assert_allclose(curve, [0.2, 0.4, 0.6, 0.6])


def test_retry_solves_with_perfect_model(corridor):
    model = PerfectModel()
    agent = LookaheadAgent(model, temperature=0.1)
    res = nested_retry_solve(agent, model, encode(corridor), Rng(0), max_retries=3, max_steps=10)
    assert res.success and replay(corridor, res.plan).solved
    # shared model counted once: n lookahead calls plus one step per imagined move
    assert res.model_calls == model.calls == sum(n for _, n in res.attempts) * 6


def test_retry_fails_with_copy_model(corridor):
    model = CopyModel()
    res = nested_retry_solve(LookaheadAgent(model), model, encode(corridor), Rng(0), max_retries=4, max_steps=5)
    assert not res.success and res.retries_used == 4 and res.plan == []
    assert [a[0] for a in res.attempts] == [False] * 4


def test_retry_bounds(corridor):
    model = PerfectModel()
    with pytest.raises(ValueError):
        nested_retry_solve(LookaheadAgent(model), model, encode(corridor), Rng(0), max_retries=MAX_RETRIES + 1)
    with pytest.raises(ValueError):
        nested_retry_solve(LookaheadAgent(model), model, encode(corridor), Rng(0), max_retries=0)
