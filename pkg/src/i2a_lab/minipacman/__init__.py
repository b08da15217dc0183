"""MiniPacman environment."""

from .env import (ACTIONS, EVENT_NAMES, GHOST_DIRECTIONS, N_ACTIONS, PILL_DURATION, TASKS, EpisodeOver,
                  Ghost, Maze, MiniPacmanEnv, MiniPacmanState, TaskSpec, can_move, default_maze, encode,
                  ghost_count, move_ghost, new_level, render, step)

__all__ = ["ACTIONS", "EVENT_NAMES", "GHOST_DIRECTIONS", "N_ACTIONS", "PILL_DURATION", "TASKS",
           "EpisodeOver", "Ghost", "Maze", "MiniPacmanEnv", "MiniPacmanState", "TaskSpec", "can_move",
           "default_maze", "encode", "ghost_count", "move_ghost", "new_level", "render", "step"]
