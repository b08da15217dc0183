"""Experiment harness and command-line interface."""

from .experiments import *  # noqa: F401,F403
