"""Desk-scale imagination-augmented agents on Sokoban and MiniPacman."""

__version__ = "0.1.0"
