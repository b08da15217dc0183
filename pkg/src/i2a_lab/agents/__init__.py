"""Agents: I2A and its baselines."""
