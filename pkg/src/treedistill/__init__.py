"""Distill reinforcement-learning teachers into decision-tree policies by
minimizing advantage-derived classification costs."""

__version__ = "0.1.0"
