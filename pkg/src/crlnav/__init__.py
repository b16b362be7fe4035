"""Curriculum reinforcement learning for fuel-aware, collision-aware vessel routing."""

__version__ = "0.1.0"
