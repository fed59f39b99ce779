"""Reflection-symmetry and goal-ball replay augmentation for goal-conditioned DDPG."""

__version__ = "0.1.0"
