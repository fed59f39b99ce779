"""Goal-conditioned point-mass reaching tasks with sparse rewards.

The workspace is a ball centred on the origin and the action set is a ball
too, so every reflection across a vertical plane through the origin maps
valid states, actions and whole trajectories onto valid ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GoalMdpSpec:
    state_dim: int
    action_dim: int
    goal_dim: int
    action_bound: float = 1.0
    success_threshold: float = 0.05
    horizon: int = 50
    gamma: float = 0.98

    def __post_init__(self):
        if self.success_threshold <= 0:
            raise ValueError("success_threshold must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.action_bound <= 0:
            raise ValueError("action_bound must be positive")


@dataclass
class EnvState:
    observation: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray
    steps_elapsed: int = 0


def compute_reward(achieved, desired, threshold: float):
    """0 where ``achieved`` lies within ``threshold`` of ``desired``, else -1.

    Works on single goals or on stacks of goals along the leading axes.
    """
    achieved = np.asarray(achieved, dtype=np.float64)
    desired = np.asarray(desired, dtype=np.float64)
    if achieved.shape[-1] != desired.shape[-1]:
        raise ValueError(f"goal dims differ: {achieved.shape} vs {desired.shape}")
    d = np.linalg.norm(achieved - desired, axis=-1)
    reward = np.where(d <= threshold, 0.0, -1.0)
    return float(reward) if reward.ndim == 0 else reward


def project_goal(observation) -> np.ndarray:
    # Point-mass observations are positions, so the goal projection is identity.
    return np.array(observation, dtype=np.float64, copy=True)


def project_to_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Nearest point of the closed ball of ``radius`` (rows treated independently)."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.where(norms > radius, radius / np.where(norms > 0, norms, 1.0), 1.0)
    return x * scale


def uniform_in_ball(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    direction = rng.standard_normal((count, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    length = radius * rng.random(count) ** (1.0 / dim)
    return direction * length[:, None]


@dataclass
class PointReach:
    """Point mass in a ball that moves by ``step_size * action`` each step.

    Actions are clipped radially to the ball of radius ``spec.action_bound``
    and the resulting position is projected back onto the workspace ball.
    """

    dim: int = 2
    step_size: float = 0.05
    workspace_radius: float = 1.0
    spec: GoalMdpSpec = field(default=None)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"PointReach supports dim 2 or 3, got {self.dim}")
        if self.spec is None:
            self.spec = GoalMdpSpec(self.dim, self.dim, self.dim)
        if not (self.spec.state_dim == self.spec.action_dim == self.spec.goal_dim == self.dim):
            raise ValueError("PointReach needs state, action and goal dims equal to dim")

    @property
    def name(self) -> str:
        return f"reach{self.dim}d"

    def clip_action(self, action) -> np.ndarray:
        action = np.asarray(action, dtype=np.float64)
        if action.shape[-1] != self.dim:
            raise ValueError(f"action has dimension {action.shape[-1]}, expected {self.dim}")
        return project_to_ball(action, self.spec.action_bound)

    def dynamics(self, position, action) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized transition; returns ``(next_position, executed_action)``."""
        position = np.asarray(position, dtype=np.float64)
        if position.shape[-1] != self.dim:
            raise ValueError(f"state has dimension {position.shape[-1]}, expected {self.dim}")
        executed = self.clip_action(action)
        nxt = project_to_ball(position + self.step_size * executed, self.workspace_radius)
        return nxt, executed

    def sample_positions(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return uniform_in_ball(rng, count, self.dim, self.workspace_radius)

    def reset(self, rng: np.random.Generator) -> EnvState:
        start, goal = self.sample_positions(rng, 2)
        return EnvState(start, project_goal(start), goal, 0)

    def step(self, state: EnvState, action) -> tuple[EnvState, float, bool]:
        nxt, _ = self.dynamics(state.observation, action)
        achieved = project_goal(nxt)
        reward = compute_reward(achieved, state.desired_goal, self.spec.success_threshold)
        steps = state.steps_elapsed + 1
        new_state = EnvState(nxt, achieved, state.desired_goal.copy(), steps)
        return new_state, reward, steps >= self.spec.horizon


ENVIRONMENTS = {"reach2d": 2, "reach3d": 3}


def make_env(name: str, step_size: float = 0.05, **spec_overrides) -> PointReach:
    """Build a named environment; ``spec_overrides`` replace GoalMdpSpec fields."""
    if name not in ENVIRONMENTS:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}")
    dim = ENVIRONMENTS[name]
    spec = GoalMdpSpec(dim, dim, dim, **spec_overrides)
    return PointReach(dim=dim, step_size=step_size, spec=spec)
