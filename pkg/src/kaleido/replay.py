"""Trajectory replay with reflection augmentation and goal-ball relabeling.

Trajectories are written to the buffer together with ``n`` mirrored copies
(store mode), or stored as-is and mirrored per sampled transition
(minibatch mode).  Sampled minibatches are relabeled ``k`` times; copy ``i``
swaps goals for points drawn in a ball of radius ``epsilons[i]`` around an
achieved goal from later in the same trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .env import compute_reward, project_goal
from .geometry import Reflection, random_reflection, reflect_point, reflect_rows, reflection_normals, sample_in_balls


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray
    step_index: int
    reward: float = -1.0
    trajectory_slot: int = -1


@dataclass
class Trajectory:
    """One fixed-length episode.

    ``observations`` and ``achieved_goals`` hold ``horizon + 1`` rows (the
    initial state included); ``actions`` holds the ``horizon`` executed
    actions.  Transition ``i`` goes from row ``i`` to row ``i + 1``.
    """

    observations: np.ndarray
    actions: np.ndarray
    achieved_goals: np.ndarray
    desired_goal: np.ndarray

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.achieved_goals = np.asarray(self.achieved_goals, dtype=np.float64)
        self.desired_goal = np.asarray(self.desired_goal, dtype=np.float64)
        horizon = len(self.actions)
        if horizon < 1:
            raise ValueError("trajectory must contain at least one transition")
        if len(self.observations) != horizon + 1 or len(self.achieved_goals) != horizon + 1:
            raise ValueError("observations and achieved_goals need horizon + 1 rows")

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def is_consistent(self, atol: float = 0.0) -> bool:
        return bool(np.allclose(self.achieved_goals, project_goal(self.observations), rtol=0.0, atol=atol))

    def transitions(self, threshold: float | None = None) -> list[Transition]:
        out = []
        for i in range(self.horizon):
            reward = -1.0
            if threshold is not None:
                reward = compute_reward(self.achieved_goals[i + 1], self.desired_goal, threshold)
            out.append(Transition(
                self.observations[i], self.actions[i], self.observations[i + 1],
                self.achieved_goals[i + 1], self.desired_goal, i, reward,
            ))
        return out


def reflect_trajectory(traj: Trajectory, r: Reflection) -> Trajectory:
    return Trajectory(
        reflect_point(r, traj.observations),
        reflect_point(r, traj.actions),
        reflect_point(r, traj.achieved_goals),
        reflect_point(r, traj.desired_goal),
    )


@dataclass
class Batch:
    """Struct-of-arrays minibatch of transitions with their buffer provenance."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    achieved_goals: np.ndarray
    desired_goals: np.ndarray
    rewards: np.ndarray
    slots: np.ndarray
    steps: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)

    def copy(self) -> "Batch":
        return Batch(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def transition(self, i: int) -> Transition:
        return Transition(
            self.states[i], self.actions[i], self.next_states[i], self.achieved_goals[i],
            self.desired_goals[i], int(self.steps[i]), float(self.rewards[i]), int(self.slots[i]),
        )

    def transitions(self) -> list[Transition]:
        return [self.transition(i) for i in range(len(self))]

    @classmethod
    def concat(cls, batches: list["Batch"]) -> "Batch":
        return cls(**{f.name: np.concatenate([getattr(b, f.name) for b in batches]) for f in fields(cls)})

    def equals(self, other: "Batch") -> bool:
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))


class ReplayBuffer:
    """Ring buffer of fixed-length trajectories; capacity counts trajectories."""

    def __init__(self, capacity: int, horizon: int, state_dim: int, action_dim: int, goal_dim: int,
                 success_threshold: float):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.horizon = horizon
        self.success_threshold = success_threshold
        self.observations = np.zeros((capacity, horizon + 1, state_dim))
        self.actions = np.zeros((capacity, horizon, action_dim))
        self.achieved_goals = np.zeros((capacity, horizon + 1, goal_dim))
        self.desired_goals = np.zeros((capacity, goal_dim))
        # Insertion number of the trajectory held in each slot.
        self.insertion_ids = np.full(capacity, -1, dtype=np.int64)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    @property
    def size(self) -> int:
        return len(self)

    def store(self, traj: Trajectory) -> int:
        if traj.horizon != self.horizon:
            raise ValueError(f"trajectory horizon {traj.horizon} != buffer horizon {self.horizon}")
        slot = self.inserted % self.capacity
        self.observations[slot] = traj.observations
        self.actions[slot] = traj.actions
        self.achieved_goals[slot] = traj.achieved_goals
        self.desired_goals[slot] = traj.desired_goal
        self.insertion_ids[slot] = self.inserted
        self.inserted += 1
        return slot

    def trajectory(self, slot: int) -> Trajectory:
        if not 0 <= slot < len(self):
            raise IndexError(slot)
        return Trajectory(self.observations[slot].copy(), self.actions[slot].copy(),
                          self.achieved_goals[slot].copy(), self.desired_goals[slot].copy())

    def stored_ids(self) -> set[int]:
        return set(int(i) for i in self.insertion_ids[: len(self)])


def store_with_ker(buffer: ReplayBuffer, traj: Trajectory, n: int, rng: np.random.Generator,
                   planes: list[Reflection] | None = None) -> list[Reflection]:
    """Store ``traj`` followed by ``n`` mirrored copies.

    Each copy gets a freshly drawn plane unless a fixed ``planes`` list is
    given, in which case the first ``n`` of those are used.  Returns the
    reflections applied, in insertion order.
    """
    if n < 0:
        raise ValueError(f"number of symmetries must be nonnegative, got {n}")
    dim = traj.observations.shape[-1]
    if planes is not None:
        if len(planes) < n:
            raise ValueError(f"need {n} fixed planes, have {len(planes)}")
        used = list(planes[:n])
    else:
        used = [random_reflection(dim, rng) for _ in range(n)]
    buffer.store(traj)
    for r in used:
        buffer.store(reflect_trajectory(traj, r))
    return used


def sample_minibatch(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> Batch | None:
    """Uniform draw over (trajectory, step) pairs; ``None`` when the buffer is empty."""
    if len(buffer) == 0:
        return None
    slots = rng.integers(0, len(buffer), size=batch_size)
    steps = rng.integers(0, buffer.horizon, size=batch_size)
    achieved = buffer.achieved_goals[slots, steps + 1]
    desired = buffer.desired_goals[slots]
    return Batch(
        states=buffer.observations[slots, steps],
        actions=buffer.actions[slots, steps],
        next_states=buffer.observations[slots, steps + 1],
        achieved_goals=achieved,
        desired_goals=desired.copy(),
        rewards=compute_reward(achieved, desired, buffer.success_threshold),
        slots=slots,
        steps=steps,
    )


@dataclass(frozen=True)
class RelabelSpec:
    """Goal-ball relabeling settings: one application per entry of ``epsilons``."""

    epsilons: tuple[float, ...] = (0.0,)
    success_threshold: float = 0.05
    relabel_prob: float = 0.8
    strategy: str = "future"

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        if not self.epsilons:
            raise ValueError("at least one relabeling threshold is required")
        for eps in self.epsilons:
            if not 0.0 <= eps < self.success_threshold:
                raise ValueError(f"threshold {eps} outside [0, {self.success_threshold})")
        if not 0.0 <= self.relabel_prob <= 1.0:
            raise ValueError("relabel_prob must lie in [0, 1]")
        if self.strategy != "future":
            raise ValueError(f"unsupported relabeling strategy {self.strategy!r}")

    @property
    def k(self) -> int:
        return len(self.epsilons)

    @classmethod
    def ladder(cls, k: int, success_threshold: float, relabel_prob: float = 0.8) -> "RelabelSpec":
        """``k`` evenly spaced thresholds ``i * success_threshold / k``, starting at 0."""
        if k < 1:
            raise ValueError("k must be at least 1")
        return cls(tuple(i * success_threshold / k for i in range(k)), success_threshold, relabel_prob)


def relabel_once(batch: Batch, epsilon: float, relabel_prob: float, buffer: ReplayBuffer,
                 rng: np.random.Generator) -> Batch:
    """One relabeled copy of ``batch``.

    Draw order per copy: one uniform per transition for the relabel decision,
    one uniform per transition for the future offset, then ball samples for
    the relabeled rows (skipped entirely when ``epsilon`` is zero).
    """
    out = batch.copy()
    n = len(batch)
    relabel = rng.random(n) < relabel_prob
    remaining = buffer.horizon - batch.steps
    future = batch.steps + np.floor(rng.random(n) * remaining).astype(np.int64)
    future = np.minimum(future, buffer.horizon - 1)
    centers = buffer.achieved_goals[batch.slots[relabel], future[relabel] + 1]
    if epsilon > 0 and len(centers):
        centers = sample_in_balls(rng, centers, epsilon)
    out.desired_goals[relabel] = centers
    out.rewards = compute_reward(out.achieved_goals, out.desired_goals, buffer.success_threshold)
    return out


def ger_relabel(batch: Batch, spec: RelabelSpec, buffer: ReplayBuffer, rng: np.random.Generator,
                combine: bool = True) -> Batch | list[Batch]:
    """``spec.k`` relabeled copies of ``batch``, concatenated unless ``combine`` is false."""
    copies = [relabel_once(batch, eps, spec.relabel_prob, buffer, rng) for eps in spec.epsilons]
    return Batch.concat(copies) if combine else copies


def minibatch_ker(batch: Batch, rng: np.random.Generator) -> Batch:
    """Mirror every transition across its own freshly drawn vertical plane."""
    dim = batch.states.shape[-1]
    thetas = rng.uniform(0.0, math.pi, size=len(batch))
    normals = reflection_normals(thetas, dim)
    out = batch.copy()
    for name in ("states", "actions", "next_states", "achieved_goals", "desired_goals"):
        setattr(out, name, reflect_rows(normals, getattr(batch, name)))
    return out
