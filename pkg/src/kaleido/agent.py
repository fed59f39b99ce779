"""DDPG learner for goal-conditioned tasks with sparse {-1, 0} rewards."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import AdamState, MlpNet, adam_step, load_params, save_params, soft_update
from .replay import Batch


class Normalizer:
    """Running mean/std with clipping of the normalized value."""

    def __init__(self, size: int, eps: float = 1e-2, clip: float = 5.0):
        self.size = size
        self.eps = eps
        self.clip = clip
        self.total = np.zeros(size)
        self.total_sq = np.zeros(size)
        self.count = 0

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.size)
        self.total += x.sum(axis=0)
        self.total_sq += (x * x).sum(axis=0)
        self.count += len(x)

    @property
    def mean(self) -> np.ndarray:
        return self.total / max(self.count, 1)

    @property
    def std(self) -> np.ndarray:
        var = self.total_sq / max(self.count, 1) - self.mean ** 2
        return np.sqrt(np.maximum(self.eps ** 2, var))

    def __call__(self, x) -> np.ndarray:
        return np.clip((np.asarray(x, dtype=np.float64) - self.mean) / self.std, -self.clip, self.clip)

    def state_dict(self) -> dict:
        return {"size": self.size, "eps": self.eps, "clip": self.clip, "count": self.count,
                "total": self.total.tolist(), "total_sq": self.total_sq.tolist()}

    @classmethod
    def from_state(cls, d: dict) -> "Normalizer":
        norm = cls(d["size"], d["eps"], d["clip"])
        norm.count = d["count"]
        norm.total = np.array(d["total"], dtype=np.float64)
        norm.total_sq = np.array(d["total_sq"], dtype=np.float64)
        return norm


@dataclass
class AgentConfig:
    hidden: tuple[int, ...] = (64, 64)
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    tau: float = 0.05
    gamma: float = 0.98
    noise_eps: float = 0.1
    random_eps: float = 0.2
    action_l2: float = 0.0


class DdpgAgent:
    def __init__(self, obs_dim: int, goal_dim: int, action_dim: int, action_bound: float,
                 config: AgentConfig, rng: np.random.Generator):
        self.obs_dim, self.goal_dim, self.action_dim = obs_dim, goal_dim, action_dim
        self.action_bound = float(action_bound)
        self.config = config
        hidden = list(config.hidden)
        self.actor = MlpNet([obs_dim + goal_dim, *hidden, action_dim], rng, output_scale=self.action_bound)
        self.critic = MlpNet([obs_dim + goal_dim + action_dim, *hidden, 1], rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = AdamState.for_net(self.actor, lr=config.actor_lr)
        self.critic_opt = AdamState.for_net(self.critic, lr=config.critic_lr)
        self.obs_norm = Normalizer(obs_dim)
        self.goal_norm = Normalizer(goal_dim)

    @property
    def clip_bounds(self) -> tuple[float, float]:
        return -1.0 / (1.0 - self.config.gamma), 0.0

    def _inputs(self, obs, goal) -> np.ndarray:
        return np.concatenate([self.obs_norm(obs), self.goal_norm(goal)], axis=-1)

    def act(self, obs, goal, explore: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        """Policy action for one state or a batch of states.

        Exploration draws, per row: a uniform for the random-action coin, a
        uniform action in the box, and Gaussian noise; all are drawn every call
        so the RNG stream advances identically whichever branch wins.
        """
        action = self.actor.forward(self._inputs(obs, goal))
        if not explore:
            return action
        a_max = self.action_bound
        shape = action.shape
        rows = 1 if action.ndim == 1 else shape[0]
        coin = rng.random(rows)
        uniform = rng.uniform(-a_max, a_max, size=(rows, self.action_dim))
        noise = rng.standard_normal((rows, self.action_dim))
        noisy = np.clip(action.reshape(rows, -1) + self.config.noise_eps * a_max * noise, -a_max, a_max)
        chosen = np.where((coin < self.config.random_eps)[:, None], uniform, noisy)
        return chosen.reshape(shape)

    def update(self, batch: Batch) -> tuple[float, float]:
        """One critic and one actor Adam step, then a soft target update."""
        if batch is None or len(batch) == 0:
            return 0.0, 0.0
        cfg = self.config
        n = len(batch)
        a_max = self.action_bound
        x = self._inputs(batch.states, batch.desired_goals)
        x_next = self._inputs(batch.next_states, batch.desired_goals)

        next_actions = self.target_actor.forward(x_next)
        q_next = self.target_critic.forward(np.concatenate([x_next, next_actions / a_max], axis=1))[:, 0]
        lo, hi = self.clip_bounds
        target = batch.rewards + cfg.gamma * np.clip(q_next, lo, hi)
        if np.any(target < lo - 1.0) or np.any(target > hi):
            raise FloatingPointError("critic target escaped the feasible return range")

        q, cache = self.critic.forward_cached(np.concatenate([x, batch.actions / a_max], axis=1))
        err = q[:, 0] - target
        critic_loss = float(np.mean(err * err))
        grads, _ = self.critic.backward(cache, (2.0 / n) * err[:, None])
        adam_step(self.critic_opt, self.critic.params, grads)

        pi, actor_cache = self.actor.forward_cached(x)
        scaled = pi / a_max
        q_pi, critic_cache = self.critic.forward_cached(np.concatenate([x, scaled], axis=1))
        actor_loss = float(-np.mean(q_pi) + cfg.action_l2 * np.mean(np.sum(scaled * scaled, axis=1)))
        _, input_grad = self.critic.backward(critic_cache, np.full((n, 1), -1.0 / n))
        d_scaled = input_grad[:, x.shape[1]:] + cfg.action_l2 * 2.0 * scaled / n
        actor_grads, _ = self.actor.backward(actor_cache, d_scaled / a_max)
        adam_step(self.actor_opt, self.actor.params, actor_grads)

        soft_update(self.target_actor, self.actor, cfg.tau)
        soft_update(self.target_critic, self.critic, cfg.tau)
        if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
            raise FloatingPointError(f"non-finite loss: critic={critic_loss} actor={actor_loss}")
        return critic_loss, actor_loss

    def all_finite(self) -> bool:
        return all(net.all_finite() for net in (self.actor, self.critic, self.target_actor, self.target_critic))

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in ("actor", "critic", "target_actor", "target_critic"):
            save_params(getattr(self, name), directory / f"{name}.bin")
        sidecar = {"obs": self.obs_norm.state_dict(), "goal": self.goal_norm.state_dict()}
        (directory / "normalizer.json").write_text(json.dumps(sidecar))

    def load(self, directory) -> None:
        directory = Path(directory)
        for name in ("actor", "target_actor"):
            setattr(self, name, load_params(directory / f"{name}.bin", output_scale=self.action_bound))
        for name in ("critic", "target_critic"):
            setattr(self, name, load_params(directory / f"{name}.bin"))
        sidecar = json.loads((directory / "normalizer.json").read_text())
        self.obs_norm = Normalizer.from_state(sidecar["obs"])
        self.goal_norm = Normalizer.from_state(sidecar["goal"])
