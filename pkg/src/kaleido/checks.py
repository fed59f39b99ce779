"""Randomized invariant suites shared by the ``check`` command and the tests.

Each suite returns a :class:`CheckResult`; oracles here are written
independently of the code paths they check (explicit matrices, per-element
loops, finite differences).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .env import compute_reward, make_env, project_goal
from .geometry import Reflection, reflect_point, sample_in_balls
from .nn import AdamState, MlpNet, adam_step
from .replay import RelabelSpec, ReplayBuffer, Trajectory, ger_relabel, sample_minibatch


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _householder_matrix(theta: float, dim: int) -> np.ndarray:
    n = np.array([-math.sin(theta), math.cos(theta), 0.0][:dim])
    return np.eye(dim) - 2.0 * np.outer(n, n)


def geometry_suite(cases: int = 10_000, seed: int = 0) -> CheckResult:
    """Involution, isometry, plane fixity and matrix agreement to 1e-12."""
    rng = np.random.default_rng(seed)
    started = time.perf_counter()
    worst = {"involution": 0.0, "isometry": 0.0, "plane": 0.0, "matrix": 0.0}
    for _ in range(cases):
        theta = float(rng.uniform(0, math.pi))
        r = Reflection(theta, 3)
        p, q = rng.uniform(-10, 10, 3), rng.uniform(-10, 10, 3)
        rp = reflect_point(r, p)
        worst["involution"] = max(worst["involution"], np.max(np.abs(reflect_point(r, rp) - p)))
        worst["isometry"] = max(worst["isometry"],
                                abs(np.linalg.norm(rp - reflect_point(r, q)) - np.linalg.norm(p - q)))
        on_plane = rng.uniform(-10, 10) * np.array([math.cos(theta), math.sin(theta), 0.0]) \
            + rng.uniform(-10, 10) * np.array([0.0, 0.0, 1.0])
        worst["plane"] = max(worst["plane"], np.max(np.abs(reflect_point(r, on_plane) - on_plane)))
        worst["matrix"] = max(worst["matrix"], np.max(np.abs(rp - _householder_matrix(theta, 3) @ p)))
    elapsed = time.perf_counter() - started
    ok = all(v <= 1e-12 for v in worst.values()) and elapsed < 5.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {cases} cases in {elapsed:.2f}s"
    return CheckResult("geometry", ok, detail)


def equivariance_suite(cases: int = 1000, seed: int = 0) -> CheckResult:
    """step(reflect(s), reflect(a)) == reflect(step(s, a)) on both point-reach tasks."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    boundary = 0
    for name in ("reach2d", "reach3d"):
        env = make_env(name)
        for i in range(cases):
            s = env.sample_positions(rng, 1)[0]
            if i % 3 == 0:
                s = s / np.linalg.norm(s) * env.workspace_radius
                boundary += 1
            a = rng.uniform(-1.5, 1.5, env.dim) * env.spec.action_bound
            r = Reflection(float(rng.uniform(0, math.pi)), env.dim)
            lhs, _ = env.dynamics(reflect_point(r, s), reflect_point(r, a))
            rhs = reflect_point(r, env.dynamics(s, a)[0])
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return CheckResult("equivariance", worst <= 1e-9,
                       f"max deviation {worst:.1e} over {2 * cases} triples ({boundary} on the boundary)")


def reward_suite(cases: int = 100_000, seed: int = 0, threshold: float = 0.05) -> CheckResult:
    """Boundary semantics of the sparse reward and exact invariance under reflections."""
    at = compute_reward([threshold, 0.0], [0.0, 0.0], threshold)
    past = compute_reward([threshold + 1e-9, 0.0], [0.0, 0.0], threshold)
    rng = np.random.default_rng(seed)
    achieved = rng.uniform(-1, 1, (cases, 3))
    desired = achieved + rng.normal(scale=threshold, size=(cases, 3))
    thetas = rng.uniform(0, math.pi, cases)
    changed = 0
    for i in range(cases):
        r = Reflection(float(thetas[i]), 3)
        before = compute_reward(achieved[i], desired[i], threshold)
        after = compute_reward(reflect_point(r, achieved[i]), reflect_point(r, desired[i]), threshold)
        changed += before != after
    ok = at == 0.0 and past == -1.0 and changed == 0
    return CheckResult("reward", ok, f"d=eps -> {at}, d=eps+1e-9 -> {past}, {changed}/{cases} reflected rewards changed")


def her_future_reference(batch, buffer: ReplayBuffer, relabel_prob: float, rng: np.random.Generator):
    """Hindsight 'future' relabeling, written one transition at a time.

    Random stream: all relabel-decision uniforms first, then all
    future-offset uniforms.  A transition at step ``t`` picks a transition
    uniformly among ``t .. horizon-1`` and adopts its achieved goal.
    Returns ``(goals, rewards)``.
    """
    n = len(batch)
    decide = rng.random(n)
    pick = rng.random(n)
    goals, rewards = [], []
    for i in range(n):
        slot, t = int(batch.slots[i]), int(batch.steps[i])
        goal = batch.desired_goals[i]
        if decide[i] < relabel_prob:
            candidates = list(range(t, buffer.horizon))
            chosen = candidates[min(int(math.floor(pick[i] * len(candidates))), len(candidates) - 1)]
            goal = buffer.achieved_goals[slot][chosen + 1]
        dist = math.sqrt(sum((a - g) ** 2 for a, g in zip(batch.achieved_goals[i], goal)))
        goals.append(np.array(goal, dtype=np.float64))
        rewards.append(0.0 if dist <= buffer.success_threshold else -1.0)
    return np.array(goals), np.array(rewards)


def _random_buffer(env, rng, trajectories: int) -> ReplayBuffer:
    spec = env.spec
    buf = ReplayBuffer(trajectories, spec.horizon, spec.state_dim, spec.action_dim, spec.goal_dim,
                       spec.success_threshold)
    for _ in range(trajectories):
        obs = np.zeros((spec.horizon + 1, env.dim))
        acts = np.zeros((spec.horizon, env.dim))
        obs[0] = env.sample_positions(rng, 1)[0]
        for t in range(spec.horizon):
            obs[t + 1], acts[t] = env.dynamics(obs[t], rng.uniform(-1, 1, env.dim))
        buf.store(Trajectory(obs, acts, project_goal(obs), env.sample_positions(rng, 1)[0]))
    return buf


def her_recovery_suite(batches: int = 1000, batch_size: int = 64, seed: int = 0) -> CheckResult:
    """GER with one zero threshold reproduces the reference HER relabeling exactly."""
    env = make_env("reach2d")
    rng = np.random.default_rng(seed)
    buf = _random_buffer(env, rng, 40)
    spec = RelabelSpec((0.0,), env.spec.success_threshold, 0.8)
    ours_rng = np.random.default_rng(seed + 1)
    ref_rng = np.random.default_rng(seed + 1)
    mismatches = 0
    for _ in range(batches):
        batch = sample_minibatch(buf, batch_size, rng)
        ours = ger_relabel(batch, spec, buf, ours_rng)
        goals, rewards = her_future_reference(batch, buf, spec.relabel_prob, ref_rng)
        if not (np.array_equal(ours.desired_goals, goals) and np.array_equal(ours.rewards, rewards)):
            mismatches += 1
    return CheckResult("her_recovery", mismatches == 0, f"{mismatches}/{batches} batches differ")


def ball_suite(samples: int = 100_000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    details, ok = [], True
    for dim, eps in ((2, 1.0), (3, 0.0375)):
        center = rng.uniform(-1, 1, dim)
        g = sample_in_balls(rng, np.tile(center, (samples, 1)), eps)
        dist = np.linalg.norm(g - center, axis=1)
        inside = bool(np.all(dist <= eps))
        expected = dim / (dim + 1) * eps
        rel = abs(dist.mean() - expected) / expected
        ok &= inside and rel < 0.01
        details.append(f"dim {dim}: all inside={inside}, mean norm rel err {rel:.2e}")
    return CheckResult("ball_sampler", ok, "; ".join(details))


def _finite_difference_error(net: MlpNet, x: np.ndarray, w_out: np.ndarray, h: float = 1e-5) -> float:
    _, cache = net.forward_cached(x)
    grads, gx = net.backward(cache, w_out)

    def f():
        return float(np.sum(net.forward(x) * w_out))

    worst = 0.0
    for analytic, p in list(zip(grads, net.params)) + [(gx, x)]:
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            down = f()
            p[idx] = old
            numeric[idx] = (up - down) / (2 * h)
        scale = max(1e-8, np.max(np.abs(numeric)) + np.max(np.abs(analytic)))
        worst = max(worst, float(np.max(np.abs(numeric - analytic)) / scale))
    return worst


def gradient_suite(shapes: int = 20, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(shapes):
        sizes = [int(rng.integers(1, 7)) for _ in range(int(rng.integers(2, 5)))]
        net = MlpNet(sizes, rng, output_scale=None if i % 2 else float(rng.uniform(0.5, 2.0)))
        x = rng.normal(size=(4, sizes[0]))
        worst = max(worst, _finite_difference_error(net, x, rng.normal(size=(4, sizes[-1]))))
    g = rng.normal(size=(3, 4))
    params = [rng.normal(size=(3, 4))]
    start = params[0].copy()
    adam_step(AdamState([(3, 4)], lr=1e-3), params, [g])
    adam_err = float(np.max(np.abs(params[0] - (start - 1e-3 * g / (np.abs(g) + 1e-8)))))
    ok = worst < 1e-4 and adam_err <= 1e-10
    return CheckResult("gradients", ok,
                       f"worst FD relative error {worst:.1e} over {shapes} shapes; Adam step-1 error {adam_err:.1e}")


SUITES = {
    "geometry": geometry_suite,
    "equivariance": equivariance_suite,
    "reward": reward_suite,
    "her_recovery": her_recovery_suite,
    "ball_sampler": ball_suite,
    "gradients": gradient_suite,
}


def run_all() -> list[CheckResult]:
    return [suite() for suite in SUITES.values()]
