import numpy as np
import pytest

from kaleido.checks import her_future_reference  # noqa: F401  (re-exported for tests)
from kaleido.env import make_env, project_goal
from kaleido.replay import ReplayBuffer, Trajectory


def random_trajectory(env, rng, actions=None):
    """Roll the live environment with random (or given) actions."""
    horizon = env.spec.horizon
    obs = np.zeros((horizon + 1, env.dim))
    executed = np.zeros((horizon, env.dim))
    obs[0] = env.sample_positions(rng, 1)[0]
    goal = env.sample_positions(rng, 1)[0]
    for t in range(horizon):
        a = rng.uniform(-1, 1, env.dim) if actions is None else actions[t]
        obs[t + 1], executed[t] = env.dynamics(obs[t], a)
    return Trajectory(obs, executed, project_goal(obs), goal)


@pytest.fixture
def env2d():
    return make_env("reach2d")


@pytest.fixture
def filled_buffer(env2d):
    rng = np.random.default_rng(123)
    spec = env2d.spec
    buf = ReplayBuffer(64, spec.horizon, 2, 2, 2, spec.success_threshold)
    for _ in range(20):
        buf.store(random_trajectory(env2d, rng))
    return buf


ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
