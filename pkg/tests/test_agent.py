import numpy as np
import pytest

from kaleido.agent import AgentConfig, DdpgAgent, Normalizer
from kaleido.replay import Batch


def make_agent(seed=0, **kw):
    return DdpgAgent(2, 2, 2, 1.0, AgentConfig(**kw), np.random.default_rng(seed))


def single_batch(reward=-1.0, n=1):
    return Batch(
        states=np.tile([0.1, 0.2], (n, 1)), actions=np.tile([0.5, -0.5], (n, 1)),
        next_states=np.tile([0.125, 0.175], (n, 1)), achieved_goals=np.tile([0.125, 0.175], (n, 1)),
        desired_goals=np.tile([0.6, -0.3], (n, 1)), rewards=np.full(n, reward),
        slots=np.zeros(n, dtype=int), steps=np.zeros(n, dtype=int),
    )


def test_clip_bounds():
    assert make_agent().clip_bounds == pytest.approx((-50.0, 0.0))


def test_act_bounded_and_deterministic_without_noise():
    agent = make_agent()
    a = agent.act(np.array([0.3, 0.1]), np.array([-0.2, 0.4]))
    b = agent.act(np.array([0.3, 0.1]), np.array([-0.2, 0.4]))
    np.testing.assert_array_equal(a, b)
    assert np.all(np.abs(a) <= 1.0)


def test_random_actions_uniform_in_box():
    agent = make_agent(random_eps=1.0)
    rng = np.random.default_rng(0)
    acts = agent.act(np.zeros((20_000, 2)), np.zeros((20_000, 2)), explore=True, rng=rng)
    assert np.all(np.abs(acts) <= 1.0)
    assert np.all(np.abs(acts.mean(axis=0)) < 0.02)
    assert np.all(np.abs(acts.var(axis=0) - 1.0 / 3.0) < 0.01)


def test_exploration_reproducible():
    agent = make_agent()
    seq = [agent.act(np.zeros(2), np.ones(2) * 0.1, explore=True, rng=np.random.default_rng(3)) for _ in range(2)]
    np.testing.assert_array_equal(*seq)


def test_tau_one_copies_online_nets():
    agent = make_agent(tau=1.0)
    agent.update(single_batch(n=8))
    np.testing.assert_array_equal(agent.target_actor.flat(), agent.actor.flat())
    np.testing.assert_array_equal(agent.target_critic.flat(), agent.critic.flat())


def test_empty_batch_noop():
    agent = make_agent()
    before = agent.critic.flat()
    assert agent.update(None) == (0.0, 0.0)
    np.testing.assert_array_equal(agent.critic.flat(), before)


def test_critic_overfits_single_transition():
    agent = make_agent(seed=1)
    batch = single_batch(reward=-1.0)
    losses = [agent.update(batch)[0] for _ in range(100)]
    assert losses[-1] < losses[0]
    assert agent.all_finite()


def test_soft_update_contracts_toward_frozen_online():
    from kaleido.nn import soft_update
    agent = make_agent()
    agent.target_critic.params[0] += 1.0
    dists = []
    for _ in range(10):
        soft_update(agent.target_critic, agent.critic, 0.05)
        dists.append(np.linalg.norm(agent.target_critic.flat() - agent.critic.flat()))
    assert all(b <= a for a, b in zip(dists, dists[1:]))


def test_normalizer_clip_and_roundtrip():
    norm = Normalizer(2)
    norm.update(np.random.default_rng(0).normal(size=(1000, 2)))
    assert np.all(np.abs(norm(np.array([100.0, -100.0]))) == 5.0)
    back = Normalizer.from_state(norm.state_dict())
    np.testing.assert_array_equal(back.mean, norm.mean)


def test_checkpoint_roundtrip(tmp_path):
    agent = make_agent()
    agent.obs_norm.update(np.ones((3, 2)))
    agent.update(single_batch(n=4))
    agent.save(tmp_path)
    other = make_agent(seed=9)
    other.load(tmp_path)
    for name in ("actor", "critic", "target_actor", "target_critic"):
        np.testing.assert_array_equal(getattr(other, name).flat(), getattr(agent, name).flat())
    x = np.array([0.2, 0.3])
    np.testing.assert_array_equal(other.act(x, x), agent.act(x, x))
