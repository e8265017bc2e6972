import numpy as np
import pytest
import torch

from oransim.rlapps.dqn import (
    DqnAgent,
    DqnConfig,
    ReplayBuffer,
    RlError,
    Transition,
    td_targets,
)
from oransim.seeding import derive_rng

STATE = np.zeros(4)


def greedy_agent(biases, seed=0, **cfg_kw):
    """Agent whose Q values are constant (zero weights, fixed output bias)."""
    cfg = DqnConfig(alpha=1e-3, initial_explore_steps=0, eps_start=0.0, eps_end=0.0,
                    seed=seed, **cfg_kw)
    agent = DqnAgent(len(STATE), len(biases), cfg)
    with torch.no_grad():
        final = agent.online.net[-1]
        final.weight.zero_()
        final.bias.copy_(torch.tensor(biases, dtype=torch.float64))
    return agent


class TestAct:
    def test_greedy_argmax(self):
        agent = greedy_agent([1.0, 3.0, 2.0])
        assert agent.act(STATE) == 1

    def test_tie_breaks_to_lowest_index(self):
        agent = greedy_agent([5.0, 5.0, 1.0])
        assert agent.act(STATE) == 0

    def test_initial_phase_is_uniform_random(self):
        cfg = DqnConfig(alpha=1e-3, initial_explore_steps=3000, seed=3)
        agent = DqnAgent(4, 3, cfg)
        counts = np.zeros(3)
        for _ in range(3000):
            counts[agent.act(STATE)] += 1
        assert np.all(np.abs(counts / 1000.0 - 1.0) < 0.12)

    def test_epsilon_schedule(self):
        cfg = DqnConfig(alpha=1e-3, initial_explore_steps=10, eps_start=1.0,
                        eps_end=0.05, eps_decay_steps=100, seed=0)
        agent = DqnAgent(4, 2, cfg)
        assert agent.epsilon() == 1.0
        agent.action_steps = 10
        assert agent.epsilon() == pytest.approx(1.0)
        agent.action_steps = 60
        assert agent.epsilon() == pytest.approx(1.0 - 0.95 / 2)
        agent.action_steps = 10_000
        assert agent.epsilon() == pytest.approx(0.05)

    def test_act_deterministic_across_agents(self):
        mk = lambda: DqnAgent(4, 3, DqnConfig(alpha=1e-3, seed=11))
        a, b = mk(), mk()
        acts_a = [a.act(STATE) for _ in range(500)]
        acts_b = [b.act(STATE) for _ in range(500)]
        assert acts_a == acts_b


class TestTdTargets:
    def test_terminal_reward_passthrough(self):
        agent = greedy_agent([2.0, 1.0])
        batch = [Transition(STATE, 0, 1.0, STATE, True)]
        y = td_targets(batch, agent.online, agent.target, 0.9)
        assert float(y[0]) == 1.0

    def test_bootstrap_hand_value(self):
        agent = greedy_agent([2.0, 1.0])
        agent.sync_target()
        batch = [Transition(STATE, 0, 0.5, STATE, False)]
        y = td_targets(batch, agent.online, agent.target, 0.9)
        assert float(y[0]) == pytest.approx(0.5 + 0.9 * 2.0)

    def test_gamma_zero_is_reward(self):
        agent = greedy_agent([2.0, 1.0])
        agent.sync_target()
        batch = [Transition(STATE, 1, -0.25, STATE, False)]
        assert float(td_targets(batch, agent.online, agent.target, 0.0)[0]) == -0.25


class TestTrainStep:
    def test_starved_buffer_is_noop(self):
        agent = DqnAgent(4, 2, DqnConfig(alpha=1e-3, batch_size=32, seed=0))
        assert agent.train_step() is None

    def test_loss_nonnegative(self):
        agent = DqnAgent(4, 2, DqnConfig(alpha=1e-3, batch_size=4, seed=1))
        rng = derive_rng(0, "loss")
        for _ in range(16):
            agent.push(Transition(rng.normal(size=4), int(rng.integers(2)),
                                  float(rng.normal()), rng.normal(size=4), False))
        for _ in range(10):
            assert agent.train_step() >= 0.0

    def test_target_sync_copies_exactly(self):
        agent = DqnAgent(4, 2, DqnConfig(alpha=1e-2, batch_size=4,
                                         target_sync_every=5, seed=2))
        rng = derive_rng(1, "sync")
        for _ in range(8):
            agent.push(Transition(rng.normal(size=4), int(rng.integers(2)),
                                  float(rng.normal()), rng.normal(size=4), False))
        for i in range(1, 6):
            agent.train_step()
        # update 5 just synced: exact copy
        online = agent.online.state_dict()
        target = agent.target.state_dict()
        assert all(torch.equal(online[k], target[k]) for k in online)
        agent.train_step()
        online = agent.online.state_dict()
        target = agent.target.state_dict()
        assert any(not torch.equal(online[k], target[k]) for k in online)

    def test_single_transition_convergence(self):
        agent = DqnAgent(3, 2, DqnConfig(alpha=5e-3, batch_size=1, seed=4,
                                         target_sync_every=50))
        s = np.array([0.3, -0.2, 0.7])
        agent.push(Transition(s, 1, 0.7, s, True))
        for _ in range(3000):
            agent.train_step()
        assert agent.q_values(s)[1] == pytest.approx(0.7, abs=1e-2)

    def test_training_bit_reproducible(self):
        def run():
            agent = DqnAgent(4, 3, DqnConfig(alpha=1e-3, batch_size=8, seed=21))
            rng = derive_rng(2, "rep")
            losses = []
            for i in range(200):
                st = rng.normal(size=4)
                agent.push(Transition(st, agent.act(st), float(rng.normal()),
                                      rng.normal(size=4), False))
                loss = agent.train_step()
                if loss is not None:
                    losses.append(loss)
            return losses, agent.online.state_dict()

        l1, s1 = run()
        l2, s2 = run()
        assert l1 == l2
        assert all(torch.equal(s1[k], s2[k]) for k in s1)


class TestReplayBuffer:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(5, derive_rng(0, "buf"))
        for r in range(8):
            buf.push(Transition(STATE, 0, float(r), STATE, False))
        assert len(buf) == 5
        rewards = {t.reward for t in buf.sample(5)} | {
            buf._items[i].reward for i in range(5)
        }
        assert rewards == {3.0, 4.0, 5.0, 6.0, 7.0}

    def test_sample_requires_enough(self):
        buf = ReplayBuffer(5, derive_rng(0, "b2"))
        buf.push(Transition(STATE, 0, 0.0, STATE, False))
        with pytest.raises(RlError):
            buf.sample(2)

    def test_nonfinite_transition_rejected(self):
        with pytest.raises(RlError):
            Transition(np.array([np.nan]), 0, 0.0, np.array([0.0]), False)
        with pytest.raises(RlError):
            Transition(STATE, 0, float("inf"), STATE, False)


def test_config_validation():
    with pytest.raises(RlError):
        DqnConfig(gamma=1.5)
    with pytest.raises(RlError):
        DqnConfig(eps_start=2.0)


def test_agent_checkpoint_round_trip(tmp_path):
    agent = DqnAgent(4, 3, DqnConfig(alpha=1e-3, batch_size=4, seed=8))
    rng = derive_rng(3, "ckpt")
    for _ in range(12):
        st = rng.normal(size=4)
        agent.push(Transition(st, agent.act(st), 0.1, st, False))
        agent.train_step()
    path = tmp_path / "agent.pt"
    agent.save(path)
    loaded = DqnAgent.load(path)
    probe = rng.normal(size=4)
    assert np.allclose(loaded.q_values(probe), agent.q_values(probe))
    assert loaded.update_count == agent.update_count
