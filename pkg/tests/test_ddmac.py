"""Trainer tests: factored policies, advantages, importance weights,
update mechanics, dual ascent, and training-loop contracts."""

import numpy as np
import pytest

from lcplan.constraints import LIFECYCLE_RISK, SoftConstraintSpec
from lcplan.costs import LossTable
from lcplan.ddmac import (
    AgentSet,
    Optimizers,
    ReplayBuffer,
    TrainConfig,
    advantage,
    dual_update,
    importance_weight,
    joint_policy,
    train,
    update,
)
from lcplan.env import ReplayTuple, feature_dim
from lcplan.neural import SOFTMAX, Mlp

from conftest import make_scaled_config


def small_train_config(episodes, **kw):
    defaults = dict(
        episodes=episodes,
        batch_size=16,
        buffer_capacity=5000,
        actor_hidden=(16, 16),
        critic_hidden=(32, 32),
        explore_anneal_episodes=max(1, episodes // 2),
        updates_per_step=1,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


def make_tuple(dim, n_agents, cost=1.0, terminal=False, g=(), rng=None):
    rng = rng or np.random.default_rng(0)
    return ReplayTuple(
        features=rng.normal(size=dim),
        actions=rng.integers(0, 5, size=n_agents),
        mu=np.full(n_agents, 0.2),
        cost=cost,
        g_soft=np.array(g, dtype=float),
        next_features=rng.normal(size=dim),
        terminal=terminal,
    )


class TestJointPolicy:
    def test_uniform_agents_product_rule(self):
        agents = AgentSet.create(8, 2, small_train_config(1), np.random.default_rng(1))
        dists, joint_prob = joint_policy(agents, np.zeros(8))
        # fresh agents are exactly uniform
        assert np.allclose(dists, 0.2, atol=1e-15)
        assert joint_prob([0, 3]) == pytest.approx(1.0 / 25.0, abs=1e-15)

    def test_joint_probabilities_sum_to_one(self):
        rng = np.random.default_rng(2)
        agents = AgentSet.create(6, 2, small_train_config(1), rng)
        for actor in agents.actors:
            for w in actor.weights:
                w[:] = rng.normal(scale=0.4, size=w.shape)
        dists, joint_prob = joint_policy(agents, rng.normal(size=6))
        total = sum(joint_prob([a, b]) for a in range(5) for b in range(5))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_deterministic_agent_collapses_support(self):
        rng = np.random.default_rng(3)
        agents = AgentSet.create(6, 2, small_train_config(1), rng)
        agents.actors[0].biases[-1][:] = [500.0, 0.0, 0.0, 0.0, 0.0]
        dists, joint_prob = joint_policy(agents, np.zeros(6))
        assert dists[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert joint_prob([1, 2]) == pytest.approx(0.0, abs=1e-12)


class TestAdvantage:
    def test_nonterminal_substitution(self):
        # Identity critic: V equals the single input feature, so V=11 and
        # V'=10 give A = 1.0 + 0.5 + 0.975*10 - 11 = 0.25.
        critic = Mlp([np.array([[1.0]])], [np.zeros(1)], "linear")
        item = ReplayTuple(
            features=np.array([11.0]),
            actions=np.array([0]),
            mu=np.array([1.0]),
            cost=1.0,
            g_soft=np.array([5.0]),
            next_features=np.array([10.0]),
            terminal=False,
        )
        a = advantage(item, critic, np.array([0.1]), 0.975)
        assert a == pytest.approx(0.25, abs=1e-12)

    def test_terminal_drops_bootstrap(self):
        rng = np.random.default_rng(5)
        agents = AgentSet.create(4, 1, small_train_config(1), rng)
        agents.critic.biases[-1][:] = 2.0
        item = make_tuple(4, 1, cost=2.0, terminal=True)
        a = advantage(item, agents.critic, np.array([]), 0.975)
        assert a == pytest.approx(0.0, abs=1e-12)

    def test_zero_multipliers_recover_unconstrained(self):
        rng = np.random.default_rng(6)
        agents = AgentSet.create(4, 1, small_train_config(1), rng)
        item = make_tuple(4, 1, cost=1.5, g=(123.0,))
        a0 = advantage(item, agents.critic, np.array([0.0]), 0.9)
        item_plain = ReplayTuple(
            item.features,
            item.actions,
            item.mu,
            item.cost,
            np.array([]),
            item.next_features,
            item.terminal,
        )
        a1 = advantage(item_plain, agents.critic, np.array([]), 0.9)
        assert a0 == a1


class TestImportanceWeight:
    def test_on_policy_weight_is_one(self):
        rng = np.random.default_rng(7)
        agents = AgentSet.create(6, 2, small_train_config(1), rng)
        item = make_tuple(6, 2, rng=rng)
        item.mu = np.array([0.2, 0.2])  # fresh agents are uniform
        assert importance_weight(item, agents, clip=2.0) == pytest.approx(1.0)

    def test_clip_applies(self):
        rng = np.random.default_rng(8)
        agents = AgentSet.create(6, 1, small_train_config(1), rng)
        item = make_tuple(6, 1, rng=rng)
        item.mu = np.array([0.04])  # ratio 0.2/0.04 = 5
        assert importance_weight(item, agents, clip=2.0) == 2.0

    def test_ratio_product(self):
        rng = np.random.default_rng(9)
        agents = AgentSet.create(6, 2, small_train_config(1), rng)
        item = make_tuple(6, 2, rng=rng)
        item.mu = np.array([0.4, 1.0 / 6.0])  # ratios 0.5 and 1.2
        got = importance_weight(item, agents, clip=5.0)
        assert got == pytest.approx(0.6, abs=1e-12)

    def test_zero_mu_rejected(self):
        rng = np.random.default_rng(10)
        agents = AgentSet.create(6, 1, small_train_config(1), rng)
        item = make_tuple(6, 1, rng=rng)
        item.mu = np.array([0.0])
        with pytest.raises(ValueError):
            importance_weight(item, agents, clip=2.0)


def batch_from_tuples(items, n_soft=0):
    return (
        np.stack([i.features for i in items]),
        np.stack([i.actions for i in items]),
        np.stack([i.mu for i in items]),
        np.array([i.cost for i in items]),
        np.stack([i.g_soft if len(i.g_soft) else np.zeros(n_soft) for i in items]).reshape(
            len(items), n_soft
        ),
        np.stack([i.next_features for i in items]),
        np.array([i.terminal for i in items]),
    )


class TestUpdate:
    def test_zero_advantage_changes_nothing(self):
        rng = np.random.default_rng(11)
        cfg = small_train_config(1)
        agents = AgentSet.create(6, 2, cfg, rng)
        opts = Optimizers.create(agents, cfg)
        # terminal tuples with cost exactly matching V(x)=0
        items = [make_tuple(6, 2, cost=0.0, terminal=True, rng=rng) for _ in range(8)]
        before = [p.copy() for a in agents.actors for p in a.parameters()]
        before += [p.copy() for p in agents.critic.parameters()]
        update(batch_from_tuples(items), agents, np.array([]), opts, 0.975, 2.0)
        after = [p for a in agents.actors for p in a.parameters()]
        after += [p for p in agents.critic.parameters()]
        for b, a in zip(before, after):
            assert np.array_equal(b, a)

    def test_positive_advantage_lowers_taken_probability(self):
        rng = np.random.default_rng(12)
        cfg = small_train_config(1, actor_lr=1e-2)
        agents = AgentSet.create(6, 2, cfg, rng)
        opts = Optimizers.create(agents, cfg)
        item = make_tuple(6, 2, cost=5.0, terminal=True, rng=rng)
        p_before = [
            agents.actors[i].forward(item.features)[0][item.actions[i]]
            for i in range(2)
        ]
        update(batch_from_tuples([item]), agents, np.array([]), opts, 0.975, 2.0)
        p_after = [
            agents.actors[i].forward(item.features)[0][item.actions[i]]
            for i in range(2)
        ]
        for before, after in zip(p_before, p_after):
            assert after < before

    def test_critic_fits_constant_cost_chain(self):
        # Fixed trivial-maintenance policy on a deterministic-cost
        # environment: every step costs the same, so the TD errors must
        # vanish as the critic learns the time-indexed value.
        from lcplan.env import Env, JointAction

        config = make_scaled_config(n_components=2, horizon=6, types=("I", "I"))
        config.losses = LossTable(np.zeros(4), np.zeros(4))
        env = Env(config)
        cfg = small_train_config(1, critic_lr=3e-3)
        agents = AgentSet.create(feature_dim(2), 2, cfg, np.random.default_rng(13))
        opts = Optimizers.create(agents, cfg)
        buffer = ReplayBuffer(5000, feature_dim(2), 2, 0)
        rng = np.random.default_rng(14)
        codes = JointAction(np.array([2, 2]))  # partial repair both, constant cost
        for ep in range(40):
            env.reset(seed=ep)
            while not env.done:
                result = env.step(codes)
                result.replay.mu = np.ones(2)
                buffer.push(result.replay)
        errors = []
        for k in range(3000):
            batch = buffer.sample(32, rng)
            adv_mean, _ = update(batch, agents, np.array([]), opts, config.discount, 1.0)
            errors.append(abs(adv_mean))
        assert np.mean(errors[:100]) > 10 * np.mean(errors[-100:])
        assert np.mean(errors[-100:]) < 1e-3

    def test_reduces_to_vanilla_actor_critic_on_policy(self):
        # lambda = 0, w = 1 (mu equals pi, clip at 1): the parameter change
        # must equal an independently coded vanilla decentralized AC step.
        rng = np.random.default_rng(15)
        cfg = small_train_config(1, actor_lr=1e-3, critic_lr=1e-3)
        agents = AgentSet.create(6, 2, cfg, rng)
        for actor in agents.actors:  # give actors non-uniform outputs
            actor.weights[-1][:] = rng.normal(scale=0.3, size=actor.weights[-1].shape)
        agents.critic.weights[-1][:] = rng.normal(
            scale=0.3, size=agents.critic.weights[-1].shape
        )
        items = []
        for _ in range(6):
            item = make_tuple(6, 2, cost=float(rng.normal()), rng=rng)
            item.mu = np.array(
                [
                    agents.actors[i].forward(item.features)[0][item.actions[i]]
                    for i in range(2)
                ]
            )
            items.append(item)
        batch = batch_from_tuples(items)

        # Independent vanilla implementation on copies.
        copies = AgentSet(
            [Mlp([w.copy() for w in a.weights], [b.copy() for b in a.biases], SOFTMAX)
             for a in agents.actors],
            Mlp(
                [w.copy() for w in agents.critic.weights],
                [b.copy() for b in agents.critic.biases],
                agents.critic.head,
            ),
        )
        ref_opts = Optimizers.create(copies, cfg)
        feat, actions, mu, cost, g, nxt, term = batch
        B = len(items)
        v = copies.critic.forward(feat)[0][:, 0]
        v2 = copies.critic.forward(nxt)[0][:, 0]
        adv = cost + 0.975 * v2 * (~term) - v
        from lcplan.neural import adam_step, log_prob_output_grad

        for i, actor in enumerate(copies.actors):
            probs, cache = actor.forward(feat)
            grads = actor.backward(
                cache, log_prob_output_grad(probs, actions[:, i], adv / B)
            )
            adam_step(actor.parameters(), grads, ref_opts.actors[i])
        _, cache = copies.critic.forward(feat)
        grads = copies.critic.backward(cache, (-adv / B)[:, None])
        adam_step(copies.critic.parameters(), grads, ref_opts.critic)

        opts = Optimizers.create(agents, cfg)
        update(batch, agents, np.array([]), opts, 0.975, 1.0)

        for a, c in zip(agents.actors, copies.actors):
            for p, q in zip(a.parameters(), c.parameters()):
                assert np.allclose(p, q, atol=1e-12)
        for p, q in zip(agents.critic.parameters(), copies.critic.parameters()):
            assert np.allclose(p, q, atol=1e-12)


class TestDualUpdate:
    def test_gradient_step(self):
        assert dual_update(0.0, 3.0, 2.5, 1e-5) == pytest.approx(5e-6)

    def test_exact_satisfaction_keeps_lambda(self):
        assert dual_update(0.3, 2.5, 2.5, 1e-5) == 0.3

    def test_projection_at_zero(self):
        assert dual_update(0.0, 1.0, 2.0, 1e-5) == 0.0

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            dual_update(-0.1, 1.0, 1.0, 1e-5)


class TestReplayBuffer:
    def test_capacity_bound(self):
        buf = ReplayBuffer(10, 4, 2, 0)
        rng = np.random.default_rng(16)
        for _ in range(25):
            buf.push(make_tuple(4, 2, rng=rng))
        assert len(buf) == 10

    def test_uniform_sampling_chi_squared(self):
        buf = ReplayBuffer(50, 4, 1, 0)
        rng_data = np.random.default_rng(17)
        for k in range(50):
            item = make_tuple(4, 1, rng=rng_data)
            item.cost = float(k)  # identify slots by cost
            buf.push(item)
        rng = np.random.default_rng(18)
        draws = 50_000
        counts = np.zeros(50)
        for _ in range(draws // 500):
            batch = buf.sample(500, rng)
            slots = batch[3].astype(int)
            np.add.at(counts, slots, 1)
        expected = draws / 50
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        k = 49  # degrees of freedom
        # Wilson-Hilferty 99th percentile approximation
        z = 2.3263478740408408
        crit = k * (1 - 2 / (9 * k) + z * np.sqrt(2 / (9 * k))) ** 3
        assert chi2 < crit

    def test_missing_mu_rejected(self):
        buf = ReplayBuffer(10, 4, 1, 0)
        item = make_tuple(4, 1)
        item.mu = None
        with pytest.raises(ValueError):
            buf.push(item)


class TestTrain:
    def test_zero_episodes_returns_untrained_agents(self, scaled_config):
        result = train(small_train_config(0), scaled_config, seed=0)
        assert result.log == []
        dists = result.agents.distributions(np.zeros(feature_dim(4)))
        assert np.allclose(dists, 0.2, atol=1e-15)

    def test_reproducible_training_log(self, scaled_config):
        cfg = small_train_config(5)
        a = train(cfg, scaled_config, seed=77)
        b = train(cfg, scaled_config, seed=77)
        assert a.log == b.log
        for p, q in zip(a.agents.critic.parameters(), b.agents.critic.parameters()):
            assert np.array_equal(p, q)

    def test_exploration_schedule_realized(self, scaled_config):
        episodes = 40
        cfg = small_train_config(episodes, explore_anneal_episodes=30)
        result = train(cfg, scaled_config, seed=5)
        draws = scaled_config.horizon * 4
        for row in result.log:
            eps = row["epsilon"]
            sigma = np.sqrt(eps * (1 - eps) / draws)
            assert abs(row["random_fraction"] - eps) <= 3 * sigma + 1e-12

    def test_lambda_grows_under_infeasible_constraint(self):
        spec = SoftConstraintSpec(LIFECYCLE_RISK, threshold=0.0)
        config = make_scaled_config(soft_constraints=(spec,))
        result = train(small_train_config(10), config, seed=6)
        lams = [row["lambda_0"] for row in result.log]
        assert all(b >= a for a, b in zip(lams, lams[1:]))
        assert lams[-1] > 0.0

    def test_checkpoint_round_trip(self, scaled_config, tmp_path):
        result = train(small_train_config(2), scaled_config, seed=8)
        path = tmp_path / "agents.bin"
        result.agents.save(path)
        loaded = AgentSet.load(path)
        x = np.random.default_rng(9).normal(size=feature_dim(4))
        assert np.array_equal(loaded.distributions(x), result.agents.distributions(x))
        assert loaded.value(x) == result.agents.value(x)
