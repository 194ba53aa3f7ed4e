import numpy as np
import pytest
import torch

from autoft.agent import Agent, AgentConfig, Algorithm, ObsSpec
from autoft.agent.embeddings import HashedBagOfWordsEmbedding
from autoft.core import compute_mc_returns
from autoft.sim import SimConfig, TabletopEnv

SMALL = AgentConfig(hidden_sizes=(32, 32), batch_size=16, feature_dim=8,
                    image_channels=(4, 4, 4, 4), embedding_dim=16)


def make_agent(catalog, state_config, seed=0, config=SMALL):
    spec = ObsSpec(
        mode=state_config.observation_mode,
        image_shape=state_config.image_shape,
        proprio_dim=state_config.proprio_dim,
    )
    embedder = HashedBagOfWordsEmbedding(config.embedding_dim)
    return Agent.create(config, spec, 3, catalog.tasks, embedder, seed)


def fill_buffer(agent, bundle, gamma=0.99):
    buffer = agent.make_buffer(seed=5)
    trajs = [compute_mc_returns(t, gamma) for t in bundle.demonstrations]
    buffer.load_offline(trajs)
    return buffer


class TestPolicyAct:
    def test_deterministic_mode_repeats(self, catalog, state_config, state_env):
        agent = make_agent(catalog, state_config)
        obs = state_env.reset(0, 0)
        a1 = agent.policy_act(obs, 0, stochastic=False)
        a2 = agent.policy_act(obs, 0, stochastic=False)
        assert np.array_equal(a1, a2)

    def test_actions_bounded_over_many_states(self, catalog, state_config):
        agent = make_agent(catalog, state_config)
        rng = np.random.default_rng(0)
        x = torch.as_tensor(
            rng.normal(size=(10_000, agent.nets.encoder.out_dim + agent.z_table.shape[1])),
            dtype=agent.dtype,
        )
        eps = torch.randn(10_000, 3, generator=agent.generator, dtype=agent.dtype)
        with torch.no_grad():
            actions, _ = agent.nets.policy.sample(x, eps)
        assert float(actions.abs().max()) <= 1.0

    def test_stochastic_mean_approaches_deterministic(self, catalog, state_config, state_env):
        agent = make_agent(catalog, state_config)
        obs = state_env.reset(3, 0)
        det = agent.policy_act(obs, 0, stochastic=False)
        samples = np.stack([agent.policy_act(obs, 0, stochastic=True) for _ in range(10_000)])
        assert np.max(np.abs(samples.mean(axis=0) - det)) < 0.05

    def test_unknown_task_rejected(self, catalog, state_config, state_env):
        agent = make_agent(catalog, state_config)
        obs = state_env.reset(3, 0)
        with pytest.raises(ValueError):
            agent.policy_act(obs, 777, stochastic=False)


class TestEncode:
    def test_identical_observations_identical_features(self, catalog, image_config):
        agent = make_agent(catalog, image_config)
        env = TabletopEnv(image_config, catalog)
        obs = env.reset(1, 0)
        assert np.array_equal(agent.encode(obs), agent.encode(obs))

    def test_actor_update_leaves_encoder_unchanged(self, catalog, image_config):
        agent = make_agent(catalog, image_config)
        # image-mode buffer from a tiny bundle
        env = TabletopEnv(image_config, catalog)
        from autoft.sim import generate_bundle

        bundle = generate_bundle(env, {"prior_per_task": 1, "forward": 1, "backward": 1, "failures": 1}, 3)
        buffer = fill_buffer(agent, bundle)
        agent.bc_weight = 1.0
        before = [p.clone() for p in agent.nets.encoder.parameters()]
        # run only the actor half of an update
        from autoft.agent.losses import draw_update_noise, sac_actor_loss

        sample = buffer.sample(8, 1.0)
        batch = agent.to_torch_batch(sample)
        noise = draw_update_noise(agent.generator, len(batch), 3, 2, agent.dtype)
        loss, _ = sac_actor_loss(agent.nets, batch, noise, entropy_coef=0.1, bc_weight=1.0)
        agent.actor_opt.zero_grad()
        loss.backward()
        agent.actor_opt.step()
        for b, p in zip(before, agent.nets.encoder.parameters()):
            assert torch.equal(b, p)
            assert p.grad is None

    def test_critic_update_changes_encoder(self, catalog, image_config):
        agent = make_agent(catalog, image_config)
        env = TabletopEnv(image_config, catalog)
        from autoft.sim import generate_bundle

        bundle = generate_bundle(env, {"prior_per_task": 1, "forward": 1, "backward": 1, "failures": 1}, 3)
        buffer = fill_buffer(agent, bundle)
        agent.bc_weight = 1.0
        before = [p.clone() for p in agent.nets.encoder.parameters()]
        agent.update_step(buffer)
        changed = any(
            not torch.equal(b, p) for b, p in zip(before, agent.nets.encoder.parameters())
        )
        assert changed


class TestUpdateStep:
    def test_tau_one_copies_targets(self, catalog, state_config, small_bundle):
        cfg = AgentConfig(hidden_sizes=(16,), batch_size=8, target_update_rate=1.0,
                          embedding_dim=8, bc_weight=1.0)
        agent = make_agent(catalog, state_config, config=cfg)
        buffer = fill_buffer(agent, small_bundle)
        agent.update_step(buffer)
        for t, s in zip(agent.nets.q1_target.parameters(), agent.nets.q1.parameters()):
            assert torch.equal(t, s)

    def test_tau_zero_freezes_targets(self, catalog, state_config, small_bundle):
        cfg = AgentConfig(hidden_sizes=(16,), batch_size=8, target_update_rate=0.0,
                          embedding_dim=8, bc_weight=1.0)
        agent = make_agent(catalog, state_config, config=cfg)
        before = [p.clone() for p in agent.nets.q1_target.parameters()]
        buffer = fill_buffer(agent, small_bundle)
        agent.update_step(buffer)
        for b, t in zip(before, agent.nets.q1_target.parameters()):
            assert torch.equal(b, t)

    def test_repeat_runs_bit_identical(self, catalog, state_config, small_bundle):
        def run():
            cfg = AgentConfig(hidden_sizes=(16, 16), batch_size=16, embedding_dim=8,
                              bc_weight=1.0)
            agent = make_agent(catalog, state_config, seed=4, config=cfg)
            buffer = fill_buffer(agent, small_bundle)
            diags = [agent.update_step(buffer) for _ in range(100)]
            return agent.parameter_vector(), diags

        params1, diags1 = run()
        params2, diags2 = run()
        assert np.array_equal(params1, params2)
        assert diags1 == diags2

    def test_unresolved_auto_bc_weight_rejected(self, catalog, state_config, small_bundle):
        cfg = AgentConfig(hidden_sizes=(16,), batch_size=8, embedding_dim=8, bc_weight="auto")
        agent = make_agent(catalog, state_config, config=cfg)
        buffer = fill_buffer(agent, small_bundle)
        with pytest.raises(ValueError, match="bc_weight"):
            agent.update_step(buffer)


class TestResolveBcWeight:
    def test_ratio_rule_and_stability(self, catalog, state_config, small_bundle):
        cfg = AgentConfig(hidden_sizes=(16, 16), batch_size=16, embedding_dim=8)
        agent = make_agent(catalog, state_config, seed=2, config=cfg)
        buffer = fill_buffer(agent, small_bundle)
        weight = agent.resolve_bc_weight(buffer, n_probe_batches=4, warmup_steps=50)
        assert weight > 0
        assert agent.bc_weight == weight
        # held fixed afterwards
        for _ in range(5):
            agent.update_step(buffer)
        assert agent.bc_weight == weight

    def test_reward_scaling_scales_weight(self, catalog, state_config, small_bundle):
        from dataclasses import replace as dreplace

        def resolve(scale):
            cfg = AgentConfig(hidden_sizes=(16, 16), batch_size=16, embedding_dim=8)
            agent = make_agent(catalog, state_config, seed=2, config=cfg)
            buffer = agent.make_buffer(seed=5)
            trajs = []
            for t in small_bundle.demonstrations:
                scaled = t.__class__(
                    transitions=tuple(
                        dreplace(tr, reward=tr.reward * scale) for tr in t.transitions
                    ),
                    task_id=t.task_id,
                    success=t.success,
                )
                trajs.append(compute_mc_returns(scaled, 0.99))
            buffer.load_offline(trajs)
            return agent.resolve_bc_weight(buffer, n_probe_batches=4, warmup_steps=300)

        w1 = resolve(1.0)
        w2 = resolve(2.0)
        assert w2 / w1 == pytest.approx(2.0, rel=0.2)
