import numpy as np
import pytest
import torch

from autoft.agent.config import Algorithm, ObsSpec
from autoft.agent.losses import (
    TorchBatch,
    UpdateNoise,
    awac_actor_loss,
    compute_td_targets,
    conservative_penalty,
    critic_loss,
    sac_actor_loss,
    sample_ood_actions,
)
from autoft.agent.networks import ObsTensors, build_networks

DTYPE = torch.float64
STATE_SPEC = ObsSpec(mode="state", image_shape=None, proprio_dim=4)
IMAGE_SPEC = ObsSpec(mode="image", image_shape=(8, 8, 3), proprio_dim=3)
ACT_DIM = 2
Z_DIM = 3
N_SAMPLES = 3


def small_nets(spec, seed):
    gen = torch.Generator().manual_seed(seed)
    return build_networks(
        spec, ACT_DIM, Z_DIM, feature_dim=3, hidden_sizes=(6,), generator=gen,
        dtype=DTYPE, image_channels=(2, 2, 2, 2),
    )


def random_batch(spec, seed, batch_size=4, mc_offset=0.0):
    rng = np.random.default_rng(seed)
    def obs():
        proprio = rng.normal(size=(batch_size, spec.proprio_dim))
        image = None
        if spec.mode == "image":
            image = rng.uniform(0, 1, size=(batch_size, *spec.image_shape))
        return ObsTensors.from_numpy(proprio, image, DTYPE)
    return TorchBatch(
        obs=obs(),
        action=torch.as_tensor(rng.uniform(-0.9, 0.9, size=(batch_size, ACT_DIM)), dtype=DTYPE),
        reward=torch.as_tensor(rng.integers(0, 2, size=batch_size).astype(float), dtype=DTYPE),
        next_obs=obs(),
        terminal=torch.as_tensor(rng.integers(0, 2, size=batch_size).astype(float), dtype=DTYPE),
        mc_return=torch.as_tensor(rng.uniform(0, 1, size=batch_size) + mc_offset, dtype=DTYPE),
        z=torch.as_tensor(rng.normal(size=(batch_size, Z_DIM)), dtype=DTYPE),
        is_demo=torch.as_tensor(rng.integers(0, 2, size=batch_size).astype(bool) | True),
        task_ids=torch.zeros(batch_size, dtype=torch.long),
    )


def random_noise(seed, batch_size=4):
    gen = torch.Generator().manual_seed(seed)
    def randn(*shape):
        return torch.randn(*shape, generator=gen, dtype=DTYPE)
    return UpdateNoise(
        eps_next=randn(batch_size, ACT_DIM),
        eps_pi=randn(batch_size, N_SAMPLES, ACT_DIM),
        unif=torch.rand(batch_size, N_SAMPLES, ACT_DIM, generator=gen, dtype=DTYPE) * 2 - 1,
        eps_actor=randn(batch_size, ACT_DIM),
    )


def finite_difference_check(loss_fn, params, h=1e-6, tol=1e-4):
    """Central-difference oracle: relative error of the full gradient vector."""
    loss = loss_fn()
    autograd = torch.autograd.grad(loss, params, allow_unused=True)
    auto_flat = torch.cat(
        [
            (torch.zeros_like(p) if g is None else g).reshape(-1)
            for p, g in zip(params, autograd)
        ]
    ).numpy()
    fd_parts = []
    with torch.no_grad():
        for p in params:
            flat = p.reshape(-1)
            grads = np.zeros(flat.numel())
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = float(loss_fn())
                flat[i] = orig - h
                down = float(loss_fn())
                flat[i] = orig
                grads[i] = (up - down) / (2 * h)
            fd_parts.append(grads)
    fd_flat = np.concatenate(fd_parts)
    num = np.linalg.norm(auto_flat - fd_flat)
    den = max(np.linalg.norm(auto_flat), np.linalg.norm(fd_flat), 1e-12)
    assert num / den <= tol, f"gradient mismatch: rel err {num / den:.3e}"


def make_critic_loss_fn(nets, batch, noise, algorithm, cql_alpha=1.7):
    # targets and candidate actions are constants of the objective; fix them
    # once so the finite-difference probe sees the same function the
    # optimizer differentiates
    targets = compute_td_targets(nets, batch, noise, gamma=0.95, entropy_coef=0.2)
    ood = sample_ood_actions(nets, batch, noise)
    def fn():
        loss, _ = critic_loss(
            nets, batch, noise, algorithm=algorithm, gamma=0.95,
            cql_alpha=cql_alpha, entropy_coef=0.2, targets=targets, ood_actions=ood,
        )
        return loss
    return fn


class TestGradientOracle:
    @pytest.mark.parametrize("algorithm", list(Algorithm))
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_critic_gradients(self, algorithm, seed):
        nets = small_nets(STATE_SPEC, seed)
        batch = random_batch(STATE_SPEC, seed + 10)
        noise = random_noise(seed + 20)
        params = list(nets.q1.parameters()) + list(nets.q2.parameters())
        finite_difference_check(make_critic_loss_fn(nets, batch, noise, algorithm), params)

    @pytest.mark.parametrize("algorithm", list(Algorithm))
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_actor_gradients(self, algorithm, seed):
        nets = small_nets(STATE_SPEC, seed)
        batch = random_batch(STATE_SPEC, seed + 30)
        noise = random_noise(seed + 40)
        if algorithm == Algorithm.AWAC:
            gen = torch.Generator().manual_seed(seed + 50)
            with torch.no_grad():
                feats = nets.encoder(batch.obs)
                pi_in = nets.policy_input(feats, batch.z)
                baseline, _ = nets.policy.sample(pi_in, noise.eps_pi)
            def fn():
                loss, _ = awac_actor_loss(nets, batch, baseline, beta=0.8, weight_clip=50.0)
                return loss
        else:
            bc_weight = 0.0 if algorithm == Algorithm.SAC else 0.7
            def fn():
                loss, _ = sac_actor_loss(
                    nets, batch, noise, entropy_coef=0.2, bc_weight=bc_weight
                )
                return loss
        finite_difference_check(fn, list(nets.policy.parameters()))

    @pytest.mark.parametrize("seed", [0, 1])
    def test_image_encoder_gradients(self, seed):
        # the critic objective is the only path into the encoder; check it end
        # to end through the convolutional trunk
        nets = small_nets(IMAGE_SPEC, seed)
        batch = random_batch(IMAGE_SPEC, seed + 60)
        noise = random_noise(seed + 70)
        params = list(nets.encoder.parameters())
        finite_difference_check(
            make_critic_loss_fn(nets, batch, noise, Algorithm.CALQL), params
        )


class TestConservativePenalty:
    def test_zero_gradient_when_samples_below_returns(self):
        # all sampled values sit strictly below the observed returns: the clip
        # saturates and the penalty ignores them exactly
        q_samples = torch.full((5, 6), -10.0, dtype=DTYPE, requires_grad=True)
        q_data = torch.zeros(5, dtype=DTYPE, requires_grad=True)
        floor = torch.full((5,), 5.0, dtype=DTYPE)
        penalty = conservative_penalty(q_samples, q_data, floor)
        penalty.backward()
        assert torch.all(q_samples.grad == 0.0)
        assert torch.all(q_data.grad != 0.0)

    def test_nonzero_gradient_without_clip(self):
        q_samples = torch.full((5, 6), -10.0, dtype=DTYPE, requires_grad=True)
        q_data = torch.zeros(5, dtype=DTYPE, requires_grad=True)
        penalty = conservative_penalty(q_samples, q_data, None)
        penalty.backward()
        assert torch.all(q_samples.grad != 0.0)

    def test_partial_saturation(self):
        q_samples = torch.tensor([[1.0, -3.0]], dtype=DTYPE, requires_grad=True)
        floor = torch.tensor([0.0], dtype=DTYPE)
        penalty = conservative_penalty(q_samples, torch.zeros(1, dtype=DTYPE), floor)
        penalty.backward()
        assert q_samples.grad[0, 0] != 0.0
        assert q_samples.grad[0, 1] == 0.0


class TestCriticLossContract:
    def test_alpha_zero_reduces_to_bellman(self):
        nets = small_nets(STATE_SPEC, 3)
        batch = random_batch(STATE_SPEC, 4)
        noise = random_noise(5)
        loss_zero, diag = critic_loss(
            nets, batch, noise, algorithm=Algorithm.CALQL, gamma=0.95,
            cql_alpha=0.0, entropy_coef=0.2,
        )
        loss_sac, _ = critic_loss(
            nets, batch, noise, algorithm=Algorithm.SAC, gamma=0.95,
            cql_alpha=5.0, entropy_coef=0.2,
        )
        assert torch.equal(loss_zero, loss_sac)
        assert float(loss_zero.detach()) == pytest.approx(diag["bellman_loss"])

    def test_cql_equals_calql_with_neg_inf_returns(self):
        nets = small_nets(STATE_SPEC, 6)
        batch = random_batch(STATE_SPEC, 7)
        batch.mc_return = torch.full_like(batch.mc_return, -np.inf)
        noise = random_noise(8)
        calql = critic_loss(
            nets, batch, noise, algorithm=Algorithm.CALQL, gamma=0.95,
            cql_alpha=2.0, entropy_coef=0.2,
        )[0]
        cql = critic_loss(
            nets, batch, noise, algorithm=Algorithm.CQL, gamma=0.95,
            cql_alpha=2.0, entropy_coef=0.2,
        )[0]
        assert torch.equal(calql, cql)

    def test_calql_rejects_missing_returns(self):
        nets = small_nets(STATE_SPEC, 9)
        batch = random_batch(STATE_SPEC, 10)
        batch.mc_return = torch.full_like(batch.mc_return, np.nan)
        with pytest.raises(ValueError, match="mc_return"):
            critic_loss(
                nets, batch, random_noise(11), algorithm=Algorithm.CALQL,
                gamma=0.95, cql_alpha=1.0, entropy_coef=0.2,
            )

    def test_saturated_batch_has_zero_ood_gradient_through_networks(self):
        # batch-level version of the calibration property: raise the floor
        # far above any attainable Q and verify the penalty contributes no
        # gradient via the sampled actions (loss equals bellman + constant
        # logsumexp of the floor)
        nets = small_nets(STATE_SPEC, 12)
        batch = random_batch(STATE_SPEC, 13, mc_offset=1e4)
        noise = random_noise(14)
        loss, diag = critic_loss(
            nets, batch, noise, algorithm=Algorithm.CALQL, gamma=0.95,
            cql_alpha=1.0, entropy_coef=0.2,
        )
        assert diag["clip_fraction"] == 1.0
        grads = torch.autograd.grad(loss, list(nets.q1.parameters()))
        bell_only, _ = critic_loss(
            nets, batch, noise, algorithm=Algorithm.SAC, gamma=0.95,
            cql_alpha=0.0, entropy_coef=0.2,
        )
        # the conservative term reduces to -mean(Q(s,a_data)) once saturated
        q_in = nets.critic_input(nets.encoder(batch.obs), batch.z, batch.action)
        manual = bell_only - 1.0 * (nets.q1(q_in).mean() + nets.q2(q_in).mean())
        manual_grads = torch.autograd.grad(manual, list(nets.q1.parameters()))
        for g1, g2 in zip(grads, manual_grads):
            assert torch.allclose(g1, g2, atol=1e-12)


class TestActorLossContract:
    def test_bc_zero_gives_pure_rl_loss(self):
        nets = small_nets(STATE_SPEC, 15)
        batch = random_batch(STATE_SPEC, 16)
        noise = random_noise(17)
        loss, diag = sac_actor_loss(nets, batch, noise, entropy_coef=0.2, bc_weight=0.0)
        assert float(loss) == pytest.approx(diag["actor_rl_loss"])

    def test_bc_term_minimized_at_demo_actions(self):
        # a policy whose mean reproduces the demo action and whose std is at
        # the floor cannot be improved on the cloning term
        nets = small_nets(STATE_SPEC, 18)
        batch = random_batch(STATE_SPEC, 19)
        x = nets.policy_input(nets.encoder(batch.obs), batch.z)
        lp_self = nets.policy.log_prob(x, torch.tanh(nets.policy.forward(x)[0]))
        lp_other = nets.policy.log_prob(x, batch.action)
        assert float(lp_self.mean()) > float(lp_other.mean())

    def test_awac_weights_follow_exponentiated_advantage(self):
        nets = small_nets(STATE_SPEC, 20)
        batch = random_batch(STATE_SPEC, 21)
        noise = random_noise(22)
        with torch.no_grad():
            feats = nets.encoder(batch.obs)
            pi_in = nets.policy_input(feats, batch.z)
            baseline, _ = nets.policy.sample(pi_in, noise.eps_pi)
            q_data = nets.min_q(nets.critic_input(feats, batch.z, batch.action))
            b, m, _ = baseline.shape
            tiled = torch.cat(
                [
                    feats.unsqueeze(1).expand(b, m, feats.shape[-1]),
                    batch.z.unsqueeze(1).expand(b, m, batch.z.shape[-1]),
                    baseline,
                ],
                dim=-1,
            ).reshape(b * m, -1)
            value = nets.min_q(tiled).reshape(b, m).mean(1)
            expected_w = torch.exp((q_data - value) / 0.8).clamp(max=50.0)
            logp = nets.policy.log_prob(pi_in, batch.action)
            expected = -(expected_w * logp).mean()
        loss, _ = awac_actor_loss(nets, batch, baseline, beta=0.8, weight_clip=50.0)
        assert float(loss) == pytest.approx(float(expected), rel=1e-12)

    def test_awac_weight_clip_binds(self):
        nets = small_nets(STATE_SPEC, 23)
        batch = random_batch(STATE_SPEC, 24)
        noise = random_noise(25)
        with torch.no_grad():
            feats = nets.encoder(batch.obs)
            pi_in = nets.policy_input(feats, batch.z)
            baseline, _ = nets.policy.sample(pi_in, noise.eps_pi)
        _, diag = awac_actor_loss(nets, batch, baseline, beta=1e-6, weight_clip=2.0)
        assert diag["awac_weight_mean"] <= 2.0
