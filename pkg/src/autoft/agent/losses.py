"""Actor-critic objectives: calibrated-conservative, conservative, AWR, SAC.

Every loss is a pure function of (networks, batch, pre-drawn noise, scalars),
so analytic gradients can be validated against finite differences and the
calibration clip can be probed in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .config import Algorithm
from .networks import AgentNetworks, ObsTensors

__all__ = [
    "TorchBatch",
    "UpdateNoise",
    "conservative_penalty",
    "critic_loss",
    "sac_actor_loss",
    "awac_actor_loss",
    "measure_actor_terms",
]


@dataclass
class TorchBatch:
    """One training minibatch with task embeddings attached."""

    obs: ObsTensors
    action: torch.Tensor  # [B, d]
    reward: torch.Tensor  # [B]
    next_obs: ObsTensors
    terminal: torch.Tensor  # [B] float, 1.0 stops bootstrapping
    mc_return: torch.Tensor  # [B]
    z: torch.Tensor  # [B, E]
    is_demo: torch.Tensor  # [B] bool
    task_ids: torch.Tensor  # [B] long

    def __len__(self) -> int:
        return self.action.shape[0]


@dataclass
class UpdateNoise:
    """Pre-drawn randomness for one update step.

    ``eps_next`` reparameterizes the bootstrap action, ``eps_pi``/``unif``
    drive the conservative penalty's policy/uniform action samples,
    ``eps_actor`` the actor's own sample, and ``baseline_actions`` (AWR only)
    are policy actions sampled outside the loss so the advantage baseline is
    a constant.
    """

    eps_next: torch.Tensor  # [B, d]
    eps_pi: torch.Tensor  # [B, n, d]
    unif: torch.Tensor  # [B, n, d] in [-1, 1]
    eps_actor: torch.Tensor  # [B, d]
    baseline_actions: torch.Tensor | None = None  # [B, n, d]


def draw_update_noise(
    generator: torch.Generator,
    batch_size: int,
    act_dim: int,
    n_action_samples: int,
    dtype: torch.dtype,
) -> UpdateNoise:
    def randn(*shape):
        return torch.randn(*shape, generator=generator, dtype=dtype)

    return UpdateNoise(
        eps_next=randn(batch_size, act_dim),
        eps_pi=randn(batch_size, n_action_samples, act_dim),
        unif=torch.rand(
            batch_size, n_action_samples, act_dim, generator=generator, dtype=dtype
        )
        * 2.0
        - 1.0,
        eps_actor=randn(batch_size, act_dim),
    )


def conservative_penalty(
    q_samples: torch.Tensor, q_data: torch.Tensor, mc_floor: torch.Tensor | None
) -> torch.Tensor:
    """Soft-maximum of sampled action values minus the dataset action value.

    With ``mc_floor`` given, each sampled value is clipped from below at the
    state's observed Monte-Carlo return before the log-sum-exp, so values
    already at or under the observed return receive zero penalty gradient.
    """
    if mc_floor is not None:
        q_samples = torch.maximum(q_samples, mc_floor.unsqueeze(-1))
    return torch.logsumexp(q_samples, dim=-1).mean() - q_data.mean()


def compute_td_targets(
    nets: AgentNetworks,
    batch: TorchBatch,
    noise: UpdateNoise,
    *,
    gamma: float,
    entropy_coef: float,
) -> torch.Tensor:
    """Semi-gradient TD targets: r + gamma * (1-terminal) * soft target value.

    Computed without gradients; the critic objective treats these as data.
    """
    with torch.no_grad():
        next_features = nets.encoder(batch.next_obs)
        next_in = nets.policy_input(next_features, batch.z)
        next_action, next_logp = nets.policy.sample(next_in, noise.eps_next)
        target_q = nets.min_q_target(nets.critic_input(next_features, batch.z, next_action))
        return batch.reward + gamma * (1.0 - batch.terminal) * (
            target_q - entropy_coef * next_logp
        )


def sample_ood_actions(
    nets: AgentNetworks, batch: TorchBatch, noise: UpdateNoise
) -> torch.Tensor:
    """Policy and uniform action samples for the conservative penalty.

    Sampled without gradients: the penalty scores these as fixed candidate
    actions, it does not differentiate through their generation.
    """
    with torch.no_grad():
        features = nets.encoder(batch.obs)
        pi_in = nets.policy_input(features, batch.z)
        pi_actions, _ = nets.policy.sample(pi_in, noise.eps_pi)
        return torch.cat([pi_actions, noise.unif], dim=1)  # [B, 2n, d]


def critic_loss(
    nets: AgentNetworks,
    batch: TorchBatch,
    noise: UpdateNoise,
    *,
    algorithm: Algorithm,
    gamma: float,
    cql_alpha: float,
    entropy_coef: float,
    targets: torch.Tensor | None = None,
    ood_actions: torch.Tensor | None = None,
) -> tuple[torch.Tensor, dict]:
    """Twin-critic objective for the selected algorithm.

    Bellman term: MSE against r + gamma * (1-terminal) * [min twin target at a
    policy next-action, minus the entropy bonus]. Conservative algorithms add
    ``cql_alpha`` times the sampled-action penalty; the calibrated variant
    clips sampled values at the batch Monte-Carlo returns first. ``targets``
    and ``ood_actions`` may be precomputed (they are constants of the
    objective); when omitted they are derived here from ``noise``.
    """
    if algorithm == Algorithm.CALQL and bool(torch.isnan(batch.mc_return).any()):
        raise ValueError("calibrated critic update requires mc_return on every batch element")
    if targets is None:
        targets = compute_td_targets(nets, batch, noise, gamma=gamma, entropy_coef=entropy_coef)
    features = nets.encoder(batch.obs)
    q_in = nets.critic_input(features, batch.z, batch.action)
    q1, q2 = nets.q1(q_in), nets.q2(q_in)
    bellman = ((q1 - targets) ** 2).mean() + ((q2 - targets) ** 2).mean()
    diagnostics = {
        "bellman_loss": float(bellman.detach()),
        "q1_mean": float(q1.mean().detach()),
        "q2_mean": float(q2.mean().detach()),
        "target_mean": float(targets.mean().detach()),
        "conservative_loss": 0.0,
        "clip_fraction": 0.0,
    }
    loss = bellman
    if algorithm in (Algorithm.CALQL, Algorithm.CQL) and cql_alpha > 0.0:
        if ood_actions is None:
            ood_actions = sample_ood_actions(nets, batch, noise)
        b, m, _ = ood_actions.shape
        tiled_feat = features.unsqueeze(1).expand(b, m, features.shape[-1])
        tiled_z = batch.z.unsqueeze(1).expand(b, m, batch.z.shape[-1])
        ood_in = torch.cat([tiled_feat, tiled_z, ood_actions], dim=-1).reshape(b * m, -1)
        q1_ood = nets.q1(ood_in).reshape(b, m)
        q2_ood = nets.q2(ood_in).reshape(b, m)
        floor = batch.mc_return if algorithm == Algorithm.CALQL else None
        penalty1 = conservative_penalty(q1_ood, q1, floor)
        penalty2 = conservative_penalty(q2_ood, q2, floor)
        loss = bellman + cql_alpha * (penalty1 + penalty2)
        diagnostics["conservative_loss"] = float((penalty1 + penalty2).detach())
        if floor is not None:
            below = (torch.cat([q1_ood, q2_ood], dim=1) < floor.unsqueeze(-1)).float()
            diagnostics["clip_fraction"] = float(below.mean())
    return loss, diagnostics


def sac_actor_loss(
    nets: AgentNetworks,
    batch: TorchBatch,
    noise: UpdateNoise,
    *,
    entropy_coef: float,
    bc_weight: float,
) -> tuple[torch.Tensor, dict]:
    """Entropy-regularized value maximization plus demo log-likelihood.

    The cloning term runs only on demonstration-sourced samples; features are
    taken as constants so the encoder is trained by the critic alone.
    """
    with torch.no_grad():
        features = nets.encoder(batch.obs)
    pi_in = nets.policy_input(features, batch.z)
    pi_action, logp = nets.policy.sample(pi_in, noise.eps_actor)
    q_pi = nets.min_q(nets.critic_input(features, batch.z, pi_action))
    rl_term = (entropy_coef * logp - q_pi).mean()
    demo = batch.is_demo
    if bool(demo.any()):
        bc_term = -nets.policy.log_prob(pi_in[demo], batch.action[demo]).mean()
    else:
        bc_term = torch.zeros((), dtype=rl_term.dtype)
    loss = rl_term + bc_weight * bc_term
    diagnostics = {
        "actor_rl_loss": float(rl_term.detach()),
        "actor_bc_loss": float(bc_term.detach()),
        "policy_entropy": float(-logp.mean().detach()),
        "q_pi_mean": float(q_pi.mean().detach()),
        "_logp": logp.detach(),
    }
    return loss, diagnostics


def awac_actor_loss(
    nets: AgentNetworks,
    batch: TorchBatch,
    baseline_actions: torch.Tensor,
    *,
    beta: float,
    weight_clip: float,
) -> tuple[torch.Tensor, dict]:
    """Advantage-weighted regression onto the batch actions.

    The advantage baseline averages the twin-min value over the pre-sampled
    ``baseline_actions``, all treated as constants.
    """
    with torch.no_grad():
        features = nets.encoder(batch.obs)
        q_data = nets.min_q(nets.critic_input(features, batch.z, batch.action))
        b, m, _ = baseline_actions.shape
        tiled_feat = features.unsqueeze(1).expand(b, m, features.shape[-1])
        tiled_z = batch.z.unsqueeze(1).expand(b, m, batch.z.shape[-1])
        v_in = torch.cat([tiled_feat, tiled_z, baseline_actions], dim=-1).reshape(b * m, -1)
        value = nets.min_q(v_in).reshape(b, m).mean(dim=1)
        advantage = q_data - value
        weight = torch.exp(advantage / beta).clamp(max=weight_clip)
    pi_in = nets.policy_input(features, batch.z)
    logp = nets.policy.log_prob(pi_in, batch.action)
    loss = -(weight * logp).mean()
    diagnostics = {
        "actor_rl_loss": float(loss.detach()),
        "actor_bc_loss": 0.0,
        "awac_weight_mean": float(weight.mean()),
        "advantage_mean": float(advantage.mean()),
        "_logp": logp.detach(),
    }
    return loss, diagnostics


def measure_actor_terms(
    nets: AgentNetworks,
    batch: TorchBatch,
    noise: UpdateNoise,
    *,
    entropy_coef: float,
) -> tuple[float, float]:
    """RL and cloning magnitudes used to calibrate the cloning weight."""
    with torch.no_grad():
        features = nets.encoder(batch.obs)
        pi_in = nets.policy_input(features, batch.z)
        pi_action, logp = nets.policy.sample(pi_in, noise.eps_actor)
        q_pi = nets.min_q(nets.critic_input(features, batch.z, pi_action))
        rl_term = float((entropy_coef * logp - q_pi).mean())
        demo = batch.is_demo
        if not bool(demo.any()):
            raise ValueError("cloning-weight probe batches must contain demonstration samples")
        bc_term = float(-nets.policy.log_prob(pi_in[demo], batch.action[demo]).mean())
    return rl_term, bc_term
