"""The language-conditioned multi-task actor-critic agent."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch

from ..core import Observation, TaskSpec
from .config import AgentConfig, Algorithm, ObsSpec
from .embeddings import TaskEmbeddingProvider, check_distinct
from .losses import (
    TorchBatch,
    awac_actor_loss,
    compute_td_targets,
    critic_loss,
    draw_update_noise,
    measure_actor_terms,
    sac_actor_loss,
    sample_ood_actions,
)
from .networks import AgentNetworks, ObsTensors, build_networks, soft_update
from .replay import ReplayBuffer, SampleBatch

__all__ = ["Agent"]


class Agent:
    """Holds the networks, optimizers and RNG stream for one policy.

    The encoder is an exclusive member of the critic's optimizer parameter
    group and actor losses consume detached features, so only critic updates
    can move it.
    """

    def __init__(
        self,
        config: AgentConfig,
        obs_spec: ObsSpec,
        act_dim: int,
        z_table: np.ndarray,
        task_index: dict[int, int],
        seed: int,
        dtype: torch.dtype = torch.float32,
    ):
        self.config = config
        self.obs_spec = obs_spec
        self.act_dim = act_dim
        self.dtype = dtype
        self.seed = seed
        self.task_index = dict(task_index)
        self.z_table = torch.as_tensor(np.asarray(z_table, dtype=np.float32), dtype=dtype)
        self.generator = torch.Generator()
        self.generator.manual_seed(seed)
        self.nets = build_networks(
            obs_spec,
            act_dim,
            self.z_table.shape[1],
            config.feature_dim,
            config.hidden_sizes,
            self.generator,
            dtype,
            config.image_channels,
        )
        critic_params = (
            list(self.nets.encoder.parameters())
            + list(self.nets.q1.parameters())
            + list(self.nets.q2.parameters())
        )
        self.critic_opt = torch.optim.Adam(critic_params, lr=config.critic_lr)
        self.actor_opt = torch.optim.Adam(self.nets.policy.parameters(), lr=config.actor_lr)
        self.auto_entropy = config.entropy_coefficient == "auto"
        init_alpha = (
            config.init_entropy_coefficient
            if self.auto_entropy
            else float(config.entropy_coefficient)
        )
        self.log_alpha = torch.tensor(math.log(max(init_alpha, 1e-8)), dtype=dtype, requires_grad=True)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=config.entropy_lr)
        self.target_entropy = -float(act_dim)
        self.bc_weight: float | None = (
            None if config.bc_weight == "auto" else float(config.bc_weight)
        )
        self.step_count = 0

    # ------------------------------------------------------------ constructors

    @classmethod
    def create(
        cls,
        config: AgentConfig,
        obs_spec: ObsSpec,
        act_dim: int,
        tasks: Sequence[TaskSpec],
        embedder: TaskEmbeddingProvider,
        seed: int,
        dtype: torch.dtype = torch.float32,
    ) -> "Agent":
        check_distinct(embedder, [t.instruction for t in tasks])
        z_table = np.stack([embedder.vector(t.instruction) for t in tasks])
        task_index = {t.task_id: i for i, t in enumerate(tasks)}
        return cls(config, obs_spec, act_dim, z_table, task_index, seed, dtype)

    def make_buffer(self, seed: int | None = None) -> ReplayBuffer:
        return ReplayBuffer(
            self.obs_spec,
            self.act_dim,
            online_capacity=self.config.online_capacity,
            seed=self.seed + 7919 if seed is None else seed,
        )

    # ---------------------------------------------------------------- encoding

    @property
    def entropy_coef(self) -> float:
        return float(self.log_alpha.detach().exp())

    def task_embedding(self, task_id: int) -> torch.Tensor:
        try:
            row = self.task_index[task_id]
        except KeyError:
            raise ValueError(f"agent was not built for task id {task_id}") from None
        return self.z_table[row]

    def _obs_tensors(self, obs: Observation) -> ObsTensors:
        image = None if obs.image is None else obs.image[None]
        return ObsTensors.from_numpy(obs.proprio[None], image, self.dtype)

    def encode(self, obs: Observation) -> np.ndarray:
        """Deterministic feature for one observation (no gradients)."""
        with torch.no_grad():
            feats = self.nets.encoder(self._obs_tensors(obs))
        return feats[0].numpy()

    def policy_act(self, obs: Observation, task_id: int, stochastic: bool) -> np.ndarray:
        """Select an action in [-1, 1]^d for the given task.

        Deterministic mode returns the squashed mean; stochastic mode draws
        from the agent's reproducible sampling stream.
        """
        z = self.task_embedding(task_id)[None]
        with torch.no_grad():
            feats = self.nets.encoder(self._obs_tensors(obs))
            pi_in = self.nets.policy_input(feats, z)
            if stochastic:
                eps = torch.randn(1, self.act_dim, generator=self.generator, dtype=self.dtype)
                action, _ = self.nets.policy.sample(pi_in, eps)
            else:
                action = self.nets.policy.mean_action(pi_in)
        return action[0].numpy().astype(np.float32)

    def act(self, obs: Observation, task_id: int, stochastic: bool = True) -> np.ndarray:
        return self.policy_act(obs, task_id, stochastic)

    # ---------------------------------------------------------------- training

    def to_torch_batch(self, batch: SampleBatch) -> TorchBatch:
        rows = np.array([self.task_index[t] for t in batch.task_ids], dtype=np.int64)
        return TorchBatch(
            obs=ObsTensors.from_numpy(batch.proprio, batch.image, self.dtype),
            action=torch.as_tensor(batch.action, dtype=self.dtype),
            reward=torch.as_tensor(batch.reward, dtype=self.dtype),
            next_obs=ObsTensors.from_numpy(batch.next_proprio, batch.next_image, self.dtype),
            terminal=torch.as_tensor(batch.terminal, dtype=self.dtype),
            mc_return=torch.as_tensor(batch.mc_return, dtype=self.dtype),
            z=self.z_table[torch.as_tensor(rows)],
            is_demo=torch.as_tensor(batch.is_demo),
            task_ids=torch.as_tensor(batch.task_ids),
        )

    def resolve_bc_weight(self, buffer: ReplayBuffer, n_probe_batches: int = 8, warmup_steps: int = 300) -> float:
        """Fix the cloning weight so RL and cloning terms start at equal scale.

        A throwaway copy of the critic takes ``warmup_steps`` critic-only
        updates first, so the measured RL magnitude reflects the data's reward
        scale rather than the random initialization. The ratio is then held
        fixed for the rest of training.
        """
        cfg = self.config
        probe = Agent(
            cfg,
            self.obs_spec,
            self.act_dim,
            self.z_table.numpy(),
            self.task_index,
            seed=self.seed + 31,
            dtype=self.dtype,
        )
        probe.nets.encoder.load_state_dict(self.nets.encoder.state_dict())
        probe.nets.policy.load_state_dict(self.nets.policy.state_dict())
        probe.nets.q1.load_state_dict(self.nets.q1.state_dict())
        probe.nets.q2.load_state_dict(self.nets.q2.state_dict())
        probe.nets.q1_target.load_state_dict(self.nets.q1_target.state_dict())
        probe.nets.q2_target.load_state_dict(self.nets.q2_target.state_dict())
        for _ in range(warmup_steps):
            sample = buffer.sample(cfg.batch_size, offline_fraction=1.0)
            tb = probe.to_torch_batch(sample)
            noise = draw_update_noise(
                probe.generator, len(tb), probe.act_dim, cfg.n_action_samples, probe.dtype
            )
            loss, _ = critic_loss(
                probe.nets,
                tb,
                noise,
                algorithm=cfg.algorithm if cfg.algorithm != Algorithm.AWAC else Algorithm.SAC,
                gamma=cfg.gamma,
                cql_alpha=cfg.cql_alpha,
                entropy_coef=probe.entropy_coef,
            )
            probe.critic_opt.zero_grad()
            loss.backward()
            probe.critic_opt.step()
            soft_update(probe.nets.q1_target, probe.nets.q1, cfg.target_update_rate)
            soft_update(probe.nets.q2_target, probe.nets.q2, cfg.target_update_rate)
        rl_vals, bc_vals = [], []
        for _ in range(n_probe_batches):
            sample = buffer.sample(cfg.batch_size, offline_fraction=1.0)
            tb = probe.to_torch_batch(sample)
            noise = draw_update_noise(
                probe.generator, len(tb), probe.act_dim, cfg.n_action_samples, probe.dtype
            )
            rl, bc = measure_actor_terms(probe.nets, tb, noise, entropy_coef=probe.entropy_coef)
            rl_vals.append(rl)
            bc_vals.append(bc)
        mean_bc = abs(float(np.mean(bc_vals)))
        if mean_bc < 1e-9:
            raise ValueError("cloning loss is zero over probe batches; cannot calibrate weight")
        weight = abs(float(np.mean(rl_vals))) / mean_bc
        self.bc_weight = weight
        return weight

    def _actor_bc_weight(self) -> float:
        if self.config.algorithm == Algorithm.SAC:
            return 0.0
        if self.bc_weight is None:
            raise ValueError("bc_weight is 'auto' but has not been resolved yet")
        return self.bc_weight

    def update_step(self, buffer: ReplayBuffer, offline_fraction: float | None = None) -> dict:
        """One critic step, one actor step, one entropy step, one target update."""
        cfg = self.config
        frac = cfg.offline_fraction if offline_fraction is None else offline_fraction
        sample = buffer.sample(cfg.batch_size, frac)
        batch = self.to_torch_batch(sample)
        noise = draw_update_noise(
            self.generator, len(batch), self.act_dim, cfg.n_action_samples, self.dtype
        )
        alpha = self.entropy_coef
        targets = compute_td_targets(self.nets, batch, noise, gamma=cfg.gamma, entropy_coef=alpha)
        ood = None
        if cfg.algorithm in (Algorithm.CALQL, Algorithm.CQL) and cfg.cql_alpha > 0:
            ood = sample_ood_actions(self.nets, batch, noise)
        c_loss, c_diag = critic_loss(
            self.nets,
            batch,
            noise,
            algorithm=cfg.algorithm,
            gamma=cfg.gamma,
            cql_alpha=cfg.cql_alpha,
            entropy_coef=alpha,
            targets=targets,
            ood_actions=ood,
        )
        self.critic_opt.zero_grad()
        c_loss.backward()
        self.critic_opt.step()

        if cfg.algorithm == Algorithm.AWAC:
            with torch.no_grad():
                feats = self.nets.encoder(batch.obs)
                pi_in = self.nets.policy_input(feats, batch.z)
                baseline, _ = self.nets.policy.sample(pi_in, noise.eps_pi)
            a_loss, a_diag = awac_actor_loss(
                self.nets,
                batch,
                baseline,
                beta=cfg.awac_beta,
                weight_clip=cfg.awac_weight_clip,
            )
        else:
            a_loss, a_diag = sac_actor_loss(
                self.nets,
                batch,
                noise,
                entropy_coef=alpha,
                bc_weight=self._actor_bc_weight(),
            )
        self.actor_opt.zero_grad()
        a_loss.backward()
        self.actor_opt.step()

        if self.auto_entropy and cfg.algorithm != Algorithm.AWAC:
            logp = a_diag.pop("_logp")
            alpha_loss = -(self.log_alpha * (logp + self.target_entropy)).mean()
            self.alpha_opt.zero_grad()
            alpha_loss.backward()
            self.alpha_opt.step()
        else:
            a_diag.pop("_logp", None)

        self.soft_update_targets()
        self.step_count += 1
        diag = {
            "critic_loss": float(c_loss.detach()),
            "actor_loss": float(a_loss.detach()),
            "entropy_coef": self.entropy_coef,
            "offline_share": float(np.mean(sample.is_demo)),
            **c_diag,
            **a_diag,
        }
        return diag

    def soft_update_targets(self) -> None:
        tau = self.config.target_update_rate
        soft_update(self.nets.q1_target, self.nets.q1, tau)
        soft_update(self.nets.q2_target, self.nets.q2, tau)

    # ------------------------------------------------------------- inspection

    def parameter_vector(self) -> np.ndarray:
        """Flat copy of all live parameters (diagnostics and tests)."""
        with torch.no_grad():
            parts = [p.reshape(-1).clone() for p in self._named_parameters().values()]
        return torch.cat(parts).numpy()

    def _named_parameters(self) -> dict[str, torch.Tensor]:
        out: dict[str, torch.Tensor] = {}
        for prefix, module in (
            ("encoder", self.nets.encoder),
            ("policy", self.nets.policy),
            ("q1", self.nets.q1),
            ("q2", self.nets.q2),
            ("q1_target", self.nets.q1_target),
            ("q2_target", self.nets.q2_target),
        ):
            for name, param in module.named_parameters():
                out[f"{prefix}.{name}"] = param
        out["log_alpha"] = self.log_alpha
        return out
