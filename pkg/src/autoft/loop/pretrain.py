"""Offline phase: demonstrations into the buffer, then update steps."""

from __future__ import annotations

import time

import torch

from ..agent.agent import Agent
from ..agent.config import Algorithm
from ..agent.replay import ReplayBuffer
from ..core import DatasetBundle, compute_mc_returns
from .config import LoopConfig
from .logging import MetricsLogger

__all__ = ["load_bundle_into_buffer", "run_pretraining", "run_bc_pretraining"]


def load_bundle_into_buffer(
    agent: Agent, bundle: DatasetBundle, use_prior: bool = True, buffer_seed: int | None = None
) -> ReplayBuffer:
    """Compute returns at the agent's discount and install the offline data."""
    demos = list(bundle.target_forward + bundle.target_backward)
    if use_prior:
        demos = list(bundle.prior) + demos
    if not demos:
        raise ValueError("bundle contains no demonstrations")
    trajs = [compute_mc_returns(t, agent.config.gamma) for t in demos]
    buffer = agent.make_buffer(seed=buffer_seed)
    buffer.load_offline(trajs)
    return buffer


def run_pretraining(
    agent: Agent,
    buffer: ReplayBuffer,
    config: LoopConfig,
    logger: MetricsLogger | None = None,
) -> Agent:
    """``t_offline`` update steps over the offline partition.

    Resolves the cloning weight first when it is in auto mode (not for the
    variants that do not carry a cloning term).
    """
    logger = logger or MetricsLogger(None)
    if buffer.offline_size == 0:
        raise ValueError("offline buffer is empty")
    start = time.time()
    if (
        agent.bc_weight is None
        and agent.config.bc_weight == "auto"
        and agent.config.algorithm in (Algorithm.CALQL, Algorithm.CQL)
    ):
        weight = agent.resolve_bc_weight(buffer)
        logger.log("bc_weight_resolved", weight=weight)
    for t in range(1, config.t_offline + 1):
        diag = agent.update_step(buffer, offline_fraction=1.0)
        if t % config.log_interval == 0 or t == config.t_offline:
            logger.log("offline_update", step=t, **diag)
    logger.log(
        "offline_done", steps=config.t_offline, seconds=round(time.time() - start, 3)
    )
    return agent


def run_bc_pretraining(
    agent: Agent,
    buffer: ReplayBuffer,
    steps: int,
    logger: MetricsLogger | None = None,
) -> Agent:
    """Supervised cloning on all demonstrations (the no-RL baseline arm).

    Maximizes demo log-likelihood through the policy head and, in image mode,
    the encoder as well; critics stay untouched and there is no online phase.
    """
    logger = logger or MetricsLogger(None)
    if buffer.offline_size == 0:
        raise ValueError("offline buffer is empty")
    params = list(agent.nets.policy.parameters()) + list(agent.nets.encoder.parameters())
    opt = torch.optim.Adam(params, lr=agent.config.actor_lr)
    start = time.time()
    for t in range(1, steps + 1):
        sample = buffer.sample(agent.config.batch_size, offline_fraction=1.0)
        batch = agent.to_torch_batch(sample)
        features = agent.nets.encoder(batch.obs)
        pi_in = agent.nets.policy_input(features, batch.z)
        loss = -agent.nets.policy.log_prob(pi_in, batch.action).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        if t % 500 == 0 or t == steps:
            logger.log("bc_update", step=t, nll=float(loss.detach()))
    agent.step_count += steps
    logger.log("bc_done", steps=steps, seconds=round(time.time() - start, 3))
    return agent
