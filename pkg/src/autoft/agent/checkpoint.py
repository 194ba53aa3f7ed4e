"""Agent checkpoints: format ``agent-v1``.

A checkpoint is one JSON object holding the config, the task-embedding table,
every named parameter tensor (little-endian float32 for float32 agents), full
optimizer state and the sampling-generator state, so a loaded agent continues
training bit-for-bit identically.
"""

from __future__ import annotations

import json
import os

import numpy as np
import torch

from ..serialization import FormatError, decode_array, encode_array
from .agent import Agent
from .config import AgentConfig, ObsSpec

__all__ = ["AGENT_FORMAT", "save_agent", "load_agent", "agent_checkpoint_blob", "agent_from_blob"]

AGENT_FORMAT = "agent-v1"

_DTYPE_CODE = {torch.float32: "f4", torch.float64: "f8"}


def _encode_tensor(t: torch.Tensor) -> dict:
    arr = t.detach().cpu().numpy()
    if arr.dtype == np.float32:
        return encode_array(arr, "f4")
    if arr.dtype == np.float64:
        return encode_array(arr, "f8")
    if arr.dtype == np.int64:
        return encode_array(arr, "i8")
    if arr.dtype == np.uint8:
        return encode_array(arr, "u1")
    raise ValueError(f"unsupported tensor dtype {arr.dtype}")


def _module_blob(module: torch.nn.Module) -> dict:
    return {name: _encode_tensor(t) for name, t in module.state_dict().items()}


def _load_module(module: torch.nn.Module, blob: dict, dtype: torch.dtype) -> None:
    state = {name: torch.as_tensor(decode_array(spec)).to(dtype) for name, spec in blob.items()}
    module.load_state_dict(state)


def _optimizer_blob(opt: torch.optim.Optimizer) -> dict:
    sd = opt.state_dict()
    state = {}
    for idx, entry in sd["state"].items():
        state[str(idx)] = {
            k: (_encode_tensor(v) if isinstance(v, torch.Tensor) else v)
            for k, v in entry.items()
        }
    return {"state": state}


def _load_optimizer(opt: torch.optim.Optimizer, blob: dict, dtype: torch.dtype) -> None:
    sd = opt.state_dict()
    state = {}
    for idx, entry in blob["state"].items():
        rebuilt = {}
        for k, v in entry.items():
            if isinstance(v, dict) and "data" in v:
                arr = decode_array(v)
                tensor = torch.as_tensor(arr)
                if tensor.is_floating_point():
                    tensor = tensor.to(dtype)
                rebuilt[k] = tensor
            else:
                rebuilt[k] = v
        state[int(idx)] = rebuilt
    sd["state"] = state
    opt.load_state_dict(sd)


def agent_checkpoint_blob(agent: Agent) -> dict:
    """Assemble the checkpoint dictionary for ``agent``."""
    cfg = agent.config
    return {
        "format_version": AGENT_FORMAT,
        "algorithm": cfg.algorithm.value,
        "step": agent.step_count,
        "config": {
            "gamma": cfg.gamma,
            "cql_alpha": cfg.cql_alpha,
            "n_action_samples": cfg.n_action_samples,
            "target_update_rate": cfg.target_update_rate,
            "entropy_coefficient": cfg.entropy_coefficient,
            "init_entropy_coefficient": cfg.init_entropy_coefficient,
            "bc_weight": cfg.bc_weight,
            "offline_fraction": cfg.offline_fraction,
            "actor_lr": cfg.actor_lr,
            "critic_lr": cfg.critic_lr,
            "entropy_lr": cfg.entropy_lr,
            "embedding_dim": cfg.embedding_dim,
            "feature_dim": cfg.feature_dim,
            "image_channels": list(cfg.image_channels),
            "hidden_sizes": list(cfg.hidden_sizes),
            "batch_size": cfg.batch_size,
            "online_capacity": cfg.online_capacity,
            "awac_beta": cfg.awac_beta,
            "awac_weight_clip": cfg.awac_weight_clip,
            "algorithm": cfg.algorithm.value,
        },
        "obs_spec": {
            "mode": agent.obs_spec.mode,
            "image_shape": list(agent.obs_spec.image_shape) if agent.obs_spec.image_shape else None,
            "proprio_dim": agent.obs_spec.proprio_dim,
        },
        "act_dim": agent.act_dim,
        "seed": agent.seed,
        "resolved_bc_weight": agent.bc_weight,
        "task_index": sorted((int(k), int(v)) for k, v in agent.task_index.items()),
        "z_table": encode_array(agent.z_table.numpy(), "f4"),
        "log_alpha": _encode_tensor(agent.log_alpha),
        "modules": {
            "encoder": _module_blob(agent.nets.encoder),
            "policy": _module_blob(agent.nets.policy),
            "q1": _module_blob(agent.nets.q1),
            "q2": _module_blob(agent.nets.q2),
            "q1_target": _module_blob(agent.nets.q1_target),
            "q2_target": _module_blob(agent.nets.q2_target),
        },
        "optim": {
            "critic": _optimizer_blob(agent.critic_opt),
            "actor": _optimizer_blob(agent.actor_opt),
            "alpha": _optimizer_blob(agent.alpha_opt),
        },
        "rng": {"generator": _encode_tensor(agent.generator.get_state())},
    }


def agent_from_blob(blob: dict) -> Agent:
    version = blob.get("format_version")
    if version != AGENT_FORMAT:
        raise FormatError(
            f"agent checkpoint format mismatch: file declares {version!r}, "
            f"reader supports {AGENT_FORMAT!r}"
        )
    cfg_dict = dict(blob["config"])
    cfg_dict["hidden_sizes"] = tuple(cfg_dict["hidden_sizes"])
    cfg_dict["image_channels"] = tuple(cfg_dict["image_channels"])
    config = AgentConfig(**cfg_dict)
    spec_dict = blob["obs_spec"]
    obs_spec = ObsSpec(
        mode=spec_dict["mode"],
        image_shape=tuple(spec_dict["image_shape"]) if spec_dict["image_shape"] else None,
        proprio_dim=spec_dict["proprio_dim"],
    )
    z_table = decode_array(blob["z_table"])
    task_index = {int(k): int(v) for k, v in blob["task_index"]}
    agent = Agent(config, obs_spec, blob["act_dim"], z_table, task_index, blob["seed"])
    dtype = agent.dtype
    _load_module(agent.nets.encoder, blob["modules"]["encoder"], dtype)
    _load_module(agent.nets.policy, blob["modules"]["policy"], dtype)
    _load_module(agent.nets.q1, blob["modules"]["q1"], dtype)
    _load_module(agent.nets.q2, blob["modules"]["q2"], dtype)
    _load_module(agent.nets.q1_target, blob["modules"]["q1_target"], dtype)
    _load_module(agent.nets.q2_target, blob["modules"]["q2_target"], dtype)
    with torch.no_grad():
        agent.log_alpha.copy_(torch.as_tensor(decode_array(blob["log_alpha"])))
    _load_optimizer(agent.critic_opt, blob["optim"]["critic"], dtype)
    _load_optimizer(agent.actor_opt, blob["optim"]["actor"], dtype)
    _load_optimizer(agent.alpha_opt, blob["optim"]["alpha"], dtype)
    gen_state = decode_array(blob["rng"]["generator"])
    agent.generator.set_state(torch.as_tensor(gen_state, dtype=torch.uint8))
    agent.step_count = int(blob["step"])
    agent.bc_weight = blob["resolved_bc_weight"]
    return agent


def save_agent(agent: Agent, path: str | os.PathLike) -> None:
    blob = agent_checkpoint_blob(agent)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh, sort_keys=True, separators=(",", ":"))


def load_agent(path: str | os.PathLike) -> Agent:
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    return agent_from_blob(blob)
