"""Reset-free online fine-tuning.

The agent alternates between the forward and backward task: an episode ends
when the reward source declares success (terminal, switch task) or when the
switch horizon expires (timeout, switch task). A full environment reset
happens only on the sparse schedule or on an interrupt, and both force the
forward task. Finished episodes get Monte-Carlo returns and enter the replay
ring; every environment step triggers exactly ``utd_ratio`` gradient steps.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, replace

import numpy as np

from ..agent.agent import Agent
from ..agent.checkpoint import agent_checkpoint_blob, agent_from_blob
from ..agent.replay import ReplayBuffer
from ..core import Observation, Trajectory, Transition, compute_mc_returns
from ..rewards.client import RewardUnavailableError
from ..serialization import FormatError, decode_array, encode_array
from ..sim.env import TabletopEnv
from .config import LoopConfig, LoopStats, ResetEvent, SwitchEvent
from .evaluate import evaluate_pair
from .logging import MetricsLogger

__all__ = [
    "AgentPool",
    "run_online",
    "save_loop_checkpoint",
    "load_loop_checkpoint",
    "RewardBudgetExceeded",
]

LOOP_FORMAT = "loop-v1"


class RewardBudgetExceeded(RuntimeError):
    """Too many reward-service failures; a resumable checkpoint was written."""


class AgentPool:
    """Task → (agent, buffer) routing; one shared pair in the standard arm."""

    def __init__(self, assignments: dict[int, tuple[Agent, ReplayBuffer]]):
        if not assignments:
            raise ValueError("agent pool needs at least one assignment")
        self._assignments = dict(assignments)

    @classmethod
    def single(cls, agent: Agent, buffer: ReplayBuffer, task_ids) -> "AgentPool":
        return cls({tid: (agent, buffer) for tid in task_ids})

    @classmethod
    def dual(
        cls,
        forward_ids,
        forward: tuple[Agent, ReplayBuffer],
        backward_ids,
        backward: tuple[Agent, ReplayBuffer],
    ) -> "AgentPool":
        out = {tid: forward for tid in forward_ids}
        out.update({tid: backward for tid in backward_ids})
        return cls(out)

    def pair(self, task_id: int) -> tuple[Agent, ReplayBuffer]:
        try:
            return self._assignments[task_id]
        except KeyError:
            raise ValueError(f"pool has no agent for task {task_id}") from None

    def act(self, obs: Observation, task_id: int, stochastic: bool) -> np.ndarray:
        agent, _ = self.pair(task_id)
        return agent.act(obs, task_id, stochastic)

    def update(self, task_id: int) -> dict:
        agent, buffer = self.pair(task_id)
        return agent.update_step(buffer)

    def insert_episode(self, task_id: int, transitions) -> None:
        agent, buffer = self.pair(task_id)
        traj = Trajectory(
            transitions=tuple(transitions),
            task_id=task_id,
            success=transitions[-1].terminal,
        )
        traj = compute_mc_returns(traj, agent.config.gamma)
        buffer.add_online_episode(traj.transitions)

    def members(self) -> list[tuple[str, Agent, ReplayBuffer]]:
        """Unique (key, agent, buffer) triples in deterministic order."""
        seen: dict[int, str] = {}
        out = []
        for task_id in sorted(self._assignments):
            agent, buffer = self._assignments[task_id]
            if id(agent) not in seen:
                key = f"agent{len(out)}"
                seen[id(agent)] = key
                out.append((key, agent, buffer))
        return out

    def assignment_keys(self) -> dict[int, str]:
        key_by_obj = {id(agent): key for key, agent, _ in self.members()}
        return {tid: key_by_obj[id(agent)] for tid, (agent, _) in self._assignments.items()}


def _encode_buffer_state(payload: dict) -> dict:
    online = payload["online"]
    encoded = {"rng_state": payload["rng_state"], "online": {}}
    for key, value in online.items():
        if isinstance(value, np.ndarray):
            dtype = "i8" if value.dtype == np.int64 else "f4"
            encoded["online"][key] = encode_array(value, dtype)
        else:
            encoded["online"][key] = value
    return encoded


def _decode_buffer_state(payload: dict) -> dict:
    online = {}
    for key, value in payload["online"].items():
        online[key] = decode_array(value) if isinstance(value, dict) and "data" in value else value
    return {"rng_state": payload["rng_state"], "online": online}


def _encode_pending(pending: list[Transition]) -> list[dict]:
    out = []
    for tr in pending:
        rec = {
            "proprio": encode_array(tr.obs.proprio),
            "next_proprio": encode_array(tr.next_obs.proprio),
            "action": encode_array(tr.action),
            "reward": tr.reward,
            "task_id": tr.task_id,
        }
        if tr.obs.image is not None:
            rec["image"] = encode_array(tr.obs.image)
            rec["next_image"] = encode_array(tr.next_obs.image)
        out.append(rec)
    return out


def _decode_pending(records: list[dict]) -> list[Transition]:
    out = []
    for rec in records:
        image = decode_array(rec["image"]) if "image" in rec else None
        next_image = decode_array(rec["next_image"]) if "next_image" in rec else None
        out.append(
            Transition(
                obs=Observation(image=image, proprio=decode_array(rec["proprio"])),
                action=decode_array(rec["action"]),
                next_obs=Observation(image=next_image, proprio=decode_array(rec["next_proprio"])),
                reward=rec["reward"],
                terminal=False,
                timeout=False,
                task_id=rec["task_id"],
            )
        )
    return out


def save_loop_checkpoint(path: str | os.PathLike, blob: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh, sort_keys=True, separators=(",", ":"))


def load_loop_checkpoint(path: str | os.PathLike) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    version = blob.get("format_version")
    if version != LOOP_FORMAT:
        raise FormatError(
            f"loop checkpoint format mismatch: file declares {version!r}, "
            f"reader supports {LOOP_FORMAT!r}"
        )
    return blob


def _finalize(pending: list[Transition], cause: str) -> list[Transition]:
    """Stamp the episode-ending flags onto the last pending transition."""
    last = pending[-1]
    if cause == "success":
        pending[-1] = replace(last, terminal=True, timeout=False)
    else:
        pending[-1] = replace(last, terminal=False, timeout=True)
    return pending


def run_online(
    pool: AgentPool,
    env: TabletopEnv,
    reward_source,
    config: LoopConfig,
    logger: MetricsLogger | None = None,
    eval_env: TabletopEnv | None = None,
    interrupt_callback=None,
    checkpoint_path: str | os.PathLike | None = None,
    resume_from: dict | None = None,
    curve_hook=None,
) -> tuple[AgentPool, LoopStats]:
    """Algorithm: act, step, label, insert, update; switch/reset as scheduled.

    ``interrupt_callback(step, rng) -> bool`` may force a reset at any step
    (defaults to a Bernoulli draw at ``config.interrupt_prob`` when that is
    positive). On reward-source unavailability the step is labeled 0 and
    counted; exceeding ``config.unavailable_budget`` aborts with a resumable
    checkpoint at ``checkpoint_path``.
    """
    logger = logger or MetricsLogger(None)
    catalog = env.catalog
    forward_id = catalog.target_forward_id
    start_time = time.time()

    if resume_from is not None:
        blob = resume_from
        if blob["config"] != asdict(config):
            raise ValueError("resume checkpoint was written under a different loop config")
        stats = LoopStats.from_dict(blob["stats"])
        t_start = blob["t"]
        active_id = blob["active_task"]
        episode_step = blob["episode_step"]
        pending = _decode_pending(blob["pending"])
        env.from_state_dict(blob["env_state"])
        reset_rng = np.random.default_rng(0)
        reset_rng.bit_generator.state = blob["reset_rng"]
        interrupt_rng = np.random.default_rng(0)
        interrupt_rng.bit_generator.state = blob["interrupt_rng"]
        if blob.get("reward_state") is not None and hasattr(reward_source, "vice"):
            reward_source.vice.load_state_dict(blob["reward_state"])
        obs = env.observe()
    else:
        stats = LoopStats()
        t_start = 0
        reset_rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(77,)))
        interrupt_rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(78,)))
        obs = env.reset(int(reset_rng.integers(2**31)), forward_id)
        active_id = forward_id
        episode_step = 0
        pending = []

    def write_checkpoint(t: int) -> None:
        if checkpoint_path is None:
            return
        agents = {}
        buffers = {}
        for key, agent, buffer in pool.members():
            agents[key] = agent_checkpoint_blob(agent)
            buffers[key] = _encode_buffer_state(buffer.state_dict())
        reward_state = None
        if hasattr(reward_source, "vice"):
            reward_state = reward_source.vice.state_dict()
        blob = {
            "format_version": LOOP_FORMAT,
            "config": asdict(config),
            "t": t,
            "active_task": active_id,
            "episode_step": episode_step,
            "pending": _encode_pending(pending),
            "env_state": env.to_state_dict(),
            "reset_rng": reset_rng.bit_generator.state,
            "interrupt_rng": interrupt_rng.bit_generator.state,
            "stats": stats.to_dict(),
            "agents": agents,
            "buffers": buffers,
            "assignment": {str(k): v for k, v in pool.assignment_keys().items()},
            "reward_state": reward_state,
        }
        save_loop_checkpoint(checkpoint_path, blob)

    def run_eval(t: int) -> None:
        if eval_env is None or config.eval_interval <= 0 or config.eval_trials <= 0:
            return
        if t % config.eval_interval != 0:
            return
        results = evaluate_pair(
            pool, eval_env, config.eval_trials, seed=config.seed * 1_000_003 + t,
            horizon=config.switch_horizon,
        )
        record = {
            "step": t,
            "forward_rate": results["forward"].success_rate,
            "backward_rate": results["backward"].success_rate,
        }
        logger.log("eval", **record)
        if curve_hook is not None:
            curve_hook(t, results)

    for t in range(t_start + 1, config.t_online + 1):
        active = catalog.spec(active_id)
        action = pool.act(obs, active_id, stochastic=True)
        next_obs, _ = env.step(action)
        stats.env_steps += 1
        stats.reward_queries += 1
        abort_after_step = False
        try:
            reward_value, success = reward_source.label(next_obs, active)
        except RewardUnavailableError:
            # the step proceeds with label 0; abort cleanly once it finishes
            reward_value, success = 0.0, False
            stats.reward_unavailable += 1
            logger.log("reward_unavailable", step=t, count=stats.reward_unavailable)
            abort_after_step = stats.reward_unavailable > config.unavailable_budget
        reward_source.observe_transition(next_obs, active)
        oracle_now = env.oracle_success(active)
        agree = stats.model_oracle_agreement
        if success and oracle_now:
            agree["tp"] += 1
        elif success and not oracle_now:
            agree["fp"] += 1
        elif not success and oracle_now:
            agree["fn"] += 1
        else:
            agree["tn"] += 1
        pending.append(
            Transition(
                obs=obs,
                action=np.clip(action, -1.0, 1.0),
                next_obs=next_obs,
                reward=reward_value,
                terminal=False,
                timeout=False,
                task_id=active_id,
            )
        )
        episode_step += 1

        for _ in range(config.utd_ratio):
            diag = pool.update(active_id)
            stats.gradient_steps += 1
        if t % config.log_interval == 0:
            logger.log("online_update", step=t, task=active_id, **diag)

        # episode boundaries: success and horizon switch to the paired task
        ended = None
        if success:
            ended = "success"
        elif episode_step >= config.switch_horizon:
            ended = "horizon"
        if ended is not None:
            pool.insert_episode(active_id, _finalize(pending, ended))
            stats.episodes.append((active_id, ended))
            if ended == "success":
                stats.model_success_counts[active_id] = (
                    stats.model_success_counts.get(active_id, 0) + 1
                )
                if oracle_now:
                    stats.oracle_success_counts[active_id] = (
                        stats.oracle_success_counts.get(active_id, 0) + 1
                    )
            new_id = catalog.paired(active_id)
            stats.switches.append(
                SwitchEvent(step=t, cause=ended, from_task=active_id, to_task=new_id)
            )
            logger.log("switch", step=t, cause=ended, from_task=active_id, to_task=new_id)
            active_id = new_id
            pending = []
            episode_step = 0
            env.begin_episode()

        # sparse scheduled resets and interrupts force the forward task
        if interrupt_callback is not None:
            interrupted = bool(interrupt_callback(t, interrupt_rng))
        elif config.interrupt_prob > 0:
            interrupted = bool(interrupt_rng.random() < config.interrupt_prob)
        else:
            interrupted = False
        scheduled = t % config.reset_interval == 0
        if interrupted or scheduled:
            if pending:
                pool.insert_episode(active_id, _finalize(pending, "reset"))
                stats.episodes.append((active_id, "interrupt" if interrupted else "reset"))
                pending = []
            cause = "interrupt" if interrupted else "scheduled"
            if interrupted:
                stats.interrupt_count += 1
            if scheduled and not interrupted:
                stats.scheduled_reset_count += 1
            stats.resets.append(ResetEvent(step=t, cause=cause))
            logger.log("reset", step=t, cause=cause)
            obs = env.reset(int(reset_rng.integers(2**31)), forward_id)
            active_id = forward_id
            episode_step = 0
        else:
            obs = next_obs

        reward_source.periodic_update(t)
        run_eval(t)
        if config.checkpoint_interval > 0 and t % config.checkpoint_interval == 0:
            write_checkpoint(t)

    if pending:
        pool.insert_episode(active_id, _finalize(pending, "end"))
        stats.episodes.append((active_id, "end"))
        pending = []
    stats.wall_clock["online"] = stats.wall_clock.get("online", 0.0) + time.time() - start_time
    write_checkpoint(config.t_online)
    logger.log("online_done", steps=config.t_online, **{
        "switches": len(stats.switches),
        "resets": stats.manual_reset_count,
        "gradient_steps": stats.gradient_steps,
    })
    return pool, stats
