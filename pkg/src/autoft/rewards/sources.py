"""Adapters that present every reward mechanism to the loop uniformly.

A source labels the post-action observation for the active task, returning
(reward value, success flag). Sparse sources return {0,1} and flag success on
label 1; the dense embedding-distance source never flags success, so episodes
under it end only at the horizon.
"""

from __future__ import annotations

from typing import Callable, Protocol

import numpy as np

from ..core import Observation, TaskSpec
from .baselines import ViceReward, vip_style_reward
from .classifier import SuccessClassifier
from .client import RewardUnavailableError, VLMRewardClient, observation_to_png_bytes
from .prompts import prompt_from_task

__all__ = [
    "RewardSource",
    "OracleRewardSource",
    "ClassifierRewardSource",
    "ExternalVLMRewardSource",
    "ViceRewardSource",
    "VipRewardSource",
]


class RewardSource(Protocol):
    name: str

    def label(self, obs: Observation, task: TaskSpec) -> tuple[float, bool]:
        """Reward value and success verdict for a post-action observation."""
        ...

    def observe_transition(self, obs: Observation, task: TaskSpec) -> None:
        """Hook: called once per environment step with the new observation."""
        ...

    def periodic_update(self, env_step: int) -> None:
        """Hook: called once per environment step for scheduled refreshes."""
        ...


class _StaticSource:
    def observe_transition(self, obs: Observation, task: TaskSpec) -> None:
        pass

    def periodic_update(self, env_step: int) -> None:
        pass


class OracleRewardSource(_StaticSource):
    """Ground-truth success from the simulator; the upper-bound arm."""

    name = "oracle"

    def __init__(self, env):
        self._env = env

    def label(self, obs: Observation, task: TaskSpec) -> tuple[float, bool]:
        success = self._env.oracle_success(task)
        return (1.0 if success else 0.0), success


class ClassifierRewardSource(_StaticSource):
    """Frozen trained success detector."""

    name = "classifier"

    def __init__(self, classifier: SuccessClassifier):
        self.classifier = classifier

    def label(self, obs: Observation, task: TaskSpec) -> tuple[float, bool]:
        pred = self.classifier.predict(obs, task.task_id)
        return float(pred.label), pred.label == 1


class ExternalVLMRewardSource(_StaticSource):
    """Live service queries; raises RewardUnavailableError on outage."""

    name = "external_vlm"

    def __init__(self, client: VLMRewardClient, query_stride: int = 1):
        self.client = client
        self.query_stride = max(1, query_stride)
        self._calls = 0

    def label(self, obs: Observation, task: TaskSpec) -> tuple[float, bool]:
        self._calls += 1
        if (self._calls - 1) % self.query_stride != 0:
            return 0.0, False
        prompt = task.prompt_question or prompt_from_task(task)
        pred = self.client.query(observation_to_png_bytes(obs), prompt)
        return float(pred.label), pred.label == 1


class ViceRewardSource:
    """Adversarial detector refreshed on a fixed cadence during collection."""

    name = "vice"

    def __init__(self, vice: ViceReward, update_interval: int = 1000):
        self.vice = vice
        self.update_interval = update_interval

    def label(self, obs: Observation, task: TaskSpec) -> tuple[float, bool]:
        pred = self.vice.predict(obs, task.task_id)
        return float(pred.label), pred.label == 1

    def observe_transition(self, obs: Observation, task: TaskSpec) -> None:
        self.vice.observe_online_state(obs, task.task_id)

    def periodic_update(self, env_step: int) -> None:
        if env_step > 0 and env_step % self.update_interval == 0:
            self.vice.update_discriminator()


class VipRewardSource(_StaticSource):
    """Dense negative embedding distance to a per-task goal observation."""

    name = "vip"

    def __init__(self, embedder: Callable[[Observation], np.ndarray], goals: dict[int, Observation]):
        self.embedder = embedder
        self.goals = dict(goals)

    def label(self, obs: Observation, task: TaskSpec) -> tuple[float, bool]:
        goal = self.goals.get(task.task_id)
        if goal is None:
            raise ValueError(f"no goal observation for task {task.task_id}")
        return vip_style_reward(self.embedder, obs, goal), False
