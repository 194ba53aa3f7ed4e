"""Alternative reward signals used as comparison arms.

The adversarial detector retrains during online collection, treating demo
tails as positives and recent online states as negatives. The embedding
distance reward is dense: the negative distance between the current
observation and a goal image in a fixed embedding space.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..core import Observation, TaskSpec
from ..agent.config import ObsSpec
from ..agent.embeddings import TaskEmbeddingProvider
from .base import RewardPrediction
from .classifier import ClassifierConfig, SuccessClassifier, train_success_classifier
from .labels import LabelledExample

__all__ = ["ViceReward", "vip_style_reward", "RandomEmbedder", "ClassifierFeatureEmbedder"]


class ViceReward:
    """Adversarially refreshed success detector.

    Positives are fixed (demo tails from the labelled set); negatives start as
    the demo prefixes plus failure observations and, once online states
    arrive, are drawn uniformly from a ring of recent online observations.
    The detector is retrained from scratch at a fixed cadence so each refresh
    is deterministic in (seed, refresh index).
    """

    def __init__(
        self,
        examples: Sequence[LabelledExample],
        tasks: Sequence[TaskSpec],
        embedder: TaskEmbeddingProvider,
        obs_spec: ObsSpec,
        config: ClassifierConfig,
        seed: int,
        negative_ring_size: int = 4096,
        max_online_negatives: int = 2048,
    ):
        self._positives = [e for e in examples if e.label == 1]
        self._demo_negatives = [e for e in examples if e.label == 0]
        if not self._positives or not self._demo_negatives:
            raise ValueError("adversarial reward needs both demo positives and negatives")
        self._tasks = list(tasks)
        self._embedder = embedder
        self._obs_spec = obs_spec
        self._config = config
        self._seed = seed
        self._ring: list[tuple[Observation, int]] = []
        self._ring_size = negative_ring_size
        self._max_online_negatives = max_online_negatives
        self._ring_cursor = 0
        self._refresh_count = 0
        self._rng = np.random.default_rng(seed)
        self._classifier = self._train()

    def _train(self) -> SuccessClassifier:
        negatives = list(self._demo_negatives)
        if self._ring:
            n = min(self._max_online_negatives, len(self._ring))
            picks = self._rng.integers(0, len(self._ring), size=n)
            base_group = 1 + max(e.group for e in self._positives + self._demo_negatives)
            for j, k in enumerate(picks):
                obs, task_id = self._ring[int(k)]
                negatives.append(
                    LabelledExample(obs=obs, task_id=task_id, label=0, group=base_group + j)
                )
        examples = self._positives + negatives
        clf = train_success_classifier(
            examples,
            self._tasks,
            self._embedder,
            self._obs_spec,
            self._config,
            seed=self._seed + 1009 * self._refresh_count,
        )
        return clf

    @property
    def refresh_count(self) -> int:
        return self._refresh_count

    @property
    def online_negative_pool(self) -> int:
        return len(self._ring)

    def observe_online_state(self, obs: Observation, task_id: int) -> None:
        entry = (obs, task_id)
        if len(self._ring) < self._ring_size:
            self._ring.append(entry)
        else:
            self._ring[self._ring_cursor] = entry
            self._ring_cursor = (self._ring_cursor + 1) % self._ring_size

    def update_discriminator(self) -> None:
        """Retrain against the current online negative pool."""
        self._refresh_count += 1
        self._classifier = self._train()

    def predict(self, obs: Observation, task_id: int) -> RewardPrediction:
        return self._classifier.predict(obs, task_id)

    # checkpoint support: the live discriminator plus the negative ring
    def state_dict(self) -> dict:
        from ..serialization import encode_array

        return {
            "classifier": self._classifier.to_blob(),
            "refresh_count": self._refresh_count,
            "ring_cursor": self._ring_cursor,
            "rng_state": self._rng.bit_generator.state,
            "ring": [
                {
                    "proprio": encode_array(obs.proprio),
                    "image": None if obs.image is None else encode_array(obs.image),
                    "task_id": task_id,
                }
                for obs, task_id in self._ring
            ],
        }

    def load_state_dict(self, payload: dict) -> None:
        from ..serialization import decode_array

        self._classifier = SuccessClassifier.from_blob(payload["classifier"])
        self._refresh_count = int(payload["refresh_count"])
        self._ring_cursor = int(payload["ring_cursor"])
        self._rng.bit_generator.state = payload["rng_state"]
        self._ring = [
            (
                Observation(
                    image=None if entry["image"] is None else decode_array(entry["image"]),
                    proprio=decode_array(entry["proprio"]),
                ),
                int(entry["task_id"]),
            )
            for entry in payload["ring"]
        ]


class RandomEmbedder:
    """Fixed random projection of observations; a stand-in representation."""

    def __init__(self, obs_spec: ObsSpec, dim: int = 32, seed: int = 0):
        rng = np.random.default_rng(seed)
        in_dim = obs_spec.proprio_dim
        if obs_spec.mode == "image":
            in_dim += int(np.prod(obs_spec.image_shape))
        self._w = rng.normal(size=(in_dim, dim)).astype(np.float32) / np.sqrt(in_dim)
        self._mode = obs_spec.mode

    def __call__(self, obs: Observation) -> np.ndarray:
        parts = [obs.proprio]
        if self._mode == "image":
            parts.insert(0, obs.image.reshape(-1))
        return np.concatenate(parts) @ self._w


def ClassifierFeatureEmbedder(classifier: SuccessClassifier) -> Callable[[Observation], np.ndarray]:
    """Observation embedder backed by a trained detector's feature trunk."""
    return classifier.feature_embedder()


def vip_style_reward(
    embedder: Callable[[Observation], np.ndarray],
    obs: Observation,
    goal: Observation,
) -> float:
    """Dense reward: negative embedding distance to the goal observation.

    Zero (the maximum) exactly when the embeddings coincide; symmetric in its
    two observation arguments.
    """
    d = np.linalg.norm(np.asarray(embedder(obs)) - np.asarray(embedder(goal)))
    return -float(d)
