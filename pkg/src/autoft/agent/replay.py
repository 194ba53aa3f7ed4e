"""Replay storage with an immutable offline partition and an online ring.

Sampling mixes the partitions at a configurable offline fraction: the number
of offline samples per batch is binomial, so the expected share equals the
fraction exactly. The online partition overwrites oldest entries first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import Trajectory
from .config import ObsSpec

__all__ = ["SampleBatch", "ReplayBuffer"]


@dataclass
class SampleBatch:
    """Numpy minibatch; task embeddings are attached downstream."""

    proprio: np.ndarray
    image: np.ndarray | None
    action: np.ndarray
    reward: np.ndarray
    next_proprio: np.ndarray
    next_image: np.ndarray | None
    terminal: np.ndarray
    mc_return: np.ndarray
    task_ids: np.ndarray
    is_demo: np.ndarray


class _Partition:
    def __init__(self, obs_spec: ObsSpec, act_dim: int, capacity: int):
        self.capacity = capacity
        self.size = 0
        self.cursor = 0
        self.proprio = np.zeros((capacity, obs_spec.proprio_dim), dtype=np.float32)
        self.next_proprio = np.zeros_like(self.proprio)
        self.image = None
        self.next_image = None
        if obs_spec.mode == "image":
            shape = (capacity, *obs_spec.image_shape)
            self.image = np.zeros(shape, dtype=np.float32)
            self.next_image = np.zeros(shape, dtype=np.float32)
        self.action = np.zeros((capacity, act_dim), dtype=np.float32)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.terminal = np.zeros(capacity, dtype=np.float32)
        self.mc_return = np.full(capacity, np.nan, dtype=np.float32)
        self.task_ids = np.zeros(capacity, dtype=np.int64)

    def append(self, tr) -> None:
        i = self.cursor
        self.proprio[i] = tr.obs.proprio
        self.next_proprio[i] = tr.next_obs.proprio
        if self.image is not None:
            self.image[i] = tr.obs.image
            self.next_image[i] = tr.next_obs.image
        self.action[i] = tr.action
        self.reward[i] = tr.reward
        self.terminal[i] = 1.0 if tr.terminal else 0.0
        self.mc_return[i] = np.nan if tr.mc_return is None else tr.mc_return
        self.task_ids[i] = tr.task_id
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)


class ReplayBuffer:
    """Offline demonstrations plus a ring of online experience."""

    def __init__(
        self,
        obs_spec: ObsSpec,
        act_dim: int,
        online_capacity: int,
        seed: int,
    ):
        self.obs_spec = obs_spec
        self.act_dim = act_dim
        self._offline: _Partition | None = None
        self._online = _Partition(obs_spec, act_dim, online_capacity)
        self._rng = np.random.default_rng(seed)

    # ------------------------------------------------------------------- load

    def load_offline(self, trajectories: Sequence[Trajectory]) -> None:
        """Install the immutable demonstration partition.

        Every transition must already carry its Monte-Carlo return.
        """
        total = sum(len(t) for t in trajectories)
        if total == 0:
            raise ValueError("offline data is empty")
        part = _Partition(self.obs_spec, self.act_dim, total)
        for traj in trajectories:
            for tr in traj.transitions:
                if tr.mc_return is None:
                    raise ValueError("offline transitions must have mc_return set")
                part.append(tr)
        self._offline = part

    def add_online_episode(self, transitions) -> None:
        """Insert a finished episode (returns computed) into the ring."""
        for tr in transitions:
            if tr.mc_return is None:
                raise ValueError("online transitions must have mc_return set at insertion")
            self._online.append(tr)

    # ------------------------------------------------------------------ sizes

    @property
    def offline_size(self) -> int:
        return 0 if self._offline is None else self._offline.size

    @property
    def online_size(self) -> int:
        return self._online.size

    # ----------------------------------------------------------------- sample

    def sample(self, batch_size: int, offline_fraction: float) -> SampleBatch:
        if self.offline_size == 0 and self.online_size == 0:
            raise ValueError("cannot sample from an empty buffer")
        if self.online_size == 0:
            n_off = batch_size
        elif self.offline_size == 0:
            n_off = 0
        else:
            n_off = int(self._rng.binomial(batch_size, offline_fraction))
        n_on = batch_size - n_off
        parts = []
        if n_off:
            idx = self._rng.integers(0, self._offline.size, size=n_off)
            parts.append((self._offline, idx, True))
        if n_on:
            idx = self._rng.integers(0, self._online.size, size=n_on)
            parts.append((self._online, idx, False))

        def gather(attr):
            arrays = [getattr(p, attr)[idx] for p, idx, _ in parts if getattr(p, attr) is not None]
            return np.concatenate(arrays) if arrays else None

        is_demo = np.concatenate(
            [np.full(len(idx), demo, dtype=bool) for _, idx, demo in parts]
        )
        return SampleBatch(
            proprio=gather("proprio"),
            image=gather("image"),
            action=gather("action"),
            reward=gather("reward"),
            next_proprio=gather("next_proprio"),
            next_image=gather("next_image"),
            terminal=gather("terminal"),
            mc_return=gather("mc_return"),
            task_ids=gather("task_ids"),
            is_demo=is_demo,
        )

    # ------------------------------------------------------------- checkpoint

    def state_dict(self) -> dict:
        online = self._online
        payload = {
            "rng_state": self._rng.bit_generator.state,
            "online": {
                "size": online.size,
                "cursor": online.cursor,
                "proprio": online.proprio[: online.size],
                "next_proprio": online.next_proprio[: online.size],
                "action": online.action[: online.size],
                "reward": online.reward[: online.size],
                "terminal": online.terminal[: online.size],
                "mc_return": online.mc_return[: online.size],
                "task_ids": online.task_ids[: online.size],
            },
        }
        if online.image is not None:
            payload["online"]["image"] = online.image[: online.size]
            payload["online"]["next_image"] = online.next_image[: online.size]
        return payload

    def load_state_dict(self, payload: dict) -> None:
        self._rng.bit_generator.state = payload["rng_state"]
        data = payload["online"]
        online = self._online
        n = int(data["size"])
        online.size = n
        online.cursor = int(data["cursor"])
        for attr in ("proprio", "next_proprio", "action", "reward", "terminal", "mc_return", "task_ids"):
            getattr(online, attr)[:n] = data[attr]
        if online.image is not None:
            online.image[:n] = data["image"]
            online.next_image[:n] = data["next_image"]
