"""Agent hyperparameters and observation contract."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Algorithm(str, enum.Enum):
    """Which actor-critic update rule drives training."""

    CALQL = "calql"  # conservative critic with return-calibrated clipping
    CQL = "cql"  # conservative critic, no calibration
    AWAC = "awac"  # advantage-weighted actor, plain Bellman critic
    SAC = "sac"  # no conservatism, no demonstration regularization


@dataclass(frozen=True)
class ObsSpec:
    """Shapes the networks must accept."""

    mode: str  # "image" or "state"
    image_shape: tuple[int, int, int] | None
    proprio_dim: int

    def __post_init__(self):
        if self.mode not in ("image", "state"):
            raise ValueError(f"unknown observation mode {self.mode!r}")
        if self.mode == "image" and self.image_shape is None:
            raise ValueError("image mode requires an image shape")


@dataclass(frozen=True)
class AgentConfig:
    """Training knobs for the multi-task actor-critic.

    ``bc_weight="auto"`` calibrates the demonstration regularizer once, at
    the start of offline pre-training, so the RL and cloning terms start at
    comparable scale, and keeps it fixed from then on.
    """

    gamma: float = 0.99
    cql_alpha: float = 5.0
    n_action_samples: int = 4
    target_update_rate: float = 0.005
    entropy_coefficient: float | str = "auto"  # fixed value or "auto"
    init_entropy_coefficient: float = 0.1
    bc_weight: float | str = "auto"  # fixed value or "auto"
    offline_fraction: float = 0.5
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    entropy_lr: float = 3e-4
    embedding_dim: int = 64
    feature_dim: int = 64  # image-trunk output width
    image_channels: tuple[int, int, int, int] = (16, 32, 32, 32)
    hidden_sizes: tuple[int, ...] = (128, 128)
    batch_size: int = 128
    online_capacity: int = 60_000
    awac_beta: float = 1.0
    awac_weight_clip: float = 100.0
    algorithm: Algorithm = Algorithm.CALQL

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if not (0.0 <= self.offline_fraction <= 1.0):
            raise ValueError("offline_fraction must lie in [0, 1]")
        if self.cql_alpha < 0:
            raise ValueError("cql_alpha must be >= 0")
        if self.n_action_samples < 1:
            raise ValueError("n_action_samples must be >= 1")
        if isinstance(self.entropy_coefficient, str) and self.entropy_coefficient != "auto":
            raise ValueError("entropy_coefficient must be a float or 'auto'")
        if isinstance(self.bc_weight, str) and self.bc_weight != "auto":
            raise ValueError("bc_weight must be a float or 'auto'")
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        object.__setattr__(self, "image_channels", tuple(self.image_channels))
