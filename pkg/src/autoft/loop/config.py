"""Knobs and accounting for the pretrain/fine-tune loop."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["LoopConfig", "LoopStats", "SwitchEvent", "ResetEvent", "REWARD_SOURCES"]

REWARD_SOURCES = ("oracle", "classifier", "external_vlm", "vice", "vip")


@dataclass(frozen=True)
class LoopConfig:
    """Pretraining length, online length, and the reset-free schedule.

    ``switch_horizon`` bounds how long one task attempt may run before the
    active task flips; ``reset_interval`` spaces the scheduled full resets.
    """

    t_offline: int = 20_000
    t_online: int = 50_000
    utd_ratio: int = 1
    switch_horizon: int = 40
    reset_interval: int = 1000
    reward_source: str = "classifier"
    seed: int = 0
    eval_interval: int = 5000
    eval_trials: int = 50
    log_interval: int = 200
    checkpoint_interval: int = 0  # 0: checkpoint only at the end / on abort
    unavailable_budget: int = 100
    interrupt_prob: float = 0.0

    def __post_init__(self):
        if min(self.t_offline, self.t_online) < 0:
            raise ValueError("phase lengths must be nonnegative")
        if min(self.utd_ratio, self.switch_horizon, self.reset_interval) < 1:
            raise ValueError("utd_ratio, switch_horizon and reset_interval must be positive")
        if self.switch_horizon > self.reset_interval:
            raise ValueError("switch_horizon must not exceed reset_interval")
        if self.reward_source not in REWARD_SOURCES:
            raise ValueError(f"unknown reward source {self.reward_source!r}")


@dataclass(frozen=True)
class SwitchEvent:
    step: int
    cause: str  # "success" | "horizon"
    from_task: int
    to_task: int


@dataclass(frozen=True)
class ResetEvent:
    step: int
    cause: str  # "scheduled" | "interrupt"


@dataclass
class LoopStats:
    """Everything the autonomy claims are audited from."""

    switches: list[SwitchEvent] = field(default_factory=list)
    resets: list[ResetEvent] = field(default_factory=list)
    episodes: list[tuple[int, str]] = field(default_factory=list)  # (task, end cause)
    model_success_counts: dict[int, int] = field(default_factory=dict)
    oracle_success_counts: dict[int, int] = field(default_factory=dict)
    model_oracle_agreement: dict[str, int] = field(
        default_factory=lambda: {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    )
    scheduled_reset_count: int = 0
    interrupt_count: int = 0
    reward_queries: int = 0
    reward_unavailable: int = 0
    gradient_steps: int = 0
    env_steps: int = 0
    wall_clock: dict[str, float] = field(default_factory=dict)

    @property
    def manual_reset_count(self) -> int:
        return len(self.resets)

    def check_autonomy_bound(self, t_online: int, reset_interval: int) -> bool:
        bound = -(-t_online // reset_interval) + self.interrupt_count
        return self.manual_reset_count <= bound

    def to_dict(self) -> dict:
        return {
            "switches": [vars(s) for s in self.switches],
            "resets": [vars(r) for r in self.resets],
            "episodes": [list(e) for e in self.episodes],
            "model_success_counts": dict(self.model_success_counts),
            "oracle_success_counts": dict(self.oracle_success_counts),
            "model_oracle_agreement": dict(self.model_oracle_agreement),
            "scheduled_reset_count": self.scheduled_reset_count,
            "interrupt_count": self.interrupt_count,
            "reward_queries": self.reward_queries,
            "reward_unavailable": self.reward_unavailable,
            "gradient_steps": self.gradient_steps,
            "env_steps": self.env_steps,
            "wall_clock": dict(self.wall_clock),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LoopStats":
        stats = cls()
        stats.switches = [SwitchEvent(**s) for s in data["switches"]]
        stats.resets = [ResetEvent(**r) for r in data["resets"]]
        stats.episodes = [tuple(e) for e in data["episodes"]]
        stats.model_success_counts = {int(k): v for k, v in data["model_success_counts"].items()}
        stats.oracle_success_counts = {int(k): v for k, v in data["oracle_success_counts"].items()}
        stats.model_oracle_agreement = dict(data["model_oracle_agreement"])
        stats.scheduled_reset_count = data["scheduled_reset_count"]
        stats.interrupt_count = data["interrupt_count"]
        stats.reward_queries = data["reward_queries"]
        stats.reward_unavailable = data["reward_unavailable"]
        stats.gradient_steps = data["gradient_steps"]
        stats.env_steps = data["env_steps"]
        stats.wall_clock = dict(data["wall_clock"])
        return stats
