from .config import LoopConfig, LoopStats, ResetEvent, SwitchEvent
from .logging import MetricsLogger
from .pretrain import load_bundle_into_buffer, run_bc_pretraining, run_pretraining
from .online import AgentPool, run_online, save_loop_checkpoint, load_loop_checkpoint
from .evaluate import EvalResult, evaluate_policy, evaluate_pair

__all__ = [
    "LoopConfig",
    "LoopStats",
    "SwitchEvent",
    "ResetEvent",
    "MetricsLogger",
    "run_pretraining",
    "run_bc_pretraining",
    "load_bundle_into_buffer",
    "AgentPool",
    "run_online",
    "save_loop_checkpoint",
    "load_loop_checkpoint",
    "EvalResult",
    "evaluate_policy",
    "evaluate_pair",
]
