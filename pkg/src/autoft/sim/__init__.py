from .layout import TaskCatalog, build_catalog
from .env import ObjectState, BinSpec, SimConfig, SimState, TabletopEnv
from .scripted import scripted_action, scripted_demo, generate_bundle, initial_state_for_task

__all__ = [
    "TaskCatalog",
    "build_catalog",
    "ObjectState",
    "BinSpec",
    "SimConfig",
    "SimState",
    "TabletopEnv",
    "scripted_action",
    "scripted_demo",
    "generate_bundle",
    "initial_state_for_task",
]
