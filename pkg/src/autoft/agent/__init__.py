from .config import AgentConfig, Algorithm, ObsSpec
from .embeddings import (
    HashedBagOfWordsEmbedding,
    OneHotTaskEmbedding,
    TableTextEmbedding,
    TaskEmbeddingProvider,
)
from .agent import Agent
from .replay import ReplayBuffer
from .checkpoint import load_agent, save_agent

__all__ = [
    "AgentConfig",
    "Algorithm",
    "ObsSpec",
    "TaskEmbeddingProvider",
    "HashedBagOfWordsEmbedding",
    "TableTextEmbedding",
    "OneHotTaskEmbedding",
    "Agent",
    "ReplayBuffer",
    "save_agent",
    "load_agent",
]
