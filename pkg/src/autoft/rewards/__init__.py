from .base import RewardPrediction, prediction_from_p_yes
from .labels import LabelledExample, build_labelled_set
from .prompts import prompt_from_task
from .metrics import RewardMetrics, evaluate_reward_model
from .classifier import ClassifierConfig, SuccessClassifier
from .client import MockVLMBackend, RewardUnavailableError, VLMRewardClient, vlm_client_query
from .baselines import ClassifierFeatureEmbedder, RandomEmbedder, ViceReward, vip_style_reward

__all__ = [
    "RewardPrediction",
    "prediction_from_p_yes",
    "LabelledExample",
    "build_labelled_set",
    "prompt_from_task",
    "RewardMetrics",
    "evaluate_reward_model",
    "ClassifierConfig",
    "SuccessClassifier",
    "VLMRewardClient",
    "MockVLMBackend",
    "RewardUnavailableError",
    "vlm_client_query",
    "ViceReward",
    "vip_style_reward",
    "RandomEmbedder",
    "ClassifierFeatureEmbedder",
]
