"""Trainable binary success detector conditioned on a task embedding.

The detector consumes (observation features ⊕ task embedding) and is trained
with class-balanced sampling on the labelled demonstration set. After
training, its decision threshold is raised on a held-out split until every
task's false-positive rate sits at or below the target (and below its
false-negative rate); the threshold is folded into the persisted parameters
as a logit offset, so the published probability keeps the plain
``p_yes > 0.5`` decision rule.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from ..core import Observation, TaskSpec
from ..agent.config import ObsSpec
from ..agent.embeddings import TaskEmbeddingProvider, check_distinct
from ..agent.networks import ImageTrunk, init_parameters, _mlp
from ..serialization import FormatError, decode_array, encode_array
from .base import RewardPrediction, prediction_from_p_yes
from .labels import LabelledExample
from .metrics import RewardMetrics, evaluate_reward_model

__all__ = ["ClassifierConfig", "SuccessClassifier", "train_success_classifier"]

CLASSIFIER_FORMAT = "classifier-v1"


@dataclass(frozen=True)
class ClassifierConfig:
    embedding_dim: int = 64
    feature_dim: int = 64
    hidden_sizes: tuple[int, ...] = (128, 128)
    image_channels: tuple[int, int, int, int] = (8, 16, 16, 16)
    train_steps: int = 3000
    batch_size: int = 64
    lr: float = 1e-3
    holdout_demos_per_task: int = 2
    fp_target: float = 0.05
    enforce_fn_above_fp: bool = True
    input_noise: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        object.__setattr__(self, "image_channels", tuple(self.image_channels))


class _ClassifierNet(nn.Module):
    def __init__(self, obs_spec: ObsSpec, z_dim: int, cfg: ClassifierConfig):
        super().__init__()
        dtype = torch.float32
        if obs_spec.mode == "image":
            self.trunk: ImageTrunk | None = ImageTrunk(
                obs_spec.image_shape, cfg.feature_dim, dtype, cfg.image_channels
            )
            in_dim = cfg.feature_dim + obs_spec.proprio_dim + z_dim
        else:
            self.trunk = None
            in_dim = obs_spec.proprio_dim + z_dim
        self.head = _mlp((in_dim, *cfg.hidden_sizes, 1), dtype)

    def forward(self, proprio: torch.Tensor, image: torch.Tensor | None, z: torch.Tensor) -> torch.Tensor:
        if self.trunk is not None:
            if image is None:
                raise ValueError("image-mode classifier received no pixels")
            feats = torch.cat([self.trunk(image), proprio], dim=-1)
        else:
            feats = proprio
        return self.head(torch.cat([feats, z], dim=-1)).squeeze(-1)

    def features(self, proprio: torch.Tensor, image: torch.Tensor | None) -> torch.Tensor:
        if self.trunk is not None:
            return torch.cat([self.trunk(image), proprio], dim=-1)
        return proprio


def _dedupe(examples: Sequence[LabelledExample]) -> list[LabelledExample]:
    seen: set[bytes] = set()
    out = []
    for ex in examples:
        img = b"" if ex.obs.image is None else ex.obs.image.tobytes()
        key = ex.obs.proprio.tobytes() + img + bytes([ex.label]) + ex.task_id.to_bytes(4, "little", signed=True)
        if key in seen:
            continue
        seen.add(key)
        out.append(ex)
    return out


def _split_holdout(
    examples: list[LabelledExample], holdout_per_task: int
) -> tuple[list[LabelledExample], list[LabelledExample]]:
    """Hold out whole trajectories (groups), at least one per task with data."""
    demo_groups: dict[int, list[int]] = {}
    group_task: dict[int, int] = {}
    group_has_pos: dict[int, bool] = {}
    for ex in examples:
        group_task[ex.group] = ex.task_id
        group_has_pos[ex.group] = group_has_pos.get(ex.group, False) or ex.label == 1
    for group, task in sorted(group_task.items()):
        if group_has_pos[group]:
            demo_groups.setdefault(task, []).append(group)
    holdout_groups: set[int] = set()
    for task, groups in demo_groups.items():
        take = min(holdout_per_task, max(1, len(groups) - 1))
        holdout_groups.update(groups[-take:])
    # every third failure-only group joins the holdout negatives
    failure_groups = sorted(g for g, pos in group_has_pos.items() if not pos)
    holdout_groups.update(failure_groups[2::3])
    train = [ex for ex in examples if ex.group not in holdout_groups]
    holdout = [ex for ex in examples if ex.group in holdout_groups]
    return train, holdout


def _calibrate_threshold(
    per_task: dict[int, tuple[np.ndarray, np.ndarray]],
    fp_target: float,
    enforce_fn_above_fp: bool,
) -> float:
    """Smallest threshold meeting every task's rate constraints on holdout."""

    def feasible(t: float) -> bool:
        for pos, neg in per_task.values():
            fp = float(np.mean(neg > t)) if neg.size else 0.0
            fn = float(np.mean(pos <= t)) if pos.size else 1.0
            if fp > fp_target:
                return False
            if enforce_fn_above_fp and pos.size and not (fn > fp):
                return False
        return True

    # candidate thresholds sit halfway between adjacent observed scores, so no
    # holdout score ever lies on the decision boundary
    values = sorted(
        {float(v) for pos, neg in per_task.values() for v in np.concatenate([pos, neg])}
    )
    candidates = [0.5]
    candidates.extend((a + b) / 2.0 for a, b in zip(values, values[1:]))
    if values:
        candidates.append(min(values[-1] + 0.01, 1.0 - 1e-6))
    candidates = sorted(c for c in set(candidates) if c >= 0.5)
    for t in candidates:
        if feasible(t):
            return t
    return candidates[-1]


class SuccessClassifier:
    """A trained detector: pure prediction plus persisted threshold."""

    def __init__(
        self,
        config: ClassifierConfig,
        obs_spec: ObsSpec,
        z_table: np.ndarray,
        task_index: dict[int, int],
        net: _ClassifierNet,
        logit_offset: float = 0.0,
        holdout_metrics: dict[int, RewardMetrics] | None = None,
    ):
        self.config = config
        self.obs_spec = obs_spec
        self.z_table = torch.as_tensor(np.asarray(z_table, dtype=np.float32))
        self.task_index = dict(task_index)
        self.net = net
        self.logit_offset = float(logit_offset)
        self.holdout_metrics = holdout_metrics or {}

    # ------------------------------------------------------------- prediction

    def _z_rows(self, task_ids: np.ndarray) -> torch.Tensor:
        try:
            rows = np.array([self.task_index[int(t)] for t in task_ids], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"classifier was not trained for task id {exc.args[0]}") from None
        return self.z_table[torch.as_tensor(rows)]

    def batch_p_yes(self, observations: Sequence[Observation], task_ids: np.ndarray) -> np.ndarray:
        proprio = torch.as_tensor(np.stack([o.proprio for o in observations]))
        image = None
        if self.obs_spec.mode == "image":
            image = torch.as_tensor(np.stack([o.image for o in observations])).permute(0, 3, 1, 2)
        z = self._z_rows(np.asarray(task_ids))
        with torch.no_grad():
            logits = self.net(proprio, image, z) - self.logit_offset
            return torch.sigmoid(logits).numpy()

    def predict(self, obs: Observation, task_id: int) -> RewardPrediction:
        """Pure, deterministic verdict for one observation and task."""
        p = float(self.batch_p_yes([obs], np.array([task_id]))[0])
        return prediction_from_p_yes(p)

    def feature_embedder(self):
        """Expose the trained trunk as a generic observation embedder."""

        def embed(obs: Observation) -> np.ndarray:
            proprio = torch.as_tensor(obs.proprio[None])
            image = None
            if self.obs_spec.mode == "image":
                image = torch.as_tensor(obs.image[None]).permute(0, 3, 1, 2)
            with torch.no_grad():
                return self.net.features(proprio, image)[0].numpy()

        return embed

    # ------------------------------------------------------------ persistence

    def to_blob(self) -> dict:
        return {
            "format_version": CLASSIFIER_FORMAT,
            "config": {
                **{k: getattr(self.config, k) for k in (
                    "embedding_dim", "feature_dim", "train_steps", "batch_size", "lr",
                    "holdout_demos_per_task", "fp_target", "enforce_fn_above_fp",
                    "input_noise",
                )},
                "hidden_sizes": list(self.config.hidden_sizes),
                "image_channels": list(self.config.image_channels),
            },
            "obs_spec": {
                "mode": self.obs_spec.mode,
                "image_shape": list(self.obs_spec.image_shape) if self.obs_spec.image_shape else None,
                "proprio_dim": self.obs_spec.proprio_dim,
            },
            "logit_offset": self.logit_offset,
            "task_index": sorted((int(k), int(v)) for k, v in self.task_index.items()),
            "z_table": encode_array(self.z_table.numpy(), "f4"),
            "params": {k: encode_array(v.detach().numpy(), "f4") for k, v in self.net.state_dict().items()},
        }

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_blob(), fh, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_blob(cls, blob: dict) -> "SuccessClassifier":
        version = blob.get("format_version")
        if version != CLASSIFIER_FORMAT:
            raise FormatError(
                f"classifier format mismatch: file declares {version!r}, "
                f"reader supports {CLASSIFIER_FORMAT!r}"
            )
        cfg_dict = dict(blob["config"])
        cfg_dict["hidden_sizes"] = tuple(cfg_dict["hidden_sizes"])
        cfg_dict["image_channels"] = tuple(cfg_dict["image_channels"])
        config = ClassifierConfig(**cfg_dict)
        spec = blob["obs_spec"]
        obs_spec = ObsSpec(
            mode=spec["mode"],
            image_shape=tuple(spec["image_shape"]) if spec["image_shape"] else None,
            proprio_dim=spec["proprio_dim"],
        )
        z_table = decode_array(blob["z_table"])
        net = _ClassifierNet(obs_spec, z_table.shape[1], config)
        net.load_state_dict({k: torch.as_tensor(decode_array(v)) for k, v in blob["params"].items()})
        return cls(
            config,
            obs_spec,
            z_table,
            {int(k): int(v) for k, v in blob["task_index"]},
            net,
            logit_offset=blob["logit_offset"],
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SuccessClassifier":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_blob(json.load(fh))


def _example_tensors(examples, obs_spec, task_rows, z_table):
    proprio = torch.as_tensor(np.stack([e.obs.proprio for e in examples]))
    image = None
    if obs_spec.mode == "image":
        image = torch.as_tensor(np.stack([e.obs.image for e in examples])).permute(0, 3, 1, 2)
    rows = torch.as_tensor(np.array([task_rows[e.task_id] for e in examples], dtype=np.int64))
    z = z_table[rows]
    labels = torch.as_tensor(np.array([e.label for e in examples], dtype=np.float32))
    return proprio, image, z, labels


def train_success_classifier(
    examples: Sequence[LabelledExample],
    tasks: Sequence[TaskSpec],
    embedder: TaskEmbeddingProvider,
    obs_spec: ObsSpec,
    config: ClassifierConfig,
    seed: int,
) -> SuccessClassifier:
    """Fit the detector and calibrate its decision threshold.

    Deterministic under ``seed``. Duplicated examples are collapsed before
    training, so the sampling stream (and hence the learned function) does
    not depend on multiplicity. Raises if only one label class is present.
    """
    examples = _dedupe(examples)
    labels_present = {e.label for e in examples}
    if labels_present != {0, 1}:
        raise ValueError(f"training set must contain both labels, got {labels_present}")

    check_distinct(embedder, [t.instruction for t in tasks])
    z_table = torch.as_tensor(
        np.stack([embedder.vector(t.instruction) for t in tasks]).astype(np.float32)
    )
    task_rows = {t.task_id: i for i, t in enumerate(tasks)}

    train_ex, holdout_ex = _split_holdout(list(examples), config.holdout_demos_per_task)
    generator = torch.Generator().manual_seed(seed)
    net = _ClassifierNet(obs_spec, z_table.shape[1], config)
    init_parameters(net, generator)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    bce = nn.BCEWithLogitsLoss()

    proprio, image, z, labels = _example_tensors(train_ex, obs_spec, task_rows, z_table)
    pos_idx = torch.as_tensor(np.flatnonzero(labels.numpy() == 1.0))
    neg_idx = torch.as_tensor(np.flatnonzero(labels.numpy() == 0.0))
    half = config.batch_size // 2
    for _ in range(config.train_steps):
        pick_pos = pos_idx[torch.randint(len(pos_idx), (half,), generator=generator)]
        pick_neg = neg_idx[torch.randint(len(neg_idx), (config.batch_size - half,), generator=generator)]
        idx = torch.cat([pick_pos, pick_neg])
        bp = proprio[idx]
        bi = image[idx] if image is not None else None
        if config.input_noise > 0:
            bp = bp + config.input_noise * torch.randn(bp.shape, generator=generator)
            if bi is not None:
                bi = bi + config.input_noise * torch.randn(bi.shape, generator=generator)
        logits = net(bp, bi, z[idx])
        loss = bce(logits, labels[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()

    clf = SuccessClassifier(config, obs_spec, z_table.numpy(), task_rows, net)
    # threshold calibration on the held-out split
    per_task: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    holdout_by_task: dict[int, list[LabelledExample]] = {}
    for ex in holdout_ex:
        holdout_by_task.setdefault(ex.task_id, []).append(ex)
    for task_id, exs in sorted(holdout_by_task.items()):
        p = clf.batch_p_yes([e.obs for e in exs], np.full(len(exs), task_id))
        y = np.array([e.label for e in exs])
        per_task[task_id] = (p[y == 1], p[y == 0])
    threshold = _calibrate_threshold(per_task, config.fp_target, config.enforce_fn_above_fp)
    threshold = min(max(threshold, 1e-6), 1.0 - 1e-6)
    clf.logit_offset = math.log(threshold / (1.0 - threshold))
    # record the calibrated holdout confusion per task
    for task_id, exs in sorted(holdout_by_task.items()):
        p = clf.batch_p_yes([e.obs for e in exs], np.full(len(exs), task_id))
        preds = (p > 0.5).astype(int)
        clf.holdout_metrics[task_id] = evaluate_reward_model(
            preds.tolist(), [e.label for e in exs]
        )
    return clf
