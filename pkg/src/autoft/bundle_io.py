"""Persistence for demonstration bundles.

Format ``bundle-v1``: a UTF-8 text file whose first line is a JSON manifest
(task table, record counts, array shapes) followed by one JSON line per
trajectory or failure observation. Arrays are stored via
:mod:`autoft.serialization` as little-endian float32, so a save/load round
trip reproduces every numeric field bit-exactly.
"""

from __future__ import annotations

import os
from dataclasses import asdict
from typing import Any, IO

import numpy as np

from .core import (
    DatasetBundle,
    FailureObservation,
    Observation,
    TaskSpec,
    Trajectory,
    Transition,
)
from .serialization import FormatError, decode_array, dump_record, encode_array, parse_record

__all__ = ["BUNDLE_FORMAT", "save_bundle", "load_bundle"]

BUNDLE_FORMAT = "bundle-v1"

_KINDS = {"prior": "prior", "forward": "target_forward", "backward": "target_backward"}


def _obs_stack(traj: Trajectory) -> tuple[np.ndarray | None, np.ndarray]:
    obs_seq = [tr.obs for tr in traj.transitions] + [traj.transitions[-1].next_obs]
    proprio = np.stack([o.proprio for o in obs_seq])
    if obs_seq[0].image is None:
        return None, proprio
    return np.stack([o.image for o in obs_seq]), proprio


def _traj_record(kind: str, traj: Trajectory) -> dict[str, Any]:
    images, proprio = _obs_stack(traj)
    rewards = np.array([tr.reward for tr in traj.transitions], dtype=np.float32)
    if rewards.size and not np.all(np.isin(rewards, (0.0, 1.0))):
        raise ValueError("persisted rewards must be binary")
    mc = [tr.mc_return for tr in traj.transitions]
    have_mc = [m is not None for m in mc]
    if any(have_mc) and not all(have_mc):
        raise ValueError("trajectory has partially-set mc returns")
    record: dict[str, Any] = {
        "kind": kind,
        "task_id": traj.task_id,
        "success": traj.success,
        "terminal": traj.transitions[-1].terminal,
        "timeout": traj.transitions[-1].timeout,
        "proprio": encode_array(proprio),
        "actions": encode_array(np.stack([tr.action for tr in traj.transitions])),
        "rewards": encode_array(rewards),
        "mc_returns": encode_array(np.array(mc, dtype=np.float32)) if all(have_mc) else None,
    }
    if images is not None:
        record["images"] = encode_array(images)
    return record


def _check_image_shape(shape: tuple[int, ...], manifest_shape: list[int] | None, where: str) -> None:
    if manifest_shape is None:
        raise FormatError(f"{where}: payload carries images but manifest declares none")
    if list(shape) != list(manifest_shape):
        raise FormatError(
            f"{where}: image shape {list(shape)} does not match manifest {manifest_shape}"
        )


def _traj_from_record(rec: dict[str, Any], manifest: dict[str, Any]) -> tuple[str, Trajectory]:
    proprio = decode_array(rec["proprio"])
    actions = decode_array(rec["actions"])
    rewards = decode_array(rec["rewards"])
    mc = decode_array(rec["mc_returns"]) if rec.get("mc_returns") is not None else None
    images = decode_array(rec["images"]) if "images" in rec else None
    n = actions.shape[0]
    if proprio.shape[0] != n + 1 or rewards.shape[0] != n:
        raise FormatError("trajectory arrays disagree on step count")
    if images is not None:
        _check_image_shape(images.shape[1:], manifest.get("image_shape"), "trajectory record")
    if proprio.shape[1] != manifest["proprio_dim"]:
        raise FormatError(
            f"proprio dim {proprio.shape[1]} does not match manifest {manifest['proprio_dim']}"
        )
    obs_seq = [
        Observation(image=images[i] if images is not None else None, proprio=proprio[i])
        for i in range(n + 1)
    ]
    transitions = []
    for i in range(n):
        last = i == n - 1
        transitions.append(
            Transition(
                obs=obs_seq[i],
                action=actions[i],
                next_obs=obs_seq[i + 1],
                reward=float(rewards[i]),
                terminal=bool(rec["terminal"]) and last,
                timeout=bool(rec["timeout"]) and last,
                task_id=int(rec["task_id"]),
                mc_return=float(mc[i]) if mc is not None else None,
            )
        )
    traj = Trajectory(
        transitions=tuple(transitions), task_id=int(rec["task_id"]), success=bool(rec["success"])
    )
    return rec["kind"], traj


def _write(bundle: DatasetBundle, fh: IO[str]) -> None:
    image_shape = None
    proprio_dim = None
    for traj in bundle.demonstrations:
        first = traj.transitions[0].obs
        image_shape = None if first.image is None else list(first.image.shape)
        proprio_dim = int(first.proprio.shape[0])
        break
    else:
        for f in bundle.failures:
            image_shape = None if f.obs.image is None else list(f.obs.image.shape)
            proprio_dim = int(f.obs.proprio.shape[0])
            break
    action_dim = (
        int(bundle.demonstrations[0].transitions[0].action.shape[0])
        if bundle.demonstrations
        else 0
    )
    manifest = {
        "format": BUNDLE_FORMAT,
        "counts": bundle.counts(),
        "image_shape": image_shape,
        "proprio_dim": proprio_dim,
        "action_dim": action_dim,
        "tasks": [asdict(t) for t in bundle.tasks],
    }
    fh.write(dump_record(manifest) + "\n")
    for kind, trajs in (
        ("prior", bundle.prior),
        ("forward", bundle.target_forward),
        ("backward", bundle.target_backward),
    ):
        for traj in trajs:
            fh.write(dump_record(_traj_record(kind, traj)) + "\n")
    for failure in bundle.failures:
        rec: dict[str, Any] = {
            "kind": "failure",
            "task_id": failure.task_id,
            "proprio": encode_array(failure.obs.proprio),
        }
        if failure.obs.image is not None:
            rec["image"] = encode_array(failure.obs.image)
        fh.write(dump_record(rec) + "\n")


def save_bundle(bundle: DatasetBundle, path: str | os.PathLike) -> None:
    """Write ``bundle`` to ``path`` in the ``bundle-v1`` format."""
    with open(path, "w", encoding="utf-8") as fh:
        _write(bundle, fh)


def load_bundle(path: str | os.PathLike) -> DatasetBundle:
    """Read a ``bundle-v1`` file, validating version and declared shapes."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty bundle file")
    manifest = parse_record(lines[0])
    version = manifest.get("format")
    if version != BUNDLE_FORMAT:
        raise FormatError(
            f"bundle format mismatch: file declares {version!r}, reader supports {BUNDLE_FORMAT!r}"
        )
    tasks = tuple(TaskSpec(**t) for t in manifest["tasks"])
    groups: dict[str, list[Trajectory]] = {v: [] for v in _KINDS.values()}
    failures: list[FailureObservation] = []
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = parse_record(line)
        kind = rec.get("kind")
        if kind == "failure":
            image = decode_array(rec["image"]) if "image" in rec else None
            if image is not None:
                _check_image_shape(image.shape, manifest.get("image_shape"), "failure record")
            failures.append(
                FailureObservation(
                    obs=Observation(image=image, proprio=decode_array(rec["proprio"])),
                    task_id=int(rec["task_id"]),
                )
            )
        elif kind in _KINDS:
            kind, traj = _traj_from_record(rec, manifest)
            groups[_KINDS[kind]].append(traj)
        else:
            raise FormatError(f"unknown record kind {kind!r}")
    bundle = DatasetBundle(
        tasks=tasks,
        prior=tuple(groups["prior"]),
        target_forward=tuple(groups["target_forward"]),
        target_backward=tuple(groups["target_backward"]),
        failures=tuple(failures),
    )
    declared = manifest.get("counts", {})
    actual = bundle.counts()
    if declared != actual:
        raise FormatError(f"manifest counts {declared} do not match payload counts {actual}")
    return bundle
