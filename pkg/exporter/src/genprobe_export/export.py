"""Checkpoint-to-container conversion."""

from __future__ import annotations

import fnmatch
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .container import manifest_line, write_container


class MissingTensor(ValueError):
    """The name filter matched no tensor in the checkpoint."""


class NonFloatTensor(TypeError):
    """A selected tensor is not real floating point."""


@dataclass
class ExportJob:
    checkpoint_path: str
    name_filter: str = "*"
    model_id: str = "model"
    epoch: int = 0
    optimizer: str = "unknown"
    dataset: str = "unknown"
    hyperparams: dict[str, str] = field(default_factory=dict)
    train_accuracy: float = 0.0
    test_accuracy: float = 0.0
    out_dir: str = "."
    transpose_4d: bool = False  # for checkpoints in (k_h, k_w, c_in, c_out) layout


def load_state_dict(path) -> dict[str, torch.Tensor]:
    """Load a checkpoint, unwrapping the common state-dict envelopes."""
    obj = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(obj, dict):
        for key in ("state_dict", "model_state_dict", "model"):
            if key in obj and isinstance(obj[key], dict):
                obj = obj[key]
                break
    if not isinstance(obj, dict) or not all(isinstance(v, torch.Tensor) for v in obj.values()):
        raise ValueError(f"{path}: not a state dict of named tensors")
    return obj


def select_tensors(state: dict[str, torch.Tensor], name_filter: str) -> dict[str, torch.Tensor]:
    selected = {n: t for n, t in state.items() if fnmatch.fnmatch(n, name_filter)}
    if not selected:
        raise MissingTensor(f"filter {name_filter!r} matched none of {len(state)} tensors")
    for name, tensor in selected.items():
        if not tensor.is_floating_point() or tensor.is_complex():
            raise NonFloatTensor(f"{name}: dtype {tensor.dtype} is not real floating point")
    return selected


def export(job: ExportJob) -> Path:
    """Write the selected tensors as one f32 container and append a manifest row.

    Prints each tensor's Frobenius norm (computed checkpoint-side on the
    f32 values) so the numbers can be cross-checked against
    ``genprobe probe`` on the written container.
    """
    state = load_state_dict(job.checkpoint_path)
    selected = select_tensors(state, job.name_filter)

    arrays: dict[str, np.ndarray] = {}
    for name, tensor in selected.items():
        a = tensor.detach().numpy().astype(np.float32)
        if job.transpose_4d and a.ndim == 4:
            a = np.ascontiguousarray(a.transpose(3, 2, 0, 1))
        arrays[name] = a

    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    container = out_dir / f"{job.model_id}_ep{job.epoch:03d}.gprb"
    write_container(arrays, container)

    line = manifest_line(
        model_id=job.model_id,
        epoch=job.epoch,
        optimizer=job.optimizer,
        dataset=job.dataset,
        hyperparams=job.hyperparams,
        train_accuracy=job.train_accuracy,
        test_accuracy=job.test_accuracy,
        weights_path=container.name,
    )
    with open(out_dir / "manifest.jsonl", "a", encoding="utf-8") as fh:
        fh.write(line + "\n")

    for name in sorted(arrays):
        fro = math.sqrt(float(np.sum(np.asarray(arrays[name], dtype=np.float64) ** 2)))
        print(f"{name}\t{fro!r}")
    return container
