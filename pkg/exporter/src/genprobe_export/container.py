"""Canonical writer for the genprobe weight-container wire format.

Implemented against the published format, independently of the genprobe
package: magic "GPRB", u32 version 1, u64 index length, sorted-key JSON
index (name -> dtype/shape/offset/nbytes), then raw little-endian
row-major payload. Identical tensors always produce identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"GPRB"
VERSION = 1


def write_container(tensors: dict[str, np.ndarray], path) -> None:
    """Write named f32 arrays to ``path`` in canonical container form."""
    index: dict[str, dict] = {}
    chunks: list[bytes] = []
    offset = 0
    for name in sorted(tensors):
        raw = np.ascontiguousarray(tensors[name], dtype="<f4").tobytes()
        index[name] = {
            "dtype": "f32",
            "shape": list(tensors[name].shape),
            "offset": offset,
            "nbytes": len(raw),
        }
        chunks.append(raw)
        offset += len(raw)
    index_bytes = json.dumps(index, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(VERSION.to_bytes(4, "little"))
        fh.write(len(index_bytes).to_bytes(8, "little"))
        fh.write(index_bytes)
        for chunk in chunks:
            fh.write(chunk)


def manifest_line(
    model_id: str,
    epoch: int,
    optimizer: str,
    dataset: str,
    hyperparams: dict[str, str],
    train_accuracy: float,
    test_accuracy: float,
    weights_path: str,
) -> str:
    """One run-manifest JSON line in the schema genprobe evaluate consumes."""
    return json.dumps(
        {
            "model_id": model_id,
            "epoch": epoch,
            "optimizer": optimizer,
            "dataset": dataset,
            "hyperparams": hyperparams,
            "train_accuracy": train_accuracy,
            "test_accuracy": test_accuracy,
            "weights_path": weights_path,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
