"""Weight containers and run manifests.

Container layout (all integers little-endian):

    bytes 0..3    magic "GPRB"
    bytes 4..7    version, u32 (currently 1)
    bytes 8..15   index length in bytes, u64
    index         UTF-8 JSON: name -> {dtype, shape, offset, nbytes}
    payload       concatenated raw tensor data, row-major

Writing is canonical: the index is JSON with sorted keys and fixed
separators, offsets are assigned in name order, so identical tensors give
byte-identical files on every platform. The manifest is append-friendly
JSON lines, one run record per line.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .spectra import WeightTensor

MAGIC = b"GPRB"
VERSION = 1

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class ContainerError(Exception):
    """Base for all weight-container format errors."""


class BadMagic(ContainerError):
    pass


class UnsupportedVersion(ContainerError):
    pass


class CorruptIndex(ContainerError):
    pass


class TruncatedPayload(ContainerError):
    pass


class NonFiniteData(ContainerError):
    pass


class DuplicateName(ContainerError):
    pass


class IoError(ContainerError):
    pass


class ManifestError(Exception):
    """Base for run-manifest errors."""


class ParseError(ManifestError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateKey(ManifestError):
    pass


class ScaleMixing(ManifestError):
    pass


@dataclass(frozen=True)
class RunRecord:
    """One (model, epoch) observation linking weights to measured accuracy."""

    model_id: str
    epoch: int
    optimizer: str
    dataset: str
    hyperparams: dict[str, str] = field(default_factory=dict)
    train_accuracy: float = 0.0
    test_accuracy: float = 0.0
    weights_path: str = ""

    def __post_init__(self):
        if self.epoch < 0:
            raise ValueError(f"epoch must be non-negative, got {self.epoch}")
        for acc in (self.train_accuracy, self.test_accuracy):
            if not (0.0 <= acc <= 100.0):
                raise ValueError(f"accuracy {acc} outside [0, 100]")

    def to_json(self) -> str:
        return json.dumps(
            {
                "model_id": self.model_id,
                "epoch": self.epoch,
                "optimizer": self.optimizer,
                "dataset": self.dataset,
                "hyperparams": self.hyperparams,
                "train_accuracy": self.train_accuracy,
                "test_accuracy": self.test_accuracy,
                "weights_path": self.weights_path,
            },
            sort_keys=True,
            separators=(",", ":"),
        )


def write_container(tensors: list[WeightTensor], path) -> None:
    """Write tensors to a canonical container file."""
    names = [t.name for t in tensors]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise DuplicateName(f"duplicate tensor names: {dupes}")
    by_name = sorted(tensors, key=lambda t: t.name)
    index: dict[str, dict] = {}
    chunks = []
    offset = 0
    for t in by_name:
        raw = np.ascontiguousarray(t.data, dtype=_DTYPES[t.dtype]).tobytes()
        index[t.name] = {
            "dtype": t.dtype,
            "shape": list(t.shape),
            "offset": offset,
            "nbytes": len(raw),
        }
        chunks.append(raw)
        offset += len(raw)
    index_bytes = json.dumps(index, sort_keys=True, separators=(",", ":")).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(VERSION.to_bytes(4, "little"))
            fh.write(len(index_bytes).to_bytes(8, "little"))
            fh.write(index_bytes)
            for chunk in chunks:
                fh.write(chunk)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_container(path) -> list[WeightTensor]:
    """Parse a container file back to tensors, validating every invariant."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc

    if len(blob) < 4:
        raise TruncatedPayload(f"file is {len(blob)} bytes, shorter than the magic")
    if blob[:4] != MAGIC:
        raise BadMagic(f"bad magic {blob[:4]!r}")
    if len(blob) < 16:
        raise TruncatedPayload("header is truncated")
    version = int.from_bytes(blob[4:8], "little")
    if version != VERSION:
        raise UnsupportedVersion(f"container version {version} is not supported")
    index_len = int.from_bytes(blob[8:16], "little")
    if 16 + index_len > len(blob):
        raise TruncatedPayload(f"index claims {index_len} bytes but file ends early")
    try:
        index = json.loads(blob[16 : 16 + index_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptIndex(f"index is not valid JSON: {exc}") from exc
    if not isinstance(index, dict):
        raise CorruptIndex("index must be a JSON object")

    payload = blob[16 + index_len :]
    spans = []
    for name, entry in index.items():
        if not isinstance(entry, dict):
            raise CorruptIndex(f"{name}: index entry must be an object")
        missing = {"dtype", "shape", "offset", "nbytes"} - set(entry)
        if missing:
            raise CorruptIndex(f"{name}: index entry missing {sorted(missing)}")
        dtype, shape, off, nbytes = entry["dtype"], entry["shape"], entry["offset"], entry["nbytes"]
        if dtype not in _DTYPES:
            raise CorruptIndex(f"{name}: unsupported dtype {dtype!r}")
        if (
            not isinstance(shape, list)
            or not shape
            or not all(isinstance(s, int) and s >= 1 for s in shape)
        ):
            raise CorruptIndex(f"{name}: invalid shape {shape!r}")
        if not isinstance(off, int) or not isinstance(nbytes, int) or off < 0 or nbytes < 0:
            raise CorruptIndex(f"{name}: invalid offset/nbytes")
        count = int(np.prod(shape))
        if nbytes != count * _DTYPES[dtype].itemsize:
            raise CorruptIndex(f"{name}: nbytes {nbytes} does not match shape {shape} ({dtype})")
        if off + nbytes > len(payload):
            raise TruncatedPayload(f"{name}: data span [{off}, {off + nbytes}) exceeds payload")
        spans.append((off, off + nbytes, name))
    spans.sort()
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise CorruptIndex(f"tensors {n0!r} and {n1!r} overlap in the payload")

    tensors = []
    for name in sorted(index):
        entry = index[name]
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        data = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]]).astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise NonFiniteData(f"{name}: payload contains non-finite values")
        tensors.append(
            WeightTensor(name=name, shape=tuple(entry["shape"]), data=data, dtype=entry["dtype"])
        )
    return tensors


_RECORD_FIELDS = {
    "model_id": str,
    "epoch": int,
    "optimizer": str,
    "dataset": str,
    "hyperparams": dict,
    "train_accuracy": (int, float),
    "test_accuracy": (int, float),
    "weights_path": str,
}


def _parse_record(obj, line_no: int) -> RunRecord:
    if not isinstance(obj, dict):
        raise ParseError(line_no, "record must be a JSON object")
    for name, types in _RECORD_FIELDS.items():
        if name not in obj:
            raise ParseError(line_no, f"missing field {name!r}")
        if not isinstance(obj[name], types) or isinstance(obj[name], bool):
            raise ParseError(line_no, f"field {name!r} has wrong type")
    hp = obj["hyperparams"]
    if not all(isinstance(k, str) and isinstance(v, str) for k, v in hp.items()):
        raise ParseError(line_no, "hyperparams must map strings to strings")
    try:
        return RunRecord(
            model_id=obj["model_id"],
            epoch=obj["epoch"],
            optimizer=obj["optimizer"],
            dataset=obj["dataset"],
            hyperparams=hp,
            train_accuracy=float(obj["train_accuracy"]),
            test_accuracy=float(obj["test_accuracy"]),
            weights_path=obj["weights_path"],
        )
    except ValueError as exc:
        raise ParseError(line_no, str(exc)) from exc


def read_manifest(path) -> list[RunRecord]:
    """Parse a JSON-lines manifest, enforcing key uniqueness and scale consistency."""
    records = []
    seen: set[tuple[str, int]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc}") from exc
            record = _parse_record(obj, line_no)
            key = (record.model_id, record.epoch)
            if key in seen:
                raise DuplicateKey(f"duplicate (model_id, epoch) = {key}")
            seen.add(key)
            records.append(record)
    accs = [a for r in records for a in (r.train_accuracy, r.test_accuracy)]
    if accs and not (max(accs) <= 1.0 or min(accs) > 1.0):
        raise ScaleMixing("manifest mixes fractional and percentage accuracies")
    return records


def append_record(path, record: RunRecord) -> None:
    """Append one record; the single write keeps the line atomic."""
    line = record.to_json() + "\n"
    flags = os.O_WRONLY | os.O_CREAT | os.O_APPEND
    fd = os.open(path, flags, 0o644)
    try:
        os.write(fd, line.encode("utf-8"))
    finally:
        os.close(fd)
