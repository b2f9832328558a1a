"""Binary checkpoints: model tensors, optimizer state, step counter, rng info.

Layout (all integers little-endian):

    magic  b"FAGN"
    u16    format version (currently 1)
    u16    reserved (0)
    32B    config fingerprint (sha256 of train config + network config + schema)
    u64    step counter
    u32+   rng-state JSON blob
    table  model tensors   (name, dtype tag, shape, raw little-endian data)
    table  optimizer tensors
    32B    sha256 checksum of everything above

Loading verifies the checksum, then the fingerprint against the configs
supplied by the caller, then copies tensors into a freshly built store
by name, bitwise.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .networks import NetworkConfig, ParameterStore, init_params
from .optim import PartitionOptState
from .schema import AttributeSchema

MAGIC = b"FAGN"
VERSION = 1

# Run-length knobs are excluded: resuming a run with a larger step budget
# must load checkpoints written under the original budget.
_NON_SEMANTIC_TRAIN_FIELDS = ("total_steps", "checkpoint_interval")

_DTYPE_TAGS = {
    torch.float32: b"f4",
    torch.float64: b"f8",
    torch.int64: b"i8",
}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}
_TAG_NUMPY = {b"f4": "<f4", b"f8": "<f8", b"i8": "<i8"}


class CheckpointError(RuntimeError):
    """A checkpoint file is corrupt, truncated, or does not match the configs."""


def compute_fingerprint(train_config, network_config: NetworkConfig, schema: AttributeSchema) -> bytes:
    train = asdict(train_config)
    for field_name in _NON_SEMANTIC_TRAIN_FIELDS:
        train.pop(field_name, None)
    doc = {
        "network": asdict(network_config),
        "schema": schema.to_json_dict(),
        "train": train,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).digest()


def _write_tensor_table(buf: io.BytesIO, tensors: list[tuple[str, torch.Tensor]]) -> None:
    buf.write(struct.pack("<I", len(tensors)))
    for name, tensor in tensors:
        data = tensor.detach().cpu()
        if data.dtype not in _DTYPE_TAGS:
            raise CheckpointError(f"unsupported tensor dtype {data.dtype} for {name}")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        tag = _DTYPE_TAGS[data.dtype]
        buf.write(tag)
        shape = tuple(data.shape)
        buf.write(struct.pack("<B", len(shape)))
        for dim in shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(data.numpy().astype(_TAG_NUMPY[tag], copy=False).tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise CheckpointError("checkpoint truncated")
        out = self.blob[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_tensor_table(reader: _Reader) -> dict[str, torch.Tensor]:
    (count,) = reader.unpack("<I")
    out: dict[str, torch.Tensor] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        tag = reader.take(2)
        if tag not in _TAG_DTYPES:
            raise CheckpointError(f"unknown dtype tag {tag!r} for {name}")
        (ndim,) = reader.unpack("<B")
        shape = tuple(reader.unpack("<Q")[0] for _ in range(ndim))
        numel = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = reader.take(numel * int(_TAG_NUMPY[tag][2]))
        array = np.frombuffer(raw, dtype=_TAG_NUMPY[tag]).reshape(shape).copy()
        out[name] = torch.from_numpy(array)
    return out


def _opt_tensors(opt_states: dict[str, PartitionOptState]) -> list[tuple[str, torch.Tensor]]:
    tensors: list[tuple[str, torch.Tensor]] = []
    for part in sorted(opt_states):
        state = opt_states[part]
        tensors.append((f"{part}|step", torch.tensor(state.step, dtype=torch.int64)))
        for name in sorted(state.exp_avg):
            tensors.append((f"{part}|m|{name}", state.exp_avg[name]))
        for name in sorted(state.exp_avg_sq):
            tensors.append((f"{part}|v|{name}", state.exp_avg_sq[name]))
    return tensors


def save_checkpoint(
    store: ParameterStore,
    opt_states: dict[str, PartitionOptState],
    step: int,
    path: str | Path,
    fingerprint: bytes,
    rng_info: dict,
) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HH", VERSION, 0))
    if len(fingerprint) != 32:
        raise CheckpointError("fingerprint must be 32 bytes")
    buf.write(fingerprint)
    buf.write(struct.pack("<Q", step))
    rng_blob = json.dumps(rng_info, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(rng_blob)))
    buf.write(rng_blob)
    _write_tensor_table(buf, store.named_tensors())
    _write_tensor_table(buf, _opt_tensors(opt_states))
    payload = buf.getvalue()
    digest = hashlib.sha256(payload).digest()
    Path(path).write_bytes(payload + digest)


def load_checkpoint(
    path: str | Path,
    train_config,
    network_config: NetworkConfig,
    schema: AttributeSchema,
) -> tuple[ParameterStore, dict[str, PartitionOptState], int, dict]:
    blob = Path(path).read_bytes()
    if len(blob) < 32 + len(MAGIC):
        raise CheckpointError("checkpoint truncated")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (truncated or corrupt file)")
    reader = _Reader(payload)
    if reader.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, _ = reader.unpack("<HH")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    fingerprint = reader.take(32)
    expected = compute_fingerprint(train_config, network_config, schema)
    if fingerprint != expected:
        raise CheckpointError(
            "checkpoint fingerprint does not match the supplied configs/schema"
        )
    (step,) = reader.unpack("<Q")
    (rng_len,) = reader.unpack("<I")
    rng_info = json.loads(reader.take(rng_len).decode("utf-8"))
    model_tensors = _read_tensor_table(reader)
    opt_tensors = _read_tensor_table(reader)

    store = init_params(network_config, seed=0)
    current = dict(store.named_tensors())
    if set(current) != set(model_tensors):
        missing = sorted(set(current) - set(model_tensors))
        extra = sorted(set(model_tensors) - set(current))
        raise CheckpointError(f"tensor name mismatch: missing {missing}, unexpected {extra}")
    with torch.no_grad():
        for name, tensor in current.items():
            saved = model_tensors[name]
            if saved.dtype != tensor.dtype or tuple(saved.shape) != tuple(tensor.shape):
                raise CheckpointError(f"tensor {name} has wrong dtype/shape in checkpoint")
            tensor.copy_(saved)

    opt_states: dict[str, PartitionOptState] = {
        part: PartitionOptState() for part in store.partitions()
    }
    for name, tensor in opt_tensors.items():
        part, _, rest = name.partition("|")
        if part not in opt_states:
            raise CheckpointError(f"optimizer state for unknown partition {part!r}")
        if rest == "step":
            opt_states[part].step = int(tensor.item())
        elif rest.startswith("m|"):
            opt_states[part].exp_avg[rest[2:]] = tensor
        elif rest.startswith("v|"):
            opt_states[part].exp_avg_sq[rest[2:]] = tensor
        else:
            raise CheckpointError(f"unrecognized optimizer entry {name!r}")
    return store, opt_states, step, rng_info
