"""Checkpoint container: JSON header (version, config snapshot, metadata,
key table with shapes and byte offsets) followed by little-endian float32
payloads, one per named array, in sorted name order.

Byte layout:

    magic "SCMC" | uint32 version | uint64 header_len | header JSON | payload

Saving the same arrays twice produces identical bytes, so round-trip
equality can be checked at the file level.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"SCMC"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


@dataclass
class Checkpoint:
    version: int
    config: dict
    metadata: dict
    arrays: dict[str, np.ndarray]


def save_checkpoint(path, arrays: dict[str, np.ndarray], config: dict | None = None,
                    metadata: dict | None = None) -> None:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    names = sorted(arrays)
    table = []
    payload = bytearray()
    for name in names:
        a = np.ascontiguousarray(arrays[name], dtype="<f4")
        table.append({"name": name, "shape": list(a.shape), "offset": len(payload)})
        payload += a.tobytes()
    header = json.dumps(
        {"config": config or {}, "metadata": metadata or {}, "arrays": table},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    magic, version, header_len = _PREFIX.unpack(blob[: _PREFIX.size])
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header_end = _PREFIX.size + header_len
    try:
        header = json.loads(blob[_PREFIX.size:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    payload = blob[header_end:]
    arrays = {}
    for ent in header["arrays"]:
        shape = tuple(ent["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = ent["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=start)
        arrays[ent["name"]] = arr.reshape(shape).copy()
    return Checkpoint(version, header.get("config", {}), header.get("metadata", {}), arrays)


def model_arrays(model: torch.nn.Module) -> dict[str, np.ndarray]:
    """Full state dict (parameters and buffers) as float32 numpy arrays."""
    return {
        name: tensor.detach().cpu().numpy().astype(np.float32)
        for name, tensor in model.state_dict().items()
    }


def load_model_arrays(model: torch.nn.Module, arrays: dict[str, np.ndarray],
                      prefix_filter: str | None = None) -> None:
    """Restore state-dict entries from checkpoint arrays, casting each back
    to the model's own dtype. Raises on missing keys or shape mismatches."""
    target = model.state_dict()
    wanted = sorted(
        k for k in target if prefix_filter is None or k.startswith(prefix_filter)
    )
    missing = [k for k in wanted if k not in arrays]
    if missing:
        more = f" (+{len(missing) - 1} more)" if len(missing) > 1 else ""
        raise CheckpointError(f"checkpoint is missing required key {missing[0]!r}{more}")
    update = {}
    for k in wanted:
        arr = arrays[k]
        if tuple(arr.shape) != tuple(target[k].shape):
            raise CheckpointError(
                f"shape mismatch for {k!r}: checkpoint {tuple(arr.shape)} "
                f"vs model {tuple(target[k].shape)}"
            )
        update[k] = torch.from_numpy(arr.copy()).to(target[k].dtype)
    model.load_state_dict(update, strict=False)


@dataclass(frozen=True)
class ImportReport:
    loaded: tuple[str, ...]
    missing: tuple[str, ...]
    ignored: tuple[str, ...]


def import_encoder(ckpt: Checkpoint, model: torch.nn.Module,
                   include_subsample: bool = True) -> ImportReport:
    """Load all encoder keys from a checkpoint into a full model, leaving the
    head at its fresh initialization.

    Every required encoder key must be present with a matching shape;
    anything else in the checkpoint (head keys, optimizer arrays, the
    subsampling stack when excluded) is ignored and reported as such.
    """
    target = model.state_dict()
    required = sorted(
        k for k in target
        if k.startswith("encoder.")
        and (include_subsample or not k.startswith("encoder.subsample."))
    )
    if not required:
        raise CheckpointError("model has no encoder keys to import into")
    missing = tuple(k for k in required if k not in ckpt.arrays)
    if missing:
        more = f" (+{len(missing) - 1} more)" if len(missing) > 1 else ""
        raise CheckpointError(f"checkpoint is missing encoder key {missing[0]!r}{more}")
    for k in required:
        if tuple(ckpt.arrays[k].shape) != tuple(target[k].shape):
            raise CheckpointError(
                f"shape mismatch for {k!r}: checkpoint {tuple(ckpt.arrays[k].shape)} "
                f"vs model {tuple(target[k].shape)}"
            )
    update = {
        k: torch.from_numpy(ckpt.arrays[k].copy()).to(target[k].dtype) for k in required
    }
    model.load_state_dict(update, strict=False)
    ignored = tuple(sorted(set(ckpt.arrays) - set(required)))
    return ImportReport(loaded=tuple(required), missing=(), ignored=ignored)


def optimizer_arrays(model: torch.nn.Module, optimizer: torch.optim.Optimizer) -> dict[str, np.ndarray]:
    """AdamW state (step, exp_avg, exp_avg_sq) keyed by parameter name, for
    resumable checkpoints. Parameters that have not been stepped yet (for
    example a frozen encoder) simply have no entries."""
    out = {}
    for name, param in model.named_parameters():
        state = optimizer.state.get(param)
        if not state:
            continue
        out[f"optim.{name}.step"] = np.asarray(float(state["step"]), dtype=np.float32)
        out[f"optim.{name}.exp_avg"] = state["exp_avg"].detach().cpu().numpy().astype(np.float32)
        out[f"optim.{name}.exp_avg_sq"] = state["exp_avg_sq"].detach().cpu().numpy().astype(np.float32)
    return out


def restore_optimizer_state(model: torch.nn.Module, optimizer: torch.optim.Optimizer,
                            arrays: dict[str, np.ndarray]) -> None:
    for name, param in model.named_parameters():
        key = f"optim.{name}.step"
        if key not in arrays:
            continue
        optimizer.state[param] = {
            "step": torch.tensor(float(arrays[key])),
            "exp_avg": torch.from_numpy(arrays[f"optim.{name}.exp_avg"].copy()).to(param.dtype),
            "exp_avg_sq": torch.from_numpy(arrays[f"optim.{name}.exp_avg_sq"].copy()).to(param.dtype),
        }
