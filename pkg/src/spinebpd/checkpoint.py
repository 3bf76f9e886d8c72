"""Binary checkpoint format.

Layout::

    b"SBPDCKPT"                 8-byte magic
    header length               uint64, little-endian
    header                      UTF-8 JSON (sorted keys)
    payload                     float64 little-endian, tensors concatenated in directory order

The header carries ``format_version``, the model config, a digest of the training
config, the tensor directory (name, shape, byte offset into the payload) and, when
present, Adam hyperparameters and step count.  Adam moments are stored as tensors
named ``adam.first_moment/<param>`` and ``adam.second_moment/<param>``.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .nn_core import ModelConfig
from .optim import AdamState

MAGIC = b"SBPDCKPT"
FORMAT_VERSION = 1
_M1, _M2 = "adam.first_moment/", "adam.second_moment/"


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    adam: AdamState | None = None
    train_config_digest: str | None = None
    meta: dict = field(default_factory=dict)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    tensors: list[tuple[str, np.ndarray]] = list(ckpt.params.items())
    adam_header = None
    if ckpt.adam is not None:
        tensors += [(_M1 + k, v) for k, v in ckpt.adam.first_moment.items()]
        tensors += [(_M2 + k, v) for k, v in ckpt.adam.second_moment.items()]
        adam_header = {"step_count": ckpt.adam.step_count, **ckpt.adam.hyper()}
    directory, chunks, offset = [], [], 0
    for name, arr in tensors:
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        directory.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": ckpt.model_config.to_dict(),
        "train_config_digest": ckpt.train_config_digest,
        "adam": adam_header,
        "meta": ckpt.meta,
        "tensors": directory,
        "payload_bytes": offset,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(chunks)


def decode_checkpoint(data: bytes) -> Checkpoint:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(data) < 16:
        raise CheckpointError(f"truncated checkpoint: {len(data)} bytes")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if len(data) < 16 + hlen:
        raise CheckpointError(f"truncated header: expected {hlen} bytes, got {len(data) - 16}")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} (expected {FORMAT_VERSION})")
    payload = data[16 + hlen:]
    declared = sum(8 * int(np.prod(t["shape"], dtype=np.int64)) for t in header["tensors"])
    if declared != header.get("payload_bytes", declared) or len(payload) != declared:
        raise CheckpointError(
            f"corrupt payload: directory declares {declared} bytes, file holds {len(payload)}"
        )
    tensors = {}
    expected_offset = 0
    for t in header["tensors"]:
        n = int(np.prod(t["shape"], dtype=np.int64))
        if t["offset"] != expected_offset:
            raise CheckpointError(f"tensor {t['name']} offset {t['offset']} != expected {expected_offset}")
        buf = payload[expected_offset:expected_offset + 8 * n]
        tensors[t["name"]] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(t["shape"])
        expected_offset += 8 * n
    params = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    adam = None
    if header.get("adam") is not None:
        a = header["adam"]
        adam = AdamState(
            step_count=a["step_count"],
            first_moment={k[len(_M1):]: v for k, v in tensors.items() if k.startswith(_M1)},
            second_moment={k[len(_M2):]: v for k, v in tensors.items() if k.startswith(_M2)},
            lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps_adam=a["eps_adam"],
        )
    return Checkpoint(
        model_config=ModelConfig.from_dict(header["model_config"]),
        params=params,
        adam=adam,
        train_config_digest=header.get("train_config_digest"),
        meta=header.get("meta", {}),
    )


def save_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    with open(path, "wb") as f:
        f.write(encode_checkpoint(ckpt))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())
