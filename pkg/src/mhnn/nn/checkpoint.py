"""Checkpoint file: ``MHCK`` magic, u32 version, u64 header length, UTF-8 JSON
header, then every registered array as little-endian float32 in registry order.

The header carries caller metadata plus ``registry``: a list of
``{"name", "kind", "shape", "offset"}`` with byte offsets relative to the start
of the data section.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"MHCK"
VERSION = 1


def _registry(module):
    entries = [(name, "param", t.data) for name, t in module.named_parameters()]
    entries += [(name, "buffer", arr) for name, arr in module.named_buffers()]
    return entries


def dumps_checkpoint(module, meta: dict) -> bytes:
    registry = []
    chunks = []
    offset = 0
    for name, kind, arr in _registry(module):
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        registry.append({"name": name, "kind": kind, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = dict(meta)
    header["registry"] = registry
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(blob)) + blob + b"".join(chunks)


def save_checkpoint(path, module, meta: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_checkpoint(module, meta))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", payload, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    start = 4 + struct.calcsize("<IQ")
    header = json.loads(payload[start : start + hlen].decode("utf-8"))
    data = payload[start + hlen :]
    arrays = {}
    for entry in header["registry"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=entry["offset"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return header, arrays


def load_into(module, arrays: dict[str, np.ndarray]) -> None:
    """Copy arrays into a module with the same registry, keeping its dtype."""
    for name, t in module.named_parameters():
        if name not in arrays or arrays[name].shape != t.data.shape:
            raise ValueError(f"checkpoint does not match parameter {name}")
        t.data = arrays[name].astype(t.data.dtype)
    for name, buf in module.named_buffers():
        if name not in arrays or arrays[name].shape != buf.shape:
            raise ValueError(f"checkpoint does not match buffer {name}")
        buf[...] = arrays[name]
