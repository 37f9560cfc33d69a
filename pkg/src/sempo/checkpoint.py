"""Versioned single-file checkpoints.

Layout::

    b"SEMPO" | version (1 byte) | header length (uint32 LE) | UTF-8 JSON header
    | raw little-endian tensor payloads in manifest order | CRC32 of payload (uint32 LE)

The header holds the config, the tensor manifest (name, shape, dtype, byte
offset, byte length, relative to the payload start), the rng state and the
training stage.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .config import Config
from .model import SEMPO
from .training import OptimizerState

MAGIC = b"SEMPO"
VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint loading failures."""


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or unsupported version."""


class CheckpointTruncatedError(CheckpointError):
    """File ends before the declared header or payload."""


class CheckpointManifestError(CheckpointError):
    """Manifest disagrees with the payload or with the model built from the config."""


class CheckpointCorruptError(CheckpointError):
    """Payload CRC mismatch."""


_DTYPES = {"float32": "<f4", "float64": "<f8"}


def _encode_tensor(arr: np.ndarray) -> tuple[str, bytes]:
    name = np.dtype(arr.dtype).name
    if name not in _DTYPES:
        raise TypeError(f"cannot serialise dtype {name}")
    return name, np.ascontiguousarray(arr, dtype=_DTYPES[name]).tobytes()


def save_checkpoint(model: SEMPO, path: str | os.PathLike, opt: OptimizerState | None = None,
                    rng: np.random.Generator | None = None, extra: dict | None = None) -> None:
    tensors: list[tuple[str, np.ndarray]] = [(p.name, p.data) for p in model.params]
    opt_meta = None
    if opt is not None:
        opt_meta = {k: getattr(opt, k) for k in ("lr", "weight_decay", "beta1", "beta2", "eps", "t")}
        for name in sorted(opt.m):
            tensors.append((f"__opt__.m.{name}", opt.m[name]))
            tensors.append((f"__opt__.v.{name}", opt.v[name]))

    manifest, chunks, offset = [], [], 0
    for name, arr in tensors:
        dtype, raw = _encode_tensor(arr)
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": dtype,
                         "offset": offset, "length": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "config": model.config.to_dict(),
        "tensors": manifest,
        "rng_state": rng.bit_generator.state if rng is not None else None,
        "stage": model.stage,
        "seed": model.seed,
        "optimizer": opt_meta,
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = MAGIC + bytes([VERSION]) + struct.pack("<I", len(hbytes)) + hbytes + payload
    blob += struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def read_checkpoint(path: str | os.PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse and validate a checkpoint file into (header, tensors)."""
    blob = Path(path).read_bytes()
    prefix = len(MAGIC) + 1 + 4
    if len(blob) < len(MAGIC) + 1:
        raise CheckpointTruncatedError(f"{path}: file too short ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {blob[:len(MAGIC)]!r}, not a SEMPO checkpoint")
    version = blob[len(MAGIC)]
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    if len(blob) < prefix:
        raise CheckpointTruncatedError(f"{path}: header length missing")
    (hlen,) = struct.unpack("<I", blob[len(MAGIC) + 1 : prefix])
    if len(blob) < prefix + hlen:
        raise CheckpointTruncatedError(f"{path}: header truncated")
    try:
        header = json.loads(blob[prefix : prefix + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable header ({exc})") from exc

    body = blob[prefix + hlen :]
    declared = sum(int(t["length"]) for t in header.get("tensors", []))
    if len(body) < declared + 4:
        raise CheckpointTruncatedError(f"{path}: payload truncated ({len(body)} bytes, need {declared + 4})")
    if len(body) != declared + 4:
        raise CheckpointManifestError(f"{path}: manifest declares {declared} payload bytes, file holds {len(body) - 4}")
    payload, (crc,) = body[:declared], struct.unpack("<I", body[declared:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CheckpointCorruptError(f"{path}: payload CRC mismatch")

    tensors = {}
    expected_offset = 0
    for t in header["tensors"]:
        name, dtype, off, length = t["name"], t["dtype"], int(t["offset"]), int(t["length"])
        if dtype not in _DTYPES:
            raise CheckpointManifestError(f"{path}: tensor {name!r} has unsupported dtype {dtype}")
        nbytes = int(np.prod(t["shape"], dtype=np.int64)) * np.dtype(_DTYPES[dtype]).itemsize
        if off != expected_offset or length != nbytes:
            raise CheckpointManifestError(f"{path}: tensor {name!r} offset/length disagree with its shape")
        arr = np.frombuffer(payload, dtype=_DTYPES[dtype], count=nbytes // np.dtype(_DTYPES[dtype]).itemsize,
                            offset=off).reshape(t["shape"])
        tensors[name] = arr.astype(np.dtype(dtype), copy=True)
        expected_offset += length
    return header, tensors


def load_checkpoint(path: str | os.PathLike, with_optimizer: bool = False):
    """Rebuild the model from a checkpoint; optionally also the optimizer and rng."""
    header, tensors = read_checkpoint(path)
    try:
        config = Config.from_dict(header["config"])
    except Exception as exc:  # noqa: BLE001 - surface as a checkpoint problem
        raise CheckpointManifestError(f"{path}: stored config is invalid ({exc})") from exc
    model = SEMPO(config, seed=header.get("seed"))
    for p in model.params:
        if p.name not in tensors:
            raise CheckpointManifestError(f"{path}: missing tensor {p.name!r} in manifest")
        arr = tensors[p.name]
        if arr.shape != p.shape:
            raise CheckpointManifestError(f"{path}: tensor {p.name!r} has shape {arr.shape}, model expects {p.shape}")
        p.data = arr
        p.grad = np.zeros_like(arr)
    model.stage = header.get("stage", "init")
    if not with_optimizer:
        return model

    opt = None
    meta = header.get("optimizer")
    if meta is not None:
        opt = OptimizerState(**meta)
        for name, arr in tensors.items():
            if name.startswith("__opt__.m."):
                opt.m[name[len("__opt__.m."):]] = arr
            elif name.startswith("__opt__.v."):
                opt.v[name[len("__opt__.v."):]] = arr
    rng = None
    if header.get("rng_state") is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = header["rng_state"]
    return model, opt, rng
