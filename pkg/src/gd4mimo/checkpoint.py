"""Versioned binary checkpoint format.

Layout: 8-byte magic, u32 format version, u64 header length, UTF-8 JSON
header (model/schedule/config metadata plus an ordered list of block names
and shapes), the raw little-endian float64 block payloads in that order,
and a trailing CRC32 of everything before it. Loading validates magic,
version, and checksum before touching any state, so a truncated or corrupt
file never yields a partial model.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass

import numpy as np

from .net import NetworkParams
from .training import OptimizerState, TrainConfig

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint", "FORMAT_VERSION"]

MAGIC = b"GD4MIMO\n"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    params: NetworkParams
    opt: OptimizerState
    config: TrainConfig

    @property
    def k(self) -> int:
        return self.config.k


def _block_payloads(params: NetworkParams, opt: OptimizerState):
    for name, _ in params.specs:
        yield name, params.blocks[name]
    yield "adam_m", opt.m
    yield "adam_v", opt.v


def save_checkpoint(
    params: NetworkParams, opt: OptimizerState, cfg: TrainConfig, path: str
) -> None:
    """Write atomically (temp file + rename in the target directory)."""
    cfg = cfg.resolved()
    blocks = list(_block_payloads(params, opt))
    header = {
        "format_version": FORMAT_VERSION,
        "k": cfg.k,
        "d_hidden": params.d_hidden,
        "n_layers": params.n_layers,
        "T": cfg.T,
        "beta_start": cfg.beta_start,
        "beta_end": cfg.beta_end,
        "flags": {"literal_gate": params.literal_gate},
        "adam_step": opt.step,
        "config": dataclasses.asdict(cfg),
        "blocks": [{"name": name, "shape": list(arr.shape)} for name, arr in blocks],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", FORMAT_VERSION)
    buf += struct.pack("<Q", len(header_bytes))
    buf += header_bytes
    for _, arr in blocks:
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)

    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(bytes(buf))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str, expect_k: int | None = None) -> Checkpoint:
    with open(path, "rb") as f:
        raw = f.read()
    min_len = len(MAGIC) + 4 + 8 + 4
    if len(raw) < min_len:
        raise ValueError(f"checkpoint {path} is truncated")
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file (bad magic)")
    version = struct.unpack_from("<I", raw, len(MAGIC))[0]
    if version != FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )
    (stored_crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise ValueError(f"checkpoint {path} failed its checksum (corrupt or truncated)")

    off = len(MAGIC) + 4
    (header_len,) = struct.unpack_from("<Q", raw, off)
    off += 8
    header = json.loads(raw[off : off + header_len].decode("utf-8"))
    off += header_len

    if expect_k is not None and header["k"] != expect_k:
        raise ValueError(f"checkpoint has k={header['k']}, expected k={expect_k}")

    arrays: dict[str, np.ndarray] = {}
    for spec in header["blocks"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if off + nbytes > len(raw) - 4:
            raise ValueError(f"checkpoint {path} is truncated inside block {spec['name']}")
        arrays[spec["name"]] = (
            np.frombuffer(raw, dtype="<f8", count=count, offset=off)
            .astype(np.float64)
            .reshape(shape)
        )
        off += nbytes
    if off != len(raw) - 4:
        raise ValueError(f"checkpoint {path} has trailing bytes")

    cfg_dict = dict(header["config"])
    cfg_dict["snr_range_db"] = tuple(cfg_dict["snr_range_db"])
    cfg = TrainConfig(**cfg_dict)

    params = NetworkParams(
        header["d_hidden"],
        header["n_layers"],
        literal_gate=header["flags"]["literal_gate"],
    )
    for name, shape in params.specs:
        arr = arrays.get(name)
        if arr is None:
            raise ValueError(f"checkpoint {path} is missing block {name}")
        if arr.shape != shape:
            raise ValueError(
                f"checkpoint block {name} has shape {arr.shape}, expected {shape}"
            )
        params.blocks[name][...] = arr
    opt = OptimizerState(m=arrays["adam_m"], v=arrays["adam_v"], step=header["adam_step"])
    if opt.m.shape != (params.n_params,) or opt.v.shape != (params.n_params,):
        raise ValueError("optimizer moment vectors do not match the parameter count")
    return Checkpoint(params=params, opt=opt, config=cfg)
