"""Binary model files.

Layout::

    b"LNKM1"
    u32 n_header_lines
    n_header_lines x (u32 byte length, UTF-8 "key=value")
    parameter blocks as float32, row-major, in the order
    W_X, W_Z, Z_I, Z_C, b_I, b_C   (baseline: W, V, Z_I, Z_C, b_I, b_C)

All integers are little-endian.  Block shapes follow from the header.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelParams

MAGIC = b"LNKM1"
_U32 = struct.Struct("<I")
_INT_KEYS = ("d_x", "d_y", "k_item", "k_group", "n_items", "n_groups")
_FLOAT_KEYS = ("margin", "reg_weight", "reg_latent")


class ModelFileError(ValueError):
    pass


class BadMagicError(ModelFileError):
    pass


class TruncatedModelError(ModelFileError):
    pass


def dumps(p: ModelParams) -> bytes:
    cfg = p.config
    header = {"variant": cfg.variant, "n_items": p.n_items, "n_groups": p.n_groups}
    header.update({k: getattr(cfg, k) for k in _INT_KEYS if hasattr(cfg, k)})
    header.update({k: repr(float(getattr(cfg, k))) for k in _FLOAT_KEYS})
    parts = [MAGIC, _U32.pack(len(header))]
    for key, value in header.items():
        line = f"{key}={value}".encode("utf-8")
        parts += [_U32.pack(len(line)), line]
    for name in p.block_order():
        parts.append(np.ascontiguousarray(getattr(p, name), dtype="<f4").tobytes())
    return b"".join(parts)


def loads(data: bytes) -> ModelParams:
    if not data.startswith(MAGIC):
        raise BadMagicError("not a model file (bad magic)")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedModelError("truncated model file")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (n_lines,) = _U32.unpack(take(4))
    header = {}
    for _ in range(n_lines):
        (length,) = _U32.unpack(take(4))
        key, sep, value = take(length).decode("utf-8").partition("=")
        if not sep:
            raise ModelFileError(f"malformed header line {key!r}")
        header[key] = value
    try:
        cfg = ModelConfig(
            variant=header["variant"],
            **{k: int(header[k]) for k in ("d_x", "d_y", "k_item", "k_group")},
            **{k: float(header[k]) for k in _FLOAT_KEYS},
        )
        n_items, n_groups = int(header["n_items"]), int(header["n_groups"])
    except KeyError as e:
        raise ModelFileError(f"missing header key {e.args[0]}") from None
    p = ModelParams(cfg, n_items, n_groups)
    shapes = p.shapes()
    for name in p.block_order():
        shape = shapes[name]
        count = int(np.prod(shape))
        block = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        setattr(p, name, block.astype(np.float64))
    if pos != len(data):
        raise ModelFileError(f"{len(data) - pos} unexpected trailing bytes")
    if not p.all_finite():
        raise ModelFileError("non-finite parameter")
    return p


def save_model(p: ModelParams, path) -> None:
    Path(path).write_bytes(dumps(p))


def load_model(path) -> ModelParams:
    return loads(Path(path).read_bytes())
