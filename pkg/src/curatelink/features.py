"""Dense observed feature matrices (item features X, group features Y).

Matrices are plain 2-D float64 numpy arrays in memory.  Two on-disk
formats are supported and detected automatically on load:

* text: ``n_rows dim`` header, then one space-separated row per line;
* binary: ``FEATv1`` magic, u64 n_rows, u64 dim (little-endian), then
  float32 little-endian values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FEATv1"
_HEADER = struct.Struct("<QQ")


class FeatureFormatError(ValueError):
    pass


def validate(m, n_rows: int | None = None, name: str = "features") -> np.ndarray:
    """Return ``m`` as a finite 2-D float64 array, optionally checking the row count."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise FeatureFormatError(f"{name}: expected a 2-D matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise FeatureFormatError(f"{name}: non-finite value")
    if n_rows is not None and m.shape[0] != n_rows:
        raise FeatureFormatError(f"{name}: shape mismatch, expected {n_rows} rows, found {m.shape[0]}")
    return m


def parse_text(text: str) -> np.ndarray:
    lines = text.splitlines()
    if not lines:
        raise FeatureFormatError("truncated: missing header")
    head = lines[0].split()
    if len(head) != 2 or not all(h.isdigit() for h in head):
        raise FeatureFormatError("line 1: header must be 'n_rows dim'")
    n_rows, dim = int(head[0]), int(head[1])
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) < n_rows:
        raise FeatureFormatError(f"truncated: expected {n_rows} rows, found {len(body)}")
    if len(body) > n_rows:
        raise FeatureFormatError(f"shape mismatch: expected {n_rows} rows, found {len(body)}")
    out = np.empty((n_rows, dim), dtype=np.float64)
    for r, line in enumerate(body):
        vals = line.split()
        if len(vals) != dim:
            raise FeatureFormatError(f"row {r + 1}: row length {len(vals)} != dim {dim}")
        try:
            out[r] = [float(v) for v in vals]
        except ValueError:
            raise FeatureFormatError(f"row {r + 1}: not a number") from None
        if not np.isfinite(out[r]).all():
            raise FeatureFormatError(f"row {r + 1}: non-finite value")
    return out


def parse_binary(data: bytes) -> np.ndarray:
    if not data.startswith(MAGIC):
        raise FeatureFormatError("bad magic")
    if len(data) < len(MAGIC) + _HEADER.size:
        raise FeatureFormatError("truncated: incomplete header")
    n_rows, dim = _HEADER.unpack_from(data, len(MAGIC))
    start = len(MAGIC) + _HEADER.size
    want = n_rows * dim * 4
    have = len(data) - start
    if have < want:
        raise FeatureFormatError(f"truncated: expected {want} payload bytes, found {have}")
    if have > want:
        raise FeatureFormatError(f"shape mismatch: {have - want} trailing bytes")
    m = np.frombuffer(data, dtype="<f4", count=n_rows * dim, offset=start)
    m = m.reshape(n_rows, dim).astype(np.float64)
    if not np.isfinite(m).all():
        raise FeatureFormatError("non-finite value")
    return m


def load_features(source) -> np.ndarray:
    data = Path(source).read_bytes()
    if data.startswith(MAGIC):
        return parse_binary(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise FeatureFormatError("neither FEATv1 binary nor UTF-8 text") from None
    return parse_text(text)


def to_binary(m) -> bytes:
    m = validate(m)
    return MAGIC + _HEADER.pack(*m.shape) + m.astype("<f4").tobytes(order="C")


def to_text(m) -> str:
    m = validate(m)
    rows = [f"{m.shape[0]} {m.shape[1]}"]
    rows.extend(" ".join(f"{v:.9g}" for v in row) for row in m)
    return "\n".join(rows) + "\n"


def save_features(m, sink, format: str = "binary") -> None:
    if format == "binary":
        Path(sink).write_bytes(to_binary(m))
    elif format == "text":
        Path(sink).write_text(to_text(m), encoding="utf-8")
    else:
        raise ValueError(f"unknown feature format {format!r}")


def l2_normalize_rows(m) -> np.ndarray:
    """Scale each nonzero row to unit Euclidean norm; zero rows stay zero."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)
