"""Dense float32 tensors: `.htsr` binary persistence and image-grid primitives.

File layout (little-endian): magic ``HTSR``, version byte 0x01, dtype byte
0x00 (float32), rank byte, rank u32 dims, then the row-major f32 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError, TensorLengthError

MAGIC = b"HTSR"
FORMAT_VERSION = 1
DTYPE_F32 = 0
MAX_RANK = 4

_HEADER = struct.Struct("<4sBBB")


def _check_shape(shape) -> None:
    rank = len(shape)
    if rank < 1 or rank > MAX_RANK:
        raise ValueError(f"tensor rank must be in 1..{MAX_RANK}, got {rank}")
    if any(d < 1 for d in shape):
        raise ValueError(f"tensor dims must all be >= 1, got {tuple(shape)}")


def write_tensor(t, path) -> None:
    """Write `t` (anything array-like) to `path` as an .htsr file."""
    a = np.ascontiguousarray(t, dtype="<f4")
    _check_shape(a.shape)
    blob = _HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_F32, a.ndim)
    blob += struct.pack(f"<{a.ndim}I", *a.shape)
    blob += a.tobytes(order="C")
    Path(path).write_bytes(blob)


def read_tensor(path) -> np.ndarray:
    """Read an .htsr file back into a float32 array (bit-exact inverse of write_tensor)."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise TensorLengthError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, dtype, rank = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"{path}: unsupported dtype code {dtype}")
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError(f"{path}: rank {rank} outside 1..{MAX_RANK}")
    offset = _HEADER.size + 4 * rank
    if len(blob) < offset:
        raise TensorLengthError(f"{path}: truncated dimension table")
    shape = struct.unpack_from(f"<{rank}I", blob, _HEADER.size)
    if any(d < 1 for d in shape):
        raise TensorFormatError(f"{path}: zero-sized dimension in {shape}")
    count = 1
    for d in shape:
        count *= d
    payload = blob[offset:]
    if len(payload) != 4 * count:
        raise TensorLengthError(
            f"{path}: payload holds {len(payload) // 4} of {count} declared elements"
        )
    a = np.frombuffer(payload, dtype="<f4", count=count).reshape(shape)
    return a.astype(np.float32)


def resize_bilinear(t, out_h: int, out_w: int, scale_values_as_displacements: bool = False) -> np.ndarray:
    """Corner-aligned bilinear resize of an [H, W, C] map.

    With `scale_values_as_displacements`, even channels are multiplied by
    out_w/W and odd channels by out_h/H so that a flow field's (dx, dy)
    values stay consistent with the resampled grid. Confidence-style maps
    must leave the flag off.
    """
    a = np.asarray(t)
    if a.ndim != 3:
        raise ValueError(f"expected an [H, W, C] tensor, got shape {a.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    in_h, in_w, _ = a.shape

    src_y = np.arange(out_h, dtype=np.float64) * ((in_h - 1) / (out_h - 1)) if out_h > 1 else np.zeros(1)
    src_x = np.arange(out_w, dtype=np.float64) * ((in_w - 1) / (out_w - 1)) if out_w > 1 else np.zeros(1)
    y0 = np.floor(src_y).astype(np.intp)
    x0 = np.floor(src_x).astype(np.intp)
    y0 = np.minimum(y0, in_h - 1)
    x0 = np.minimum(x0, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (src_y - y0)[:, None, None]
    fx = (src_x - x0)[None, :, None]

    a64 = a.astype(np.float64, copy=False)
    top = a64[y0, :, :]
    bot = a64[y1, :, :]
    rows = top + fy * (bot - top)          # lerp form keeps constants exact
    left = rows[:, x0, :]
    right = rows[:, x1, :]
    out = left + fx * (right - left)

    if scale_values_as_displacements:
        c = a.shape[2]
        factors = np.where(np.arange(c) % 2 == 0, out_w / in_w, out_h / in_h)
        out = out * factors[None, None, :]
    return out.astype(a.dtype if a.dtype.kind == "f" else np.float32)


def hflip(t, negate_channels=()) -> np.ndarray:
    """Reverse the columns of an [H, W, C] map and negate the listed channels."""
    a = np.asarray(t)
    if a.ndim != 3:
        raise ValueError(f"expected an [H, W, C] tensor, got shape {a.shape}")
    chans = tuple(negate_channels)
    for c in chans:
        if not 0 <= c < a.shape[2]:
            raise ValueError(f"negate channel {c} out of range for C={a.shape[2]}")
    out = a[:, ::-1, :].copy()
    for c in chans:
        out[:, :, c] = -out[:, :, c]
    return out
