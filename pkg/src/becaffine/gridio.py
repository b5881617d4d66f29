"""Binary field snapshots and plain CSV tables.

Snapshot layout (all integers little endian):

    bytes 0..7    magic "BECGRID1"
    u32           format version (1)
    u32           d, number of axes
    u32 * d       points per axis n_1 .. n_d
    f64 * d       cell size per axis dx_1 .. dx_d
    f64 * d       coordinate of the first point per axis
    c128 * prod n row-major field values

A 2 x 2 two-axis field therefore occupies 120 bytes:
8 + 4*4 + 8*4 + 16*4.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["GridPayload", "write_grid", "read_grid", "write_csv"]

_MAGIC = b"BECGRID1"
_VERSION = 1


@dataclass(frozen=True)
class GridPayload:
    """Field values plus the uniform-grid geometry they live on."""

    amps: np.ndarray
    dx: tuple
    origin: tuple

    @property
    def d(self) -> int:
        return self.amps.ndim

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.dx[i] * np.arange(self.amps.shape[i])


def write_grid(path, amps: np.ndarray, dx: Sequence[float],
               origin: Sequence[float]) -> None:
    amps = np.ascontiguousarray(amps, dtype=np.complex128)
    d = amps.ndim
    if not 1 <= d <= 3:
        raise ValueError("field must have 1 to 3 axes")
    dx = tuple(float(v) for v in dx)
    origin = tuple(float(v) for v in origin)
    if len(dx) != d or len(origin) != d:
        raise ValueError("dx and origin must have one entry per axis")
    if any(not np.isfinite(v) or v <= 0.0 for v in dx):
        raise ValueError("cell sizes must be positive and finite")
    if any(not np.isfinite(v) for v in origin):
        raise ValueError("origins must be finite")
    header = _MAGIC
    header += struct.pack("<2I", _VERSION, d)
    header += struct.pack(f"<{d}I", *amps.shape)
    header += struct.pack(f"<{d}d", *dx)
    header += struct.pack(f"<{d}d", *origin)
    data = amps.astype("<c16", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + data)


def read_grid(path) -> GridPayload:
    raw = Path(path).read_bytes()
    if len(raw) < len(_MAGIC) + 8 or raw[:len(_MAGIC)] != _MAGIC:
        raise ValueError("not a field snapshot file")
    off = len(_MAGIC)
    version, d = struct.unpack_from("<2I", raw, off)
    off += 8
    if version != _VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    if not 1 <= d <= 3:
        raise ValueError(f"unsupported axis count {d}")
    need = off + 4 * d + 16 * d
    if len(raw) < need:
        raise ValueError("snapshot header truncated")
    shape = struct.unpack_from(f"<{d}I", raw, off)
    off += 4 * d
    dx = struct.unpack_from(f"<{d}d", raw, off)
    off += 8 * d
    origin = struct.unpack_from(f"<{d}d", raw, off)
    off += 8 * d
    if any(n < 1 for n in shape):
        raise ValueError("axis sizes must be positive")
    if any(not np.isfinite(v) or v <= 0.0 for v in dx):
        raise ValueError("cell sizes must be positive and finite")
    count = int(np.prod(shape))
    if len(raw) != off + 16 * count:
        raise ValueError(f"snapshot payload has {len(raw) - off} bytes, "
                         f"expected {16 * count}")
    amps = np.frombuffer(raw, dtype="<c16", count=count, offset=off)
    return GridPayload(amps=amps.reshape(shape).astype(np.complex128),
                       dx=tuple(dx), origin=tuple(origin))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Plain comma-separated table; floats are written with full precision."""
    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, (np.floating,)):
            return repr(float(v))
        return str(v)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
