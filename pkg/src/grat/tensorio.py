"""``.grt`` tensor files and JSON documents.

Layout of a ``.grt`` file, little-endian, no padding::

    b"GRT1" | rank: u8 | dims: rank x u64 | payload: prod(dims) x f32, row-major
"""

from __future__ import annotations

import json
import os
import struct
import sys
from pathlib import Path
from typing import Any, Union

import numpy as np

from grat.errors import BadMagic, NonFiniteInput, OverflowDims, RankZero, TruncatedFile

MAGIC = b"GRT1"
PathLike = Union[str, os.PathLike]


def encode_tensor(t) -> bytes:
    a = np.asarray(t)
    if a.ndim == 0:
        raise RankZero("cannot store a rank-0 tensor")
    if a.ndim > 255:
        raise ValueError(f"rank {a.ndim} does not fit in one byte")
    a = a.astype("<f4", copy=False)
    if not np.isfinite(a).all():
        raise NonFiniteInput("tensor payload contains NaN or Inf")
    header = MAGIC + struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + np.ascontiguousarray(a).tobytes()


def write_tensor(path: PathLike, t) -> None:
    Path(path).write_bytes(encode_tensor(t))


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"file ends inside {what} ({len(buf)} of {n} bytes)")
    return buf


def read_tensor(path: PathLike, strict: bool = True) -> np.ndarray:
    """Read a ``.grt`` file; header and size are validated before the payload is read."""
    with open(path, "rb") as f:
        size = os.fstat(f.fileno()).st_size
        magic = f.read(4)
        if magic != MAGIC[: len(magic)]:
            raise BadMagic(f"bad magic {magic!r}, expected {MAGIC!r}")
        if len(magic) < len(MAGIC):
            raise TruncatedFile("file ends inside magic")
        (rank,) = struct.unpack("<B", _read_exact(f, 1, "rank"))
        if rank == 0:
            raise RankZero("declared rank is 0")
        dims = struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank, "dims"))
        count = 1
        for d in dims:
            count *= d
        if count * 4 > sys.maxsize:
            raise OverflowDims(f"dims {dims} exceed addressable size")
        remaining = size - (5 + 8 * rank)
        if remaining < count * 4:
            raise TruncatedFile(f"payload needs {count * 4} bytes, file has {remaining}")
        if strict and remaining > count * 4:
            raise TruncatedFile(f"{remaining - count * 4} trailing bytes after payload")
        payload = _read_exact(f, count * 4, "payload")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)


def dump_json(obj: Any, path: PathLike | None = None) -> str:
    text = json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_json(path: PathLike) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
