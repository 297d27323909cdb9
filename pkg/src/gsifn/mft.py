"""MFT binary tensor container.

Layout (all little-endian)::

    b"MFT1" | u32 ndim | ndim x u32 dims | float32 payload, row-major

Several records may be concatenated in one file; :func:`read_mft_stream`
reads them back in order.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

MAGIC = b"MFT1"
MAX_NDIM = 8
MAX_ELEMENTS = 1 << 31


class MFTError(ValueError):
    pass


class BadMagicError(MFTError):
    pass


class TruncatedPayloadError(MFTError):
    pass


class DimOverflowError(MFTError):
    pass


def encode_mft(array) -> bytes:
    arr = np.asarray(array, dtype="<f4", order="C")
    if arr.ndim > MAX_NDIM:
        raise DimOverflowError(f"ndim {arr.ndim} exceeds {MAX_NDIM}")
    header = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return header + arr.tobytes()


def write_mft(path, array) -> None:
    Path(path).write_bytes(encode_mft(array))


def _read_record(f: BinaryIO) -> np.ndarray | None:
    magic = f.read(4)
    if not magic:
        return None
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    raw = f.read(4)
    if len(raw) < 4:
        raise TruncatedPayloadError("truncated payload: header ends before ndim")
    (ndim,) = struct.unpack("<I", raw)
    if ndim > MAX_NDIM:
        raise DimOverflowError(f"dim overflow: ndim {ndim} exceeds {MAX_NDIM}")
    raw = f.read(4 * ndim)
    if len(raw) < 4 * ndim:
        raise TruncatedPayloadError("truncated payload: header ends inside dims")
    dims = struct.unpack(f"<{ndim}I", raw)
    count = 1
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise DimOverflowError(f"dim overflow: dims {dims} exceed {MAX_ELEMENTS} elements")
    payload = f.read(4 * count)
    if len(payload) < 4 * count:
        raise TruncatedPayloadError(f"truncated payload: expected {4 * count} bytes for dims {dims}, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def decode_mft(data: bytes) -> np.ndarray:
    f = io.BytesIO(data)
    arr = _read_record(f)
    if arr is None:
        raise TruncatedPayloadError("truncated payload: empty file")
    if f.read(1):
        raise MFTError("trailing bytes after MFT record")
    return arr


def read_mft(path) -> np.ndarray:
    return decode_mft(Path(path).read_bytes())


def write_mft_stream(path, arrays) -> None:
    with open(path, "wb") as f:
        for arr in arrays:
            f.write(encode_mft(arr))


def read_mft_stream(path) -> Iterator[np.ndarray]:
    with open(path, "rb") as f:
        while (arr := _read_record(f)) is not None:
            yield arr
