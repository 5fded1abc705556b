"""Dense H x W x C raster container and its binary file format.

Layout (all integers little-endian)::

    b"CSRM" | u8 version (1) | u8 dtype (0 = u8, 1 = f32) | u32 H | u32 W | u32 C
    payload: H*W*C values, row-major, channel-last
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatVersionError, InvalidArgumentError, ParseError

MAGIC = b"CSRM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBBIII")
_DTYPES = {0: np.dtype("<u1"), 1: np.dtype("<f4")}
_CODES = {np.dtype(np.uint8): 0, np.dtype(np.float32): 1}


@dataclass(frozen=True, eq=False)
class RasterMap:
    data: np.ndarray

    def __post_init__(self):
        data = self.data
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise InvalidArgumentError(f"raster must be 2D or 3D, got shape {data.shape}")
        if data.dtype not in _CODES:
            raise InvalidArgumentError(f"unsupported raster dtype {data.dtype}")
        object.__setattr__(self, "data", np.ascontiguousarray(data))

    @classmethod
    def zeros(cls, height: int, width: int, channels: int = 1, dtype=np.uint8) -> "RasterMap":
        return cls(np.zeros((height, width, channels), dtype=dtype))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def channel(self, c: int) -> np.ndarray:
        return self.data[:, :, c]

    def __eq__(self, other) -> bool:
        if not isinstance(other, RasterMap):
            return NotImplemented
        return self.data.dtype == other.data.dtype and np.array_equal(self.data, other.data)

    def to_bytes(self) -> bytes:
        h, w, c = self.data.shape
        header = _HEADER.pack(MAGIC, FORMAT_VERSION, _CODES[self.data.dtype], h, w, c)
        return header + self.data.astype(_DTYPES[_CODES[self.data.dtype]], copy=False).tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "RasterMap":
        if len(buf) < _HEADER.size:
            raise ParseError(f"raster truncated: {len(buf)} bytes, header needs {_HEADER.size}")
        magic, version, code, h, w, c = _HEADER.unpack_from(buf)
        if magic != MAGIC:
            raise ParseError(f"bad raster magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatVersionError(
                f"raster format version {version}, this build reads version {FORMAT_VERSION}"
            )
        if code not in _DTYPES:
            raise ParseError(f"unknown raster dtype code {code}")
        dt = _DTYPES[code]
        expected = h * w * c * dt.itemsize
        payload = buf[_HEADER.size :]
        if len(payload) != expected:
            raise ParseError(f"raster payload is {len(payload)} bytes, header implies {expected}")
        data = np.frombuffer(payload, dtype=dt).reshape(h, w, c)
        return cls(data.astype(dt.newbyteorder("=")))


def write_raster(path, raster: RasterMap) -> None:
    Path(path).write_bytes(raster.to_bytes())


def read_raster(path) -> RasterMap:
    return RasterMap.from_bytes(Path(path).read_bytes())
