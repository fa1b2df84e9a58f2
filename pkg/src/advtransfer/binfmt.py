"""Little-endian helpers shared by the SPTZ, SPDZ and SPAD containers.

Every container starts with a 4-byte magic and a u16 version. Integers are
little-endian; arrays are float32 little-endian, row-major.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .errors import CheckpointError, MagicError, TruncatedError, VersionError

F32LE = np.dtype("<f4")


def dumps_header(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


class Writer:
    def __init__(self, magic: bytes, version: int):
        self.buf = io.BytesIO()
        self.buf.write(magic)
        self.u16(version)

    def u8(self, v: int) -> None:
        self.buf.write(struct.pack("<B", v))

    def u16(self, v: int) -> None:
        self.buf.write(struct.pack("<H", v))

    def u32(self, v: int) -> None:
        self.buf.write(struct.pack("<I", v))

    def i64(self, v: int) -> None:
        self.buf.write(struct.pack("<q", v))

    def text(self, s: str, wide: bool = False) -> None:
        data = s.encode("utf-8")
        (self.u32 if wide else self.u16)(len(data))
        self.buf.write(data)

    def header(self, obj) -> None:
        data = dumps_header(obj)
        self.u32(len(data))
        self.buf.write(data)

    def array(self, arr: np.ndarray) -> None:
        self.buf.write(np.ascontiguousarray(arr, dtype=F32LE).tobytes())

    def getvalue(self) -> bytes:
        return self.buf.getvalue()


class Reader:
    def __init__(self, data: bytes, magic: bytes, version: int, what: str):
        self.data = data
        self.pos = 0
        self.what = what
        head = self.take(len(magic))
        if head != magic:
            raise MagicError(f"{what}: bad magic {head!r}, expected {magic!r}")
        found = self.u16()
        if found != version:
            raise VersionError(f"{what}: format version {found} not supported (expected {version})")

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise TruncatedError(f"{self.what}: file truncated at byte {len(self.data)}, needed {end}")
        out = self.data[self.pos : end]
        self.pos = end
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def text(self, wide: bool = False) -> str:
        n = self.u32() if wide else self.u16()
        return self.take(n).decode("utf-8")

    def header(self):
        raw = self.take(self.u32())
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{self.what}: unreadable header ({exc})") from None

    def array(self, shape) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64)) if len(shape) else 1
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype=F32LE).astype(np.float32).reshape(shape)

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise CheckpointError(f"{self.what}: {len(self.data) - self.pos} unexpected trailing bytes")
