"""Embedding batch files (``SWE1``) and pooled-vector batch files (``POOL``).

Layout, all little-endian::

    magic     4 bytes   b"SWE1" or b"POOL"
    count     u64
    L         u32       POOL: 1
    M         u32       POOL: output dimension
    d         u32       input point dimension
    seed      i64       slicer bank seed, -1 if none
    digest    32 bytes  sha256 of the reference set (zeros for POOL)
    tag       32 bytes  POOL only: ASCII method tag, NUL padded
    records   count x { id i64, label i32, L*M f32 }
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

SWE_MAGIC = b"SWE1"
POOL_MAGIC = b"POOL"
_HEAD = struct.Struct("<4sQIIIq32s")
_TAG = struct.Struct("<32s")


@dataclass
class EmbeddingBatch:
    vectors: np.ndarray  # count x (L*M) float32
    ids: np.ndarray
    labels: np.ndarray
    L: int
    M: int
    d: int
    seed: int | None = None
    reference_digest: bytes = b"\0" * 32
    method: str | None = None

    @property
    def magic(self) -> bytes:
        return POOL_MAGIC if self.method is not None else SWE_MAGIC

    def to_bytes(self) -> bytes:
        n, width = self.vectors.shape
        if width != self.L * self.M:
            raise ValueError(f"vector width {width} != L*M = {self.L * self.M}")
        seed = -1 if self.seed is None else int(self.seed)
        out = [_HEAD.pack(self.magic, n, self.L, self.M, self.d, seed, self.reference_digest)]
        if self.method is not None:
            tag = self.method.encode("ascii")
            if len(tag) > 32:
                raise ValueError("method tag longer than 32 bytes")
            out.append(_TAG.pack(tag))
        rec = np.zeros(n, dtype=[("id", "<i8"), ("label", "<i4"), ("v", "<f4", (width,))])
        rec["id"] = self.ids
        rec["label"] = self.labels
        rec["v"] = self.vectors
        out.append(rec.tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmbeddingBatch":
        if len(data) < _HEAD.size:
            raise FormatError("truncated batch header")
        magic, n, L, M, d, seed, digest = _HEAD.unpack_from(data, 0)
        if magic not in (SWE_MAGIC, POOL_MAGIC):
            raise FormatError(f"bad batch magic {magic!r}")
        pos = _HEAD.size
        method = None
        if magic == POOL_MAGIC:
            (tag,) = _TAG.unpack_from(data, pos)
            method = tag.rstrip(b"\0").decode("ascii")
            pos += _TAG.size
        dtype = np.dtype([("id", "<i8"), ("label", "<i4"), ("v", "<f4", (L * M,))])
        if len(data) - pos != n * dtype.itemsize:
            raise FormatError("batch payload size does not match header")
        rec = np.frombuffer(data, dtype=dtype, count=n, offset=pos)
        return cls(rec["v"].astype(np.float32), rec["id"].astype(np.int64),
                   rec["label"].astype(np.int32), L, M, d, None if seed == -1 else seed,
                   digest, method)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "EmbeddingBatch":
        return cls.from_bytes(Path(path).read_bytes())
