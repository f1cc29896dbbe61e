"""Banks of linear slicers ``x -> theta^T x`` with directions on the unit sphere."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .dataio import as_points
from .errors import FormatError

MAGIC = b"SLB1"
_HEADER = struct.Struct("<4sIIq")


class Slicer:
    """Interface for a family of 1-D projections of ``d``-dimensional points.

    Only :class:`SlicerBank` (linear slices) is implemented. A nonlinear
    slicer would implement ``project`` with the same ``N x L`` output.
    """

    d: int
    L: int

    def project(self, points) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class SlicerBank(Slicer):
    """``L`` unit directions in ``R^d`` stored row-major as an ``L x d`` matrix."""

    directions: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        dirs = np.array(self.directions, dtype=np.float64, order="C")
        if dirs.ndim != 2 or dirs.shape[0] < 1 or dirs.shape[1] < 1:
            raise ValueError(f"directions must be a nonempty L x d matrix, got shape {dirs.shape}")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("every slicer direction must have unit norm")
        dirs.setflags(write=False)
        object.__setattr__(self, "directions", dirs)

    @property
    def L(self) -> int:
        return self.directions.shape[0]

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def project(self, points) -> np.ndarray:
        return project(self, points)

    def to_bytes(self) -> bytes:
        seed = -1 if self.seed is None else self.seed
        return _HEADER.pack(MAGIC, self.d, self.L, seed) + self.directions.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SlicerBank":
        if len(data) < _HEADER.size:
            raise FormatError("truncated slicer bank header")
        magic, d, L, seed = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatError(f"bad slicer bank magic {magic!r}")
        if len(data) != _HEADER.size + 8 * L * d:
            raise FormatError("slicer bank payload size does not match header")
        dirs = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(L, d)
        return cls(dirs.astype(np.float64), None if seed == -1 else seed)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SlicerBank":
        return cls.from_bytes(Path(path).read_bytes())


def sample_slicers(d: int, L: int, seed: int = 0) -> SlicerBank:
    """Draw ``L`` directions uniformly on ``S^{d-1}`` (normalized Gaussians)."""
    if d < 1 or L < 1:
        raise ValueError(f"d and L must be >= 1, got d={d}, L={L}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((L, d))
    norms = np.linalg.norm(g, axis=1)
    # a zero draw has probability zero; redraw rather than divide by it
    while np.any(norms == 0.0):
        bad = norms == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
    return SlicerBank(g / norms[:, None], seed)


def axis_slicers(d: int) -> SlicerBank:
    """The ``d`` coordinate axes as a bank (``L = d``)."""
    return SlicerBank(np.eye(d))


def project(bank: SlicerBank, points) -> np.ndarray:
    """Slice projections, an ``N x L`` matrix with entry ``(n, l) = theta_l . x_n``."""
    pts = as_points(points)
    if pts.shape[1] != bank.d:
        raise ValueError(f"point dimension {pts.shape[1]} does not match bank dimension {bank.d}")
    return _dot_rows(pts, bank.directions)


def _dot_cols(pts: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    # same products and summation order as _dot_rows, transposed layout
    out = dirs[:, 0:1] * pts[:, 0]
    for j in range(1, pts.shape[1]):
        out += dirs[:, j:j + 1] * pts[:, j]
    return out


def _dot_rows(pts: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    # coordinate-by-coordinate accumulation: each entry depends only on its own
    # point and direction, never on row order or BLAS blocking
    out = pts[:, 0:1] * dirs[:, 0]
    for j in range(1, pts.shape[1]):
        out += pts[:, j:j + 1] * dirs[:, j]
    return out
