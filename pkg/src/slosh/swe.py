"""Sliced-Wasserstein Embedding of point sets against a shared reference set.

For slice ``l`` and reference point ``m`` the embedding holds::

    (T[m, l] - theta_l . x0_m) / sqrt(L * M)

where ``T[m, l]`` is the input set's slice-``l`` quantile at
``(rank of x0_m among the reference slice + 1) / M``. Entries are laid out
slice-major: slice ``l`` occupies positions ``l*M .. l*M + M - 1``.
Euclidean distances between embeddings equal the Monte-Carlo sliced
2-Wasserstein distance whenever both sets have exactly ``M`` points.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dataio import PointSet, as_points
from .ot_core import _interp_rows, sort_rows
from .slicing import SlicerBank, _dot_cols, project

# doubles per slice block in embed (~256 KB), keeps the working set in cache
_BLOCK_DOUBLES = 1 << 15

REFERENCE_PROVENANCE = ("kmeans", "random-set", "uniform", "normal", "explicit")


@dataclass(frozen=True, eq=False)
class ReferenceSet:
    """Reference points with their cached slice projections and orderings.

    ``perm[:, l]`` sorts slice ``l`` of the reference (stable argsort) and
    ``rank[:, l]`` is its inverse, the position of each reference point in
    that sorted order.
    """

    points: np.ndarray
    projections: np.ndarray
    perm: np.ndarray
    rank: np.ndarray
    bank_digest: str
    provenance: str = "explicit"
    seed: int | None = None

    @classmethod
    def build(cls, points, bank: SlicerBank, provenance: str = "explicit",
              seed: int | None = None) -> "ReferenceSet":
        pts = np.array(as_points(points), dtype=np.float64)
        if provenance not in REFERENCE_PROVENANCE:
            raise ValueError(f"unknown reference provenance {provenance!r}")
        proj = project(bank, pts)
        perm = np.argsort(proj, axis=0, kind="stable")
        rank = np.empty_like(perm)
        np.put_along_axis(rank, perm, np.arange(pts.shape[0])[:, None], axis=0)
        for arr in (pts, proj, perm, rank):
            arr.setflags(write=False)
        return cls(pts, proj, perm, rank, bank.digest, provenance, seed)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def L(self) -> int:
        return self.projections.shape[1]

    @cached_property
    def rank_rows(self) -> np.ndarray:
        """``rank`` transposed to a contiguous ``L x M`` array."""
        return np.ascontiguousarray(self.rank.T)

    @cached_property
    def projection_rows(self) -> np.ndarray:
        return np.ascontiguousarray(self.projections.T)

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.points.astype("<f8").tobytes())
        h.update(self.bank_digest.encode())
        return h.hexdigest()

    def check_bank(self, bank: SlicerBank) -> None:
        if bank.digest != self.bank_digest:
            raise ValueError("reference set was built with a different slicer bank")


@dataclass(frozen=True, eq=False)
class SweEmbedding:
    vector: np.ndarray
    L: int
    M: int

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.L * self.M)

    def slice_block(self, l: int) -> np.ndarray:
        return self.vector[l * self.M:(l + 1) * self.M]

    def __len__(self):
        return self.vector.size


def monge_coupling(set_projections, ref: ReferenceSet) -> np.ndarray:
    """Transport of each reference slice onto the input's slice, ``M x L``.

    Entry ``(m, l)`` is the input's slice-``l`` quantile at
    ``(rank[m, l] + 1) / M``. When the input has ``M`` points this is exactly
    its ``rank[m, l]``-th order statistic.
    """
    p = np.asarray(set_projections, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1:
        raise ValueError("set projections must be a nonempty N x L matrix")
    if p.shape[1] != ref.L:
        raise ValueError(f"set projections have {p.shape[1]} slices, reference has {ref.L}")
    return _coupling_rows(sort_rows(p.T), ref).T


def _coupling_rows(sorted_rows: np.ndarray, ref: ReferenceSet) -> np.ndarray:
    # quantile at tau = (rank+1)/M sits at fractional index (rank+1)*N/M - 1
    return _interp_rows(sorted_rows, (ref.rank_rows + 1) * sorted_rows.shape[1], ref.M)


def _embed_rows(points, ref: ReferenceSet, bank: SlicerBank) -> np.ndarray:
    pts = as_points(points)
    if pts.shape[1] != bank.d or ref.d != bank.d:
        raise ValueError(
            f"dimension mismatch: set d={pts.shape[1]}, bank d={bank.d}, reference d={ref.d}")
    ref.check_bank(bank)
    n = pts.shape[0]
    out = np.empty((bank.L, ref.M))
    # slices in cache-sized blocks; each slice is independent, so blocking changes no bits
    step = max(1, _BLOCK_DOUBLES // max(n, ref.M))
    for lo in range(0, bank.L, step):
        hi = min(lo + step, bank.L)
        srt = sort_rows(_dot_cols(pts, bank.directions[lo:hi]))
        pos = (ref.rank_rows[lo:hi] + 1) * n
        out[lo:hi] = _interp_rows(srt, pos, ref.M) - ref.projection_rows[lo:hi]
    return out


def embed_matrix(points, ref: ReferenceSet, bank: SlicerBank) -> np.ndarray:
    """Embedding as an ``M x L`` matrix (unscaled transport minus reference)."""
    return _embed_rows(points, ref, bank).T


def embed(points, ref: ReferenceSet, bank: SlicerBank) -> SweEmbedding:
    """Embed one set into ``R^(L*M)``."""
    vec = _embed_rows(points, ref, bank).reshape(-1) / np.sqrt(bank.L * ref.M)
    return SweEmbedding(vec, bank.L, ref.M)


def embed_many(sets, ref: ReferenceSet, bank: SlicerBank, threads: int = 1) -> np.ndarray:
    """Embed a sequence of sets into an ``n_sets x (L*M)`` float64 matrix.

    Rows are independent, so ``threads > 1`` changes only wall time.
    """
    sets = list(sets)
    out = np.empty((len(sets), bank.L * ref.M))

    def work(i):
        out[i] = embed(sets[i], ref, bank).vector

    if threads > 1 and len(sets) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(sets))))
    else:
        for i in range(len(sets)):
            work(i)
    return out


def pairwise_distance(e1, e2) -> float:
    v1 = e1.vector if isinstance(e1, SweEmbedding) else np.asarray(e1, dtype=np.float64)
    v2 = e2.vector if isinstance(e2, SweEmbedding) else np.asarray(e2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise ValueError(f"embedding lengths differ: {v1.size} vs {v2.size}")
    diff = v1 - v2
    return float(np.sqrt(np.dot(diff, diff)))


class SweEmbedder:
    """Convenience wrapper bundling a bank and reference for repeated use."""

    name = "swe"

    def __init__(self, bank: SlicerBank, ref: ReferenceSet):
        ref.check_bank(bank)
        self.bank = bank
        self.ref = ref

    @property
    def dim(self) -> int:
        return self.bank.L * self.ref.M

    def __call__(self, s: PointSet | np.ndarray) -> np.ndarray:
        return embed(s, self.ref, self.bank).vector

    def many(self, sets, threads: int = 1) -> np.ndarray:
        return embed_many(sets, self.ref, self.bank, threads)
