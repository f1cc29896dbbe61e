"""Point-set containers, dataset files, synthetic generators and reference builders.

Text format (``SSD1``)::

    SSD1 d=<d> n=<count>
    <id> <label> <N>
    <x_1> ... <x_d>        # N lines
    ...

``label`` is ``-1`` for unlabeled sets. Floats are written with ``repr`` so a
save/load round trip is bit-identical. The binary twin (``SSB1``) carries the
same fields, see ``docs/FORMATS.md``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DatasetParseError

TEXT_MAGIC = "SSD1"
BINARY_MAGIC = b"SSB1"
NO_LABEL = -1

REFERENCE_METHODS = ("kmeans", "random-set", "uniform", "normal")
KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6
KMEANS_MAX_POINTS = 100_000


@dataclass(frozen=True, eq=False)
class PointSet:
    """A finite multiset of ``d``-dimensional points with optional label."""

    points: np.ndarray
    label: int | None = None
    id: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError(f"points must be an N x d matrix, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("a point set needs at least one point")
        if pts.shape[1] < 1:
            raise ValueError("points must have dimension >= 1")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "id", int(self.id))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, PointSet):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


def as_points(x) -> np.ndarray:
    """Return the ``N x d`` float64 matrix behind a PointSet or array-like."""
    if isinstance(x, PointSet):
        return x.points
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError(f"expected a nonempty N x d point matrix, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class SetDataset:
    sets: tuple[PointSet, ...]
    d: int
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        sets = tuple(self.sets)
        if not sets:
            raise ValueError("a dataset needs at least one set")
        for i, s in enumerate(sets):
            if s.d != self.d:
                raise ValueError(f"set {i} has dimension {s.d}, dataset has d={self.d}")
        object.__setattr__(self, "sets", sets)

    @classmethod
    def from_sets(cls, sets: Sequence[PointSet], class_names=None) -> "SetDataset":
        sets = tuple(sets)
        if not sets:
            raise ValueError("a dataset needs at least one set")
        return cls(sets, sets[0].d, class_names)

    def __len__(self):
        return len(self.sets)

    def __iter__(self) -> Iterator[PointSet]:
        return iter(self.sets)

    def __getitem__(self, i):
        return self.sets[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([NO_LABEL if s.label is None else s.label for s in self.sets], dtype=np.int64)

    @property
    def ids(self) -> np.ndarray:
        return np.array([s.id for s in self.sets], dtype=np.int64)

    def cardinalities(self) -> np.ndarray:
        return np.array([s.n for s in self.sets], dtype=np.int64)

    def pooled(self) -> np.ndarray:
        return np.concatenate([s.points for s in self.sets], axis=0)

    def subset(self, indices) -> "SetDataset":
        return SetDataset(tuple(self.sets[i] for i in indices), self.d, self.class_names)


# ---------------------------------------------------------------------------
# file formats


def save_dataset(ds: SetDataset, path, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        path.write_bytes(_dumps_binary(ds))
        return
    lines = [f"{TEXT_MAGIC} d={ds.d} n={len(ds)}"]
    for s in ds.sets:
        label = NO_LABEL if s.label is None else s.label
        lines.append(f"{s.id} {label} {s.n}")
        for row in s.points:
            lines.append(" ".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def load_dataset(path) -> SetDataset:
    """Load an SSD1 text or SSB1 binary dataset, sniffing the magic."""
    data = Path(path).read_bytes()
    if data[:4] == BINARY_MAGIC:
        return _loads_binary(data)
    return _loads_text(data.decode("utf-8", errors="replace"))


def _parse_header(line: str) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 3 or parts[0] != TEXT_MAGIC:
        raise DatasetParseError(f"malformed header {line!r}")
    try:
        kv = dict(p.split("=", 1) for p in parts[1:])
        d, n = int(kv["d"]), int(kv["n"])
    except (ValueError, KeyError):
        raise DatasetParseError(f"malformed header {line!r}") from None
    if d < 1 or n < 1:
        raise DatasetParseError(f"header needs d >= 1 and n >= 1, got d={d} n={n}")
    return d, n


def _loads_text(text: str) -> SetDataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DatasetParseError("empty file")
    d, n = _parse_header(lines[0])
    pos = 1
    sets = []
    for rec in range(n):
        if pos >= len(lines):
            raise DatasetParseError("unexpected end of file", rec)
        head = lines[pos].split()
        pos += 1
        try:
            sid, label, count = (int(v) for v in head)
        except ValueError:
            raise DatasetParseError(f"bad record header {' '.join(head)!r}", rec) from None
        if count < 1:
            raise DatasetParseError("zero-cardinality set", rec)
        if pos + count > len(lines):
            raise DatasetParseError("unexpected end of file", rec)
        try:
            rows = [[float(v) for v in lines[pos + j].split()] for j in range(count)]
        except ValueError:
            raise DatasetParseError("non-numeric coordinate", rec) from None
        pos += count
        if any(len(r) != d for r in rows):
            bad = next(len(r) for r in rows if len(r) != d)
            raise DatasetParseError(f"point dimension {bad} does not match d={d}", rec)
        sets.append(PointSet(np.array(rows, dtype=np.float64).reshape(count, d),
                             None if label == NO_LABEL else label, sid))
    if pos != len(lines):
        raise DatasetParseError(f"trailing data after {n} records")
    return SetDataset(tuple(sets), d)


_BIN_HEAD = struct.Struct("<4sIQ")
_BIN_REC = struct.Struct("<qiI")


def _dumps_binary(ds: SetDataset) -> bytes:
    out = [_BIN_HEAD.pack(BINARY_MAGIC, ds.d, len(ds))]
    for s in ds.sets:
        label = NO_LABEL if s.label is None else s.label
        out.append(_BIN_REC.pack(s.id, label, s.n))
        out.append(s.points.astype("<f8").tobytes())
    return b"".join(out)


def _loads_binary(data: bytes) -> SetDataset:
    if len(data) < _BIN_HEAD.size:
        raise DatasetParseError("truncated header")
    _, d, n = _BIN_HEAD.unpack_from(data, 0)
    if d < 1 or n < 1:
        raise DatasetParseError(f"header needs d >= 1 and n >= 1, got d={d} n={n}")
    pos = _BIN_HEAD.size
    sets = []
    for rec in range(n):
        if pos + _BIN_REC.size > len(data):
            raise DatasetParseError("unexpected end of file", rec)
        sid, label, count = _BIN_REC.unpack_from(data, pos)
        pos += _BIN_REC.size
        if count < 1:
            raise DatasetParseError("zero-cardinality set", rec)
        nbytes = 8 * count * d
        if pos + nbytes > len(data):
            raise DatasetParseError("unexpected end of file", rec)
        pts = np.frombuffer(data, dtype="<f8", count=count * d, offset=pos).reshape(count, d)
        pos += nbytes
        sets.append(PointSet(pts.astype(np.float64), None if label == NO_LABEL else label, sid))
    if pos != len(data):
        raise DatasetParseError(f"trailing data after {n} records")
    return SetDataset(tuple(sets), d)


# ---------------------------------------------------------------------------
# generators and preprocessing


def gen_blobs(classes: int, sets_per_class: int, d: int, card_mean: int,
              card_std: float, seed: int = 0, components: int = 4,
              component_std: float = 0.1, match_moments: bool = True) -> SetDataset:
    """Labeled sets drawn from class-specific Gaussian mixtures.

    Each class owns ``components`` equally weighted Gaussians with means
    uniform in ``[-1, 1]^d`` and isotropic spread ``component_std``. With
    ``match_moments`` every class mixture is then mapped by an affine
    whitening so its exact mean is 0 and covariance is the identity: classes
    differ only in higher-order shape, which mean and covariance pooling
    cannot see. Set cardinalities are ``max(1, floor(n))`` with
    ``n ~ Normal(card_mean, card_std)``.
    """
    if min(classes, sets_per_class, d, card_mean, components) < 1:
        raise ValueError("classes, sets_per_class, d, card_mean and components must be positive")
    if card_std < 0:
        raise ValueError("card_std must be nonnegative")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-1.0, 1.0, size=(classes, components, d))
    centers -= centers.mean(axis=1, keepdims=True)
    # per-class linear map applied to unit-normal noise
    spread = np.broadcast_to(component_std * np.eye(d), (classes, d, d)).copy()
    if match_moments:
        for c in range(classes):
            cov = centers[c].T @ centers[c] / components + component_std**2 * np.eye(d)
            w, v = np.linalg.eigh(cov)
            whiten = v @ np.diag(w**-0.5) @ v.T
            centers[c] = centers[c] @ whiten
            spread[c] = component_std * whiten
    sets = []
    sid = 0
    for c in range(classes):
        for _ in range(sets_per_class):
            n = max(1, int(np.floor(rng.normal(card_mean, card_std))))
            which = rng.integers(components, size=n)
            pts = centers[c, which] + rng.standard_normal((n, d)) @ spread[c]
            sets.append(PointSet(pts, c, sid))
            sid += 1
    return SetDataset(tuple(sets), d, tuple(f"class{c}" for c in range(classes)))


def train_test_split(ds: SetDataset, n_test: int, seed: int = 0) -> tuple[SetDataset, SetDataset]:
    if not 0 < n_test < len(ds):
        raise ValueError(f"n_test must be in [1, {len(ds) - 1}]")
    order = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))


def normalize_unit_cube(s):
    """Translate the per-axis minimum to 0 and divide by the largest extent.

    One scale is used for all axes so shapes keep their aspect ratio. A set
    with a single distinct point maps to the cube center.
    """
    pts = as_points(s)
    lo = pts.min(axis=0)
    extent = float((pts.max(axis=0) - lo).max())
    if extent == 0.0:
        out = np.full_like(pts, 0.5)
    else:
        out = (pts - lo) / extent
    if isinstance(s, PointSet):
        return PointSet(out, s.label, s.id)
    return out


# ---------------------------------------------------------------------------
# reference sets


def kmeans(x: np.ndarray, k: int, seed: int = 0, max_iter: int = KMEANS_MAX_ITER,
           tol: float = KMEANS_TOL) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns ``k x d`` centers.

    Stops when no center moves more than ``tol`` (Euclidean) or after
    ``max_iter`` iterations. Empty clusters keep their previous center.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be between 1 and the number of points ({n})")
    rng = np.random.default_rng(seed)
    sq_norms = np.einsum("ij,ij->i", x, x)

    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = np.maximum(((x - centers[0]) ** 2).sum(axis=1), 0.0)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        closest = np.minimum(closest, ((x - centers[j]) ** 2).sum(axis=1))

    for _ in range(max_iter):
        dist = sq_norms[:, None] - 2.0 * x @ centers.T + np.einsum("ij,ij->i", centers, centers)
        assign = np.argmin(dist, axis=1)
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, x)
        new = centers.copy()
        nonempty = counts > 0
        new[nonempty] = sums[nonempty] / counts[nonempty, None]
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift <= tol:
            break
    return centers


def build_reference(ds: SetDataset, method: str, M: int, seed: int = 0) -> np.ndarray:
    """Reference points (``M x d``) for the embedding, built from ``ds``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(seed)
    pooled = ds.pooled()
    if method == "kmeans":
        if M > pooled.shape[0]:
            raise ValueError(f"kmeans needs M <= pooled element count ({pooled.shape[0]}), got {M}")
        if pooled.shape[0] > KMEANS_MAX_POINTS:
            pooled = pooled[np.sort(rng.choice(pooled.shape[0], KMEANS_MAX_POINTS, replace=False))]
        return kmeans(pooled, M, seed=int(rng.integers(2**63)))
    if method == "random-set":
        pts = ds.sets[int(rng.integers(len(ds)))].points
        idx = rng.choice(pts.shape[0], M, replace=pts.shape[0] < M)
        return pts[idx].copy()
    if method == "uniform":
        return rng.uniform(pooled.min(axis=0), pooled.max(axis=0), size=(M, ds.d))
    if method == "normal":
        std = pooled.std(axis=0)
        # rounding in the mean leaves ~1e-16 spread on constant axes
        std[np.ptp(pooled, axis=0) == 0] = 0.0
        return pooled.mean(axis=0) + std * rng.standard_normal((M, ds.d))
    raise ValueError(f"unknown reference method {method!r}; expected one of {REFERENCE_METHODS}")


def default_reference_size(ds: SetDataset) -> int:
    """Median training cardinality, rounded half up."""
    return max(1, int(np.floor(np.median(ds.cardinalities()) + 0.5)))
