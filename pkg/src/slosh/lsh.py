"""Locality-sensitive hashing over embedding vectors.

Two families are provided:

* floor hashing ``h(u) = floor((a . u + b) / w)`` with Gaussian ``a`` and
  ``b ~ U[0, w)``. For a pair at distance ``r`` one function collides with
  probability ``int_0^w (1/r) f(t/r) (1 - t/w) dt`` where ``f`` is the
  density of ``|N(0, 1)|`` (see :func:`floor_collision_probability`).
* sign hashing ``h(u) = [a . u + b >= 0]``. With ``b = 0`` a ``k``-bit code
  collides with probability ``(1 - angle(u, v) / pi) ** k``.

:class:`BucketIndex` stores ``T`` tables keyed by ``k``-tuples of floor
hashes and reranks the union of matching buckets by exact distance.
:class:`BinaryCodeIndex` stores packed sign codes and ranks every record by
Hamming distance, ties broken by ascending id. Both expose
``query(u, k_neighbors)``.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from .errors import FormatError

MAGIC = b"SLSH"
VARIANT_BUCKET = 0
VARIANT_BINARY = 1
VARIANT_EXACT = 2
OFFSET_MODES = ("zero", "uniform")
OMEGA_SAMPLE = 1000

_HEAD = struct.Struct("<4sB3xqQI")


@dataclass(frozen=True, eq=False)
class FloorHashFamily:
    a: np.ndarray
    b: np.ndarray
    omega: float
    seed: int | None = None

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("bucket width omega must be positive")
        if np.any(self.b < 0) or np.any(self.b >= self.omega):
            raise ValueError("offsets b must lie in [0, omega)")

    @property
    def k(self) -> int:
        return self.a.shape[0]

    @property
    def dim(self) -> int:
        return self.a.shape[1]


@dataclass(frozen=True, eq=False)
class SignHashFamily:
    a: np.ndarray
    b: np.ndarray
    seed: int | None = None

    @property
    def k(self) -> int:
        return self.a.shape[0]

    @property
    def dim(self) -> int:
        return self.a.shape[1]


def sample_floor_family(dim: int, k: int, omega: float, seed: int = 0) -> FloorHashFamily:
    if dim < 1 or k < 1:
        raise ValueError("dim and k must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((k, dim))
    b = rng.uniform(0.0, omega, size=k)
    return FloorHashFamily(a, b, float(omega), seed)


def sample_sign_family(dim: int, k: int, seed: int = 0, b=None) -> SignHashFamily:
    if dim < 1 or k < 1:
        raise ValueError("dim and k must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((k, dim))
    b = np.zeros(k) if b is None else np.broadcast_to(np.asarray(b, dtype=np.float64), (k,)).copy()
    return SignHashFamily(a, b, seed)


def _check_dim(u, dim):
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != dim:
        raise ValueError(f"vector dimension {u.shape[-1]} does not match hash dimension {dim}")
    return u


def floor_hash(fam: FloorHashFamily, u) -> np.ndarray:
    """Integer codes, shape ``(k,)`` for one vector or ``(n, k)`` for a batch."""
    u = _check_dim(u, fam.dim)
    return np.floor((u @ fam.a.T + fam.b) / fam.omega).astype(np.int64)


def sign_hash(fam: SignHashFamily, u) -> np.ndarray:
    """Bits as ``uint8`` 0/1, shape ``(k,)`` or ``(n, k)``."""
    u = _check_dim(u, fam.dim)
    return (u @ fam.a.T + fam.b >= 0).astype(np.uint8)


def floor_collision_probability(r: float, omega: float) -> float:
    """Single-function collision probability of the Gaussian floor hash."""
    if r == 0:
        return 1.0
    # substitute s = t / r so the density peak has unit width for any r;
    # the folded-normal tail beyond s = 40 is below double precision
    f = stats.halfnorm.pdf
    c = r / omega
    val, _ = integrate.quad(lambda s: f(s) * (1.0 - s * c), 0.0, min(1.0 / c, 40.0))
    return float(val)


def sign_collision_probability(cos_angle: float, k: int = 1) -> float:
    return float((1.0 - np.arccos(np.clip(cos_angle, -1.0, 1.0)) / np.pi) ** k)


def multi_table_probability(p: float, k: int, T: int) -> float:
    """Probability of colliding in at least one of ``T`` tables of ``k`` functions."""
    return 1.0 - (1.0 - p**k) ** T


def median_pair_distance(x: np.ndarray, sample: int = OMEGA_SAMPLE, seed: int = 0) -> float:
    """Median pairwise distance over a bootstrap sample of at most ``sample`` rows."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        return 1.0
    rng = np.random.default_rng(seed)
    if n > sample:
        x = x[rng.choice(n, sample, replace=True)]
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    iu = np.triu_indices(x.shape[0], 1)
    med = float(np.sqrt(max(np.median(np.maximum(d2[iu], 0.0)), 0.0)))
    return med if med > 0 else 1.0


@dataclass(frozen=True)
class QueryResult:
    ids: np.ndarray
    labels: np.ndarray
    distances: np.ndarray
    underfull: bool = False

    def __len__(self):
        return self.ids.size


def _records(records, ids, labels):
    x = np.asarray(records, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("records must be a nonempty n x D matrix")
    n = x.shape[0]
    ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    labels = np.full(n, -1, dtype=np.int32) if labels is None else np.asarray(labels, dtype=np.int32)
    if ids.shape != (n,) or labels.shape != (n,):
        raise ValueError("ids and labels must have one entry per record")
    return x, ids, labels


def _rank(keys: np.ndarray, ids: np.ndarray, rows: np.ndarray, k: int, exclude_id):
    if exclude_id is not None:
        keep = ids[rows] != exclude_id
        rows, keys = rows[keep], keys[keep]
    order = np.lexsort((ids[rows], keys))[:k]
    return rows[order], keys[order]


class _IndexBase:
    variant: int

    def __len__(self):
        return self.ids.size

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())


class ExactIndex(_IndexBase):
    """Exhaustive Euclidean scan; the reference answer for recall checks."""

    variant = VARIANT_EXACT

    def __init__(self, records, ids=None, labels=None, seed=None):
        self.embeddings, self.ids, self.labels = _records(records, ids, labels)
        self.seed = seed

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def query(self, u, k_neighbors: int, exclude_id=None) -> QueryResult:
        u = _check_dim(u, self.dim)
        dist = np.sqrt(np.sum((self.embeddings - u) ** 2, axis=1))
        rows, keys = _rank(dist, self.ids, np.arange(len(self)), k_neighbors, exclude_id)
        return QueryResult(self.ids[rows], self.labels[rows], keys, rows.size < k_neighbors)

    def _payload(self, buf):
        buf.write(self.embeddings.astype("<f8").tobytes())

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        _write_head(buf, self)
        self._payload(buf)
        return buf.getvalue()


class BucketIndex(_IndexBase):
    """``T`` hash tables, each keyed by a ``k``-tuple of floor hashes."""

    variant = VARIANT_BUCKET

    def __init__(self, families, embeddings, ids, labels, codes, seed=None):
        self.families = list(families)
        self.embeddings = embeddings
        self.ids = ids
        self.labels = labels
        self.codes = codes  # T x n x k int64
        self.seed = seed
        self.tables = []
        for t in range(len(self.families)):
            table: dict[bytes, list[int]] = {}
            for row, code in enumerate(codes[t]):
                table.setdefault(code.tobytes(), []).append(row)
            self.tables.append(table)

    @property
    def k(self) -> int:
        return self.families[0].k

    @property
    def T(self) -> int:
        return len(self.families)

    @property
    def omega(self) -> float:
        return self.families[0].omega

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def candidates(self, u) -> np.ndarray:
        u = _check_dim(u, self.dim)
        found = set()
        for fam, table in zip(self.families, self.tables):
            found.update(table.get(floor_hash(fam, u).tobytes(), ()))
        return np.array(sorted(found), dtype=np.intp)

    def query(self, u, k_neighbors: int, exclude_id=None) -> QueryResult:
        rows = self.candidates(u)
        if rows.size == 0:
            empty = np.empty(0)
            return QueryResult(empty.astype(np.int64), empty.astype(np.int32), empty, True)
        diff = self.embeddings[rows] - np.asarray(u, dtype=np.float64)
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        rows, keys = _rank(dist, self.ids, rows, k_neighbors, exclude_id)
        return QueryResult(self.ids[rows], self.labels[rows], keys, rows.size < k_neighbors)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        _write_head(buf, self)
        buf.write(struct.pack("<IId", self.k, self.T, self.omega))
        buf.write(self.embeddings.astype("<f8").tobytes())
        for fam in self.families:
            buf.write(fam.a.astype("<f8").tobytes())
            buf.write(fam.b.astype("<f8").tobytes())
        buf.write(self.codes.astype("<i8").tobytes())
        return buf.getvalue()


class BinaryCodeIndex(_IndexBase):
    """Packed sign codes ranked by Hamming distance."""

    variant = VARIANT_BINARY

    def __init__(self, family: SignHashFamily, codes: np.ndarray, ids, labels, seed=None):
        self.family = family
        self.codes = codes  # n x ceil(k_bits / 8) uint8
        self.ids = ids
        self.labels = labels
        self.seed = seed

    @property
    def k_bits(self) -> int:
        return self.family.k

    @property
    def dim(self) -> int:
        return self.family.dim

    def encode(self, u) -> np.ndarray:
        return np.packbits(sign_hash(self.family, u), axis=-1)

    def hamming(self, u) -> np.ndarray:
        q = self.encode(u)
        return np.bitwise_count(self.codes ^ q).sum(axis=1, dtype=np.int64)

    def query(self, u, k_neighbors: int, exclude_id=None) -> QueryResult:
        ham = self.hamming(u)
        rows, keys = _rank(ham, self.ids, np.arange(len(self)), k_neighbors, exclude_id)
        return QueryResult(self.ids[rows], self.labels[rows], keys.astype(np.float64),
                           rows.size < k_neighbors)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        _write_head(buf, self)
        buf.write(struct.pack("<I", self.k_bits))
        buf.write(self.family.a.astype("<f8").tobytes())
        buf.write(self.family.b.astype("<f8").tobytes())
        buf.write(self.codes.tobytes())
        return buf.getvalue()


def build_bucket_index(records, k: int, T: int, omega: float | None = None, seed: int = 0,
                       ids=None, labels=None) -> BucketIndex:
    """Insert every record into ``T`` tables of ``k`` floor hashes each.

    ``omega`` defaults to the median pairwise record distance.
    """
    if k < 1 or T < 1:
        raise ValueError(f"k and T must be >= 1, got k={k}, T={T}")
    x, ids, labels = _records(records, ids, labels)
    if omega is None:
        omega = median_pair_distance(x, seed=seed)
    seeds = np.random.SeedSequence(seed).generate_state(T, dtype=np.uint64)
    families = [sample_floor_family(x.shape[1], k, omega, int(s)) for s in seeds]
    codes = np.stack([floor_hash(fam, x) for fam in families])
    return BucketIndex(families, x, ids, labels, codes, seed)


def query_bucket_index(idx: BucketIndex, u, k_neighbors: int, exclude_id=None) -> QueryResult:
    return idx.query(u, k_neighbors, exclude_id)


def build_binary_index(records, k_bits: int = 1024, seed: int = 0, offsets: str = "zero",
                       ids=None, labels=None) -> BinaryCodeIndex:
    """Sign-code index over ``records``.

    ``offsets="zero"`` uses hyperplanes through the origin (angular codes).
    ``offsets="uniform"`` draws each threshold uniformly between the min and
    max projection of the records on that hyperplane; the expected Hamming
    distance then grows with Euclidean distance rather than angle.
    """
    if k_bits < 1:
        raise ValueError("k_bits must be >= 1")
    if offsets not in OFFSET_MODES:
        raise ValueError(f"offsets must be one of {OFFSET_MODES}, got {offsets!r}")
    x, ids, labels = _records(records, ids, labels)
    fam = sample_sign_family(x.shape[1], k_bits, seed)
    if offsets == "uniform":
        proj = x @ fam.a.T
        rng = np.random.default_rng([seed, 1])
        b = -rng.uniform(proj.min(axis=0), proj.max(axis=0))
        fam = SignHashFamily(fam.a, b, seed)
    codes = np.packbits(sign_hash(fam, x), axis=1)
    return BinaryCodeIndex(fam, codes, ids, labels, seed)


def query_binary_index(idx: BinaryCodeIndex, u, k_neighbors: int, exclude_id=None) -> QueryResult:
    return idx.query(u, k_neighbors, exclude_id)


# ---------------------------------------------------------------------------
# persistence


def _write_head(buf, idx):
    seed = -1 if idx.seed is None else int(idx.seed)
    buf.write(_HEAD.pack(MAGIC, idx.variant, seed, len(idx), idx.dim))
    buf.write(idx.ids.astype("<i8").tobytes())
    buf.write(idx.labels.astype("<i4").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated index file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def array(self, dtype: str, shape) -> np.ndarray:
        count = int(np.prod(shape))
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(count * dt.itemsize), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))


def index_from_bytes(data: bytes):
    r = _Reader(data)
    magic, variant, seed, n, dim = r.unpack(_HEAD.format)
    if magic != MAGIC:
        raise FormatError(f"bad index magic {magic!r}")
    seed = None if seed == -1 else seed
    ids = r.array("<i8", (n,))
    labels = r.array("<i4", (n,))
    if variant == VARIANT_BUCKET:
        k, T, omega = r.unpack("<IId")
        emb = r.array("<f8", (n, dim))
        fams = []
        for _ in range(T):
            a = r.array("<f8", (k, dim))
            b = r.array("<f8", (k,))
            fams.append(FloorHashFamily(a, b, omega))
        codes = r.array("<i8", (T, n, k))
        idx = BucketIndex(fams, emb, ids, labels, codes, seed)
    elif variant == VARIANT_BINARY:
        (k_bits,) = r.unpack("<I")
        a = r.array("<f8", (k_bits, dim))
        b = r.array("<f8", (k_bits,))
        codes = r.array("u1", (n, (k_bits + 7) // 8))
        idx = BinaryCodeIndex(SignHashFamily(a, b, seed), codes, ids, labels, seed)
    elif variant == VARIANT_EXACT:
        emb = r.array("<f8", (n, dim))
        idx = ExactIndex(emb, ids, labels, seed)
    else:
        raise FormatError(f"unknown index variant {variant}")
    if r.pos != len(data):
        raise FormatError("trailing bytes after index payload")
    return idx


def load_index(path):
    return index_from_bytes(Path(path).read_bytes())


def save_index(idx, path) -> None:
    idx.save(path)
