"""Embed -> hash -> retrieve pipeline and retrieval metrics."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dataio, lsh
from .dataio import SetDataset
from .errors import NotFittedError
from .poolings import CovConfig, FsPoolConfig, GemConfig, PoolingEmbedder
from .slicing import SlicerBank, sample_slicers
from .swe import ReferenceSet, SweEmbedder

log = logging.getLogger(__name__)

EMBEDDERS = ("swe", "gem", "cov", "fspool_di")
INDEX_VARIANTS = ("binary", "bucket", "exact")


@dataclass(frozen=True)
class PipelineConfig:
    embedder: str = "swe"
    L: int = 16
    M: int | None = None
    reference: str = "kmeans"
    p_max: int = 1
    lam: float = 0.0
    M_grid: int = 16
    index: str = "binary"
    k_bits: int = 1024
    offsets: str = "uniform"
    k: int = 8
    T: int = 16
    omega: float | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.embedder not in EMBEDDERS:
            raise ValueError(f"unknown embedder {self.embedder!r}; expected one of {EMBEDDERS}")
        if self.index not in INDEX_VARIANTS:
            raise ValueError(f"unknown index variant {self.index!r}; expected one of {INDEX_VARIANTS}")
        if self.reference not in dataio.REFERENCE_METHODS:
            raise ValueError(f"unknown reference method {self.reference!r}")
        if self.L < 1 or (self.M is not None and self.M < 1):
            raise ValueError("L and M must be >= 1")
        if self.k_bits < 1 or self.k < 1 or self.T < 1:
            raise ValueError("k_bits, k and T must be >= 1")

    @property
    def method_name(self) -> str:
        if self.embedder == "swe":
            return f"swe-L{self.L}"
        if self.embedder == "gem":
            return f"gem-{self.p_max}"
        if self.embedder == "fspool_di":
            return f"fspool-{self.M_grid}"
        return "cov"

    def child_seeds(self) -> dict[str, int]:
        bank, ref, index = np.random.SeedSequence(self.seed).generate_state(3, dtype=np.uint64)
        return {"bank": int(bank >> np.uint64(1)), "reference": int(ref >> np.uint64(1)),
                "index": int(index >> np.uint64(1))}


class Pipeline:
    """Set retrieval: an embedder followed by an LSH (or exact) index."""

    def __init__(self, config: PipelineConfig = PipelineConfig(), **overrides):
        self.config = replace(config, **overrides) if overrides else config
        self.embedder = None
        self.index = None
        self.d = None

    @property
    def fitted(self) -> bool:
        return self.index is not None

    def _make_embedder(self, train: SetDataset):
        cfg = self.config
        seeds = cfg.child_seeds()
        if cfg.embedder == "swe":
            bank = sample_slicers(train.d, cfg.L, seeds["bank"])
            M = cfg.M if cfg.M is not None else dataio.default_reference_size(train)
            pts = dataio.build_reference(train, cfg.reference, M, seeds["reference"])
            ref = ReferenceSet.build(pts, bank, cfg.reference, seeds["reference"])
            return SweEmbedder(bank, ref)
        if cfg.embedder == "gem":
            return PoolingEmbedder("gem", GemConfig(cfg.p_max))
        if cfg.embedder == "cov":
            return PoolingEmbedder("cov", CovConfig(cfg.lam))
        return PoolingEmbedder("fspool_di", FsPoolConfig(cfg.M_grid))

    def embed(self, sets) -> np.ndarray:
        if self.embedder is None:
            raise NotFittedError("pipeline is not fitted")
        return self.embedder.many(list(sets), threads=self.config.threads)

    def fit(self, train) -> "Pipeline":
        if not isinstance(train, SetDataset):
            train = SetDataset.from_sets(train)
        cfg = self.config
        self.d = train.d
        self.embedder = self._make_embedder(train)
        emb = self.embed(train.sets)
        ids, labels = train.ids, train.labels
        seed = cfg.child_seeds()["index"]
        if cfg.index == "binary":
            self.index = lsh.build_binary_index(emb, cfg.k_bits, seed, cfg.offsets, ids, labels)
        elif cfg.index == "bucket":
            self.index = lsh.build_bucket_index(emb, cfg.k, cfg.T, cfg.omega, seed, ids, labels)
        else:
            self.index = lsh.ExactIndex(emb, ids, labels, seed)
        return self

    def query(self, X, k: int, exclude_id=None) -> lsh.QueryResult:
        if not self.fitted:
            raise NotFittedError("pipeline is not fitted; call fit() first")
        pts = dataio.as_points(X)
        if pts.shape[1] != self.d:
            raise ValueError(f"query dimension {pts.shape[1]} does not match index dimension {self.d}")
        return self.index.query(self.embedder(X), k, exclude_id)

    @property
    def dim(self) -> int:
        if self.embedder is None:
            raise NotFittedError("pipeline is not fitted")
        if isinstance(self.embedder, SweEmbedder):
            return self.embedder.dim
        return self.index.dim

    def save(self, directory) -> None:
        """Write ``pipeline.json``, ``index.slsh`` and, for SWE, the bank and reference."""
        if not self.fitted:
            raise NotFittedError("pipeline is not fitted")
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        meta = {"config": asdict(self.config), "d": self.d}
        if isinstance(self.embedder, SweEmbedder):
            self.embedder.bank.save(d / "bank.slb")
            ref = self.embedder.ref
            dataio.save_dataset(SetDataset((dataio.PointSet(ref.points),), ref.d), d / "reference.ssd")
            meta["reference"] = {"provenance": ref.provenance, "seed": ref.seed}
        self.index.save(d / "index.slsh")
        (d / "pipeline.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "Pipeline":
        d = Path(directory)
        meta = json.loads((d / "pipeline.json").read_text())
        pipe = cls(PipelineConfig(**meta["config"]))
        pipe.d = meta["d"]
        cfg = pipe.config
        if cfg.embedder == "swe":
            bank = SlicerBank.load(d / "bank.slb")
            pts = dataio.load_dataset(d / "reference.ssd")[0].points
            ref = ReferenceSet.build(pts, bank, meta["reference"]["provenance"],
                                     meta["reference"]["seed"])
            pipe.embedder = SweEmbedder(bank, ref)
        elif cfg.embedder == "gem":
            pipe.embedder = PoolingEmbedder("gem", GemConfig(cfg.p_max))
        elif cfg.embedder == "cov":
            pipe.embedder = PoolingEmbedder("cov", CovConfig(cfg.lam))
        else:
            pipe.embedder = PoolingEmbedder("fspool_di", FsPoolConfig(cfg.M_grid))
        pipe.index = lsh.load_index(d / "index.slsh")
        return pipe


def fit(pipeline: Pipeline, train) -> Pipeline:
    return pipeline.fit(train)


def query(pipeline: Pipeline, X, k: int, exclude_id=None) -> lsh.QueryResult:
    return pipeline.query(X, k, exclude_id)


# ---------------------------------------------------------------------------
# metrics


def precision_at_k(neighbor_labels: Sequence, true_label, k: int) -> float:
    """Fraction of the top-``k`` retrieved labels equal to ``true_label``.

    The denominator is ``k``, so a short neighbor list counts its missing
    slots as misses.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    top = list(neighbor_labels)[:k]
    if not top:
        log.warning("precision_at_k on an empty neighbor list; returning 0")
        return 0.0
    return sum(1 for lab in top if lab == true_label) / k


def majority_label(neighbor_labels: Sequence):
    """Modal label; ties go to whichever tied label appears first (nearest)."""
    labels = list(neighbor_labels)
    if not labels:
        return None
    counts = Counter(labels)
    best = max(counts.values())
    for lab in labels:
        if counts[lab] == best:
            return lab


def majority_vote_accuracy(neighbor_labels: Sequence[Sequence], true_labels: Sequence) -> float:
    if len(neighbor_labels) != len(true_labels):
        raise ValueError("need one neighbor list per query")
    if not len(true_labels):
        raise ValueError("no queries")
    hits = sum(majority_label(nl) == t for nl, t in zip(neighbor_labels, true_labels))
    return hits / len(true_labels)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    method: str
    ks: tuple[int, ...]
    precision_at_k: dict[int, float]
    accuracy_at_k: dict[int, float]
    precision_std: dict[int, float] = field(default_factory=dict)
    accuracy_std: dict[int, float] = field(default_factory=dict)
    repeats: int = 1
    per_query: list[dict] = field(default_factory=list)
    runtime: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_text(self, include_runtime: bool = True) -> str:
        """One ``key=value`` line per metric, stable ordering."""
        lines = [f"method={self.method}", f"repeats={self.repeats}",
                 f"ks={','.join(str(k) for k in self.ks)}"]
        for key in sorted(self.config):
            lines.append(f"config.{key}={self.config[key]}")
        for k in self.ks:
            lines.append(f"precision@{k}={self.precision_at_k[k]!r}")
            lines.append(f"precision_std@{k}={self.precision_std.get(k, 0.0)!r}")
            lines.append(f"accuracy@{k}={self.accuracy_at_k[k]!r}")
            lines.append(f"accuracy_std@{k}={self.accuracy_std.get(k, 0.0)!r}")
        for rec in self.per_query:
            nbrs = ",".join(str(i) for i in rec["neighbors"])
            lines.append(f"query.{rec['repeat']}.{rec['id']}=label:{rec['label']};neighbors:{nbrs}")
        if include_runtime:
            for key in sorted(self.runtime):
                lines.append(f"runtime.{key}={self.runtime[key]:.6f}")
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        """Hash of everything except wall-clock timings."""
        return hashlib.sha256(self.to_text(include_runtime=False).encode()).hexdigest()

    def csv_rows(self) -> list[tuple]:
        secs = self.runtime.get("total_seconds", 0.0)
        return [(self.method, k, self.precision_at_k[k], self.accuracy_at_k[k], secs) for k in self.ks]

    def to_csv(self, header: bool = True) -> str:
        out = ["method,k,precision,accuracy,seconds"] if header else []
        for m, k, p, a, s in self.csv_rows():
            out.append(f"{m},{k},{p:.6f},{a:.6f},{s:.6f}")
        return "\n".join(out) + "\n"

    def write(self, directory, stem: str = "report") -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{stem}.txt").write_text(self.to_text())
        (d / f"{stem}.csv").write_text(self.to_csv())


def _run_queries(pipeline: Pipeline, test: SetDataset, kmax: int, exclude_self: bool):
    neighbors, neighbor_labels = [], []
    for s in test.sets:
        res = pipeline.query(s, kmax, exclude_id=s.id if exclude_self else None)
        neighbors.append(res.ids.tolist())
        neighbor_labels.append(res.labels.tolist())
    return neighbors, neighbor_labels


def _score(neighbor_labels, true_labels, ks):
    prec, acc = {}, {}
    for k in ks:
        prec[k] = float(np.mean([precision_at_k(nl, t, k) for nl, t in zip(neighbor_labels, true_labels)]))
        acc[k] = majority_vote_accuracy([nl[:k] for nl in neighbor_labels], true_labels)
    return prec, acc


def evaluate(pipeline: Pipeline, test, ks: Sequence[int] = (4, 8, 16),
             exclude_self: bool = True) -> EvalReport:
    """Score a fitted pipeline on labeled test sets.

    With ``exclude_self`` a training record whose id equals the query's id is
    skipped, so querying with training sets does not retrieve themselves.
    """
    if not pipeline.fitted:
        raise NotFittedError("pipeline is not fitted; call fit() first")
    if not isinstance(test, SetDataset):
        test = SetDataset.from_sets(test)
    ks = tuple(int(k) for k in ks)
    if not ks or min(ks) < 1:
        raise ValueError("ks must be a nonempty list of positive integers")
    t0 = time.perf_counter()
    neighbors, nl = _run_queries(pipeline, test, max(ks), exclude_self)
    elapsed = time.perf_counter() - t0
    true = [s.label for s in test.sets]
    prec, acc = _score(nl, true, ks)
    per_query = [{"repeat": 0, "id": s.id, "label": s.label, "neighbors": n}
                 for s, n in zip(test.sets, neighbors)]
    return EvalReport(pipeline.config.method_name, ks, prec, acc,
                      {k: 0.0 for k in ks}, {k: 0.0 for k in ks}, 1, per_query,
                      {"query_seconds": elapsed, "total_seconds": elapsed},
                      _config_dict(pipeline.config))


def _config_dict(cfg: PipelineConfig) -> dict:
    out = asdict(cfg)
    out.pop("threads")
    return out


def evaluate_repeated(config: PipelineConfig, train, test, ks: Sequence[int] = (4, 8, 16),
                      repeats: int = 5, exclude_self: bool = True) -> EvalReport:
    """Fit and evaluate ``repeats`` times with seeds ``config.seed + r``.

    Reports the mean and (population) standard deviation over repeats.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if not isinstance(test, SetDataset):
        test = SetDataset.from_sets(test)
    if len(test) == 0:
        raise ValueError("empty test set")
    ks = tuple(int(k) for k in ks)
    precs, accs, per_query = [], [], []
    fit_s = query_s = 0.0
    for r in range(repeats):
        t0 = time.perf_counter()
        pipe = Pipeline(replace(config, seed=config.seed + r)).fit(train)
        t1 = time.perf_counter()
        rep = evaluate(pipe, test, ks, exclude_self)
        fit_s += t1 - t0
        query_s += rep.runtime["query_seconds"]
        precs.append(rep.precision_at_k)
        accs.append(rep.accuracy_at_k)
        for rec in rep.per_query:
            per_query.append({**rec, "repeat": r})

    def agg(rows, fn):
        return {k: float(fn([row[k] for row in rows])) for k in ks}

    return EvalReport(config.method_name, ks, agg(precs, np.mean), agg(accs, np.mean),
                      agg(precs, np.std), agg(accs, np.std), repeats, per_query,
                      {"fit_seconds": fit_s, "query_seconds": query_s,
                       "total_seconds": fit_s + query_s},
                      _config_dict(config))
