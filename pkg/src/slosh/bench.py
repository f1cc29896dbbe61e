"""Wall-time measurements of set embeddings versus set size and slice count."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .poolings import CovConfig, FsPoolConfig, GemConfig, cov_pool, fspool_di, gem_pool
from .slicing import sample_slicers
from .swe import ReferenceSet, embed

BENCH_METHODS = ("swe", "gem", "cov", "fspool_di")
MIN_REPS = 5


@dataclass(frozen=True)
class BenchRow:
    N: int
    L: int
    d: int
    method: str
    seconds: float


def _median_time(fn, reps: int) -> float:
    fn()  # warm-up
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def _task(method: str, N: int, L: int, d: int, seed: int, M: int | None):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((N, d))
    if method == "swe":
        bank = sample_slicers(d, L, seed)
        ref = ReferenceSet.build(rng.standard_normal((M or N, d)), bank)
        return lambda: embed(x, ref, bank)
    if method == "gem":
        cfg = GemConfig(max(1, L))
        return lambda: gem_pool(x, cfg)
    if method == "cov":
        return lambda: cov_pool(x, CovConfig())
    if method == "fspool_di":
        cfg = FsPoolConfig(M or N)
        return lambda: fspool_di(x, cfg)
    raise ValueError(f"unknown method {method!r}; expected one of {BENCH_METHODS}")


def time_embedding(method: str, N: int, L: int, d: int, reps: int = MIN_REPS, seed: int = 0,
                   M: int | None = None) -> float:
    """Median seconds to embed one ``N``-point set in ``R^d``.

    For SWE the reference has ``M`` points (default ``N``); building the
    bank and reference is not timed. For GeM ``L`` sets ``p_max``.
    """
    if reps < MIN_REPS:
        raise ValueError(f"need at least {MIN_REPS} timed repetitions")
    return _median_time(_task(method, N, L, d, seed, M), reps)


def time_sweep(method: str, Ns, L: int, d: int, reps: int = MIN_REPS, seed: int = 0,
               M: int | None = None) -> list[float]:
    """Median seconds for each ``N``, with timed rounds interleaved across sizes.

    Every task is warmed up first, then each round times every size once, so
    slow drift (frequency scaling, cache state) hits all sizes alike.
    """
    if reps < MIN_REPS:
        raise ValueError(f"need at least {MIN_REPS} timed repetitions")
    tasks = [_task(method, N, L, d, seed, M) for N in Ns]
    for fn in tasks:
        fn()
    samples = [[] for _ in tasks]
    for _ in range(reps):
        for fn, out in zip(tasks, samples):
            t0 = time.perf_counter()
            fn()
            out.append(time.perf_counter() - t0)
    return [statistics.median(s) for s in samples]


def run_bench(Ns, Ls, d: int = 3, methods=("swe",), reps: int = MIN_REPS, seed: int = 0,
              M: int | None = None) -> list[BenchRow]:
    rows = []
    for method in methods:
        for L in Ls:
            for N, secs in zip(Ns, time_sweep(method, Ns, L, d, reps, seed, M)):
                rows.append(BenchRow(N, L, d, method, secs))
    return rows


def rows_to_csv(rows) -> str:
    out = ["N,L,d,method,seconds"]
    out += [f"{r.N},{r.L},{r.d},{r.method},{r.seconds:.9f}" for r in rows]
    return "\n".join(out) + "\n"


def doubling_ratios(rows, key: str = "N") -> list[float]:
    """Successive time ratios of rows sorted by ``key`` (one method, fixed others)."""
    rows = sorted(rows, key=lambda r: getattr(r, key))
    return [b.seconds / a.seconds for a, b in zip(rows, rows[1:])]
