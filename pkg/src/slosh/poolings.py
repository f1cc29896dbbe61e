"""Data-independent set-to-vector baselines: GeM, covariance and sorted-feature pooling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import as_points
from .ot_core import _interp_rows, sort_rows

# recorded in pooled batch files so readers know how GeM treated signs
GEM_SIGN_CONVENTION = "abs"


@dataclass(frozen=True)
class GemConfig:
    p_max: int = 1

    def __post_init__(self):
        if int(self.p_max) < 1:
            raise ValueError("p_max must be >= 1")


@dataclass(frozen=True)
class CovConfig:
    lam: float = 0.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")


@dataclass(frozen=True)
class FsPoolConfig:
    M_grid: int = 16

    def __post_init__(self):
        if int(self.M_grid) < 1:
            raise ValueError("M_grid must be >= 1")


def gem_pool(s, cfg: GemConfig = GemConfig()) -> np.ndarray:
    """Concatenated power means of ``|x|`` for ``p = 1..p_max``, length ``p_max * d``.

    Absolute values keep even roots defined for signed coordinates; for
    nonnegative features this is the usual generalized mean.
    """
    # per-feature sort fixes the summation order, so permuted input is bit-identical
    x = np.sort(np.abs(as_points(s)), axis=0)
    blocks = []
    for p in range(1, cfg.p_max + 1):
        m = np.mean(x**p, axis=0)
        blocks.append(m if p == 1 else m ** (1.0 / p))
    return np.concatenate(blocks)


def cov_pool(s, cfg: CovConfig = CovConfig()) -> np.ndarray:
    """Row-major flattening of ``C + lam * trace(C) * I`` with unbiased ``C``."""
    x = as_points(s)
    n, d = x.shape
    if n < 2:
        raise ValueError("covariance pooling needs at least 2 points (unbiased divisor N-1)")
    # canonical row order makes every reduction independent of input order
    x = x[np.lexsort(x.T[::-1])]
    centered = x - x.mean(axis=0)
    c = centered.T @ centered / (n - 1)
    # exact symmetry regardless of BLAS summation order
    c = 0.5 * (c + c.T)
    if cfg.lam:
        c = c + cfg.lam * np.trace(c) * np.eye(d)
    return c.reshape(-1)


def fspool_di(s, cfg: FsPoolConfig = FsPoolConfig()) -> np.ndarray:
    """Sorted features resampled at quantiles ``(m+1)/M_grid``, feature-major."""
    srt = sort_rows(as_points(s).T)
    n = srt.shape[1]
    # same rational positions as the SWE coupling
    return _interp_rows(srt, np.arange(1, cfg.M_grid + 1) * n, cfg.M_grid).reshape(-1)


POOLINGS = {
    "gem": (gem_pool, GemConfig),
    "cov": (cov_pool, CovConfig),
    "fspool_di": (fspool_di, FsPoolConfig),
}


class PoolingEmbedder:
    def __init__(self, name: str, cfg):
        if name not in POOLINGS:
            raise ValueError(f"unknown pooling {name!r}; expected one of {sorted(POOLINGS)}")
        self.name = name
        self.cfg = cfg
        self._fn = POOLINGS[name][0]

    def __call__(self, s) -> np.ndarray:
        return self._fn(s, self.cfg)

    def many(self, sets, threads: int = 1) -> np.ndarray:
        return np.stack([self(s) for s in sets])
