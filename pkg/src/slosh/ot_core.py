"""One-dimensional optimal transport and the Monte-Carlo sliced distance.

Quantile convention (used everywhere in the package): for sorted samples
``s[0] <= ... <= s[N-1]`` the quantile at grid point ``k/N`` is ``s[k-1]``,
values between grid points are linearly interpolated, and every
``tau <= 1/N`` maps to ``s[0]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import as_points
from .slicing import SlicerBank, _dot_cols

# slices processed per block in gsw_estimate; bounds memory for huge L
_SLICE_BLOCK = 1 << 15


@dataclass(frozen=True, eq=False)
class EmpiricalQuantile:
    sorted_values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.sorted_values, dtype=np.float64).ravel()
        if v.size < 1:
            raise ValueError("empirical quantile needs at least one value")
        if np.any(np.diff(v) < 0):
            raise ValueError("sorted_values must be nondecreasing")
        v.setflags(write=False)
        object.__setattr__(self, "sorted_values", v)

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalQuantile":
        v = np.asarray(samples, dtype=np.float64).ravel()
        if v.size < 1:
            raise ValueError("empirical quantile needs at least one value")
        return cls(np.sort(v, kind="stable"))

    @property
    def n(self) -> int:
        return self.sorted_values.size

    def __call__(self, tau):
        return quantile(self, tau)


@dataclass(frozen=True)
class GswEstimate:
    """Monte-Carlo sliced 2-Wasserstein estimate over ``L`` slices.

    ``slice_sq`` holds the per-slice squared 1-D distances; ``value**2`` is
    their mean.
    """

    value: float
    L: int
    slice_sq: np.ndarray | None = None

    @property
    def squared(self) -> float:
        return self.value * self.value

    @property
    def stderr_squared(self) -> float:
        """Standard error of the squared estimate (sample std / sqrt(L))."""
        if self.slice_sq is None or self.L < 2:
            return float("nan")
        return float(np.std(self.slice_sq, ddof=1) / np.sqrt(self.L))


def _as_quantile(x) -> EmpiricalQuantile:
    if isinstance(x, EmpiricalQuantile):
        return x
    return EmpiricalQuantile.from_samples(x)


def quantile_sorted(sorted_values: np.ndarray, tau) -> np.ndarray:
    """Vectorized quantile of sorted samples along axis 0.

    ``sorted_values`` is ``N`` or ``N x L``; ``tau`` broadcasts against the
    trailing axes. No argument checking.
    """
    s = np.asarray(sorted_values)
    n = s.shape[0]
    pos = np.asarray(tau, dtype=np.float64) * n - 1.0
    return _interp_sorted(s, pos)


def _interp_sorted(s: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Linear interpolation of sorted columns at fractional indices ``pos``."""
    n = s.shape[0]
    pos = np.clip(pos, 0.0, n - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    if s.ndim == 1:
        a, b = s[lo], s[hi]
    else:
        cols = np.arange(s.shape[1])
        a, b = s[lo, cols], s[hi, cols]
    out = a + (b - a) * frac
    # keep exact order statistics at grid points (no 0 * inf surprises)
    return np.where(frac == 0.0, a, out)


def sort_rows(a: np.ndarray) -> np.ndarray:
    """Sort each row ascending.

    Adding 0.0 turns -0.0 into +0.0, so the unstable (fast) sort yields the
    same bits whatever the input order.
    """
    return np.sort(a + 0.0, axis=-1)


def _interp_rows(s: np.ndarray, num: np.ndarray, den: int) -> np.ndarray:
    """Row-wise quantiles of an ``L x N`` matrix of sorted rows.

    Positions are the exact rationals ``num / den - 1`` (fractional indices
    into each row), with ``num`` integer, ``L x M`` or a length-``M`` vector
    shared by all rows. Integer division keeps grid points exact: where
    ``den`` divides ``num`` the result is the order statistic itself.
    """
    L, n = s.shape
    num = np.asarray(num, dtype=np.int64)
    q, r = np.divmod(num, den)
    lo = q - 1
    below = lo < 0
    if below.any():
        lo = np.maximum(lo, 0)
        r = np.where(below, 0, r)
    flat = s.reshape(-1)
    base = (np.arange(L, dtype=np.int64) * n)[:, None]
    idx = lo + base
    a = flat[idx]
    if not r.any():
        return a
    b = flat[np.minimum(lo + 1, n - 1) + base]
    frac = r / den
    return np.where(r == 0, a, a + (b - a) * frac)


def quantile(q, tau: float) -> float:
    """Evaluate the empirical quantile function at ``tau`` in ``(0, 1]``."""
    q = _as_quantile(q)
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    return float(quantile_sorted(q.sorted_values, tau))


def wasserstein_1d(a, b) -> float:
    """Exact 2-Wasserstein distance between two 1-D empirical measures.

    Equal sizes match order statistics directly. Unequal sizes evaluate both
    quantile functions on the common grid ``k / max(N, M)``.
    """
    qa, qb = _as_quantile(a), _as_quantile(b)
    sa, sb = qa.sorted_values, qb.sorted_values
    if sa.size != sb.size:
        k = max(sa.size, sb.size)
        grid = np.arange(1, k + 1) / k
        sa, sb = quantile_sorted(sa, grid), quantile_sorted(sb, grid)
    diff = sa - sb
    return float(np.sqrt(np.mean(diff * diff)))


def _slice_sq_sorted(sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Squared 1-D distances between matching sorted rows."""
    if sx.shape[1] != sy.shape[1]:
        k = max(sx.shape[1], sy.shape[1])
        grid = np.arange(1, k + 1, dtype=np.int64)
        sx = _interp_rows(sx, grid * sx.shape[1], k)
        sy = _interp_rows(sy, grid * sy.shape[1], k)
    diff = sx - sy
    return np.mean(diff * diff, axis=1)


def slice_sq_distances(X, Y, bank: SlicerBank) -> np.ndarray:
    """Per-slice squared 1-D Wasserstein distances, length ``L``."""
    x, y = as_points(X), as_points(Y)
    if x.shape[1] != bank.d or y.shape[1] != bank.d:
        raise ValueError(
            f"set dimensions ({x.shape[1]}, {y.shape[1]}) do not match bank dimension {bank.d}")
    out = np.empty(bank.L)
    for start in range(0, bank.L, _SLICE_BLOCK):
        stop = min(start + _SLICE_BLOCK, bank.L)
        dirs = bank.directions[start:stop]
        out[start:stop] = _slice_sq_sorted(sort_rows(_dot_cols(x, dirs)), sort_rows(_dot_cols(y, dirs)))
    return out


def gsw_estimate(X, Y, bank: SlicerBank) -> GswEstimate:
    """Monte-Carlo sliced 2-Wasserstein distance using the slices of ``bank``."""
    sq = slice_sq_distances(X, Y, bank)
    # fixed-order pairwise summation keeps the result bit-stable
    return GswEstimate(float(np.sqrt(np.sum(sq) / bank.L)), bank.L, sq)


def wasserstein_1d_crosssize(a, b) -> float:
    """Reference 1-D 2-Wasserstein distance by exact integration over ``tau``.

    Both quantile functions are taken as right-continuous step functions
    (``s[ceil(N tau) - 1]``), so the squared difference is constant between
    consecutive breakpoints of the merged grid ``{k/N} U {k/M}`` and the
    integral is an exact finite sum. Used as a test oracle.
    """
    sa = np.sort(np.asarray(a, dtype=np.float64).ravel())
    sb = np.sort(np.asarray(b, dtype=np.float64).ravel())
    n, m = sa.size, sb.size
    if n < 1 or m < 1:
        raise ValueError("both inputs need at least one value")
    # breakpoints as exact fractions over the common denominator n*m
    ticks = np.union1d(np.arange(0, n + 1) * m, np.arange(0, m + 1) * n)
    left, right = ticks[:-1], ticks[1:]
    # on (left, right] the step quantile of a is sa[ceil(tau*n) - 1]
    ia = (right + m - 1) // m - 1
    ib = (right + n - 1) // n - 1
    widths = (right - left) / (n * m)
    diff = sa[ia] - sb[ib]
    return float(np.sqrt(np.sum(widths * diff * diff)))
