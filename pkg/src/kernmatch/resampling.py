"""Case-resampling bootstrap: standard errors, percentile and normal intervals.

Each replicate b draws from its own Philox stream keyed by ``(seed, b)``,
so the replicate values do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import BootstrapDegenerateError, EstimationError
from .estimators import ObservationalSample

Z_975 = 1.959964

MAX_TRIES_PER_REPLICATE = 10


class IntervalMethod(str, Enum):
    PERCENTILE = "percentile"
    NORMAL = "normal"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        if v in ("normalapprox", "normal_approx", "normal-approx"):
            v = "normal"
        return cls(v)


@dataclass(frozen=True)
class BootstrapResult:
    replicates: np.ndarray
    se: float
    ci: tuple
    method: IntervalMethod
    level: float
    n_redrawn: int = 0


def rng_for(seed, *key) -> np.random.Generator:
    """Philox generator for the stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def z_quantile(level: float) -> float:
    """Two-sided standard normal critical value for a ``level`` interval."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if abs(level - 0.95) < 1e-12:
        return Z_975
    return float(ndtri(1.0 - (1.0 - level) / 2.0))


def _rank(q: float, B: int) -> int:
    # ceil with a guard against representation error (0.025 * 400 = 10.000000000000002)
    r = math.ceil(q * B - 1e-9)
    return min(max(r, 1), B)


def percentile_interval(replicates, level: float = 0.95):
    """Order statistics at ranks ceil(B alpha/2) and ceil(B (1 - alpha/2)), 1-based."""
    r = np.sort(np.asarray(replicates, dtype=float))
    B = r.shape[0]
    alpha = 1.0 - level
    lo = r[_rank(alpha / 2.0, B) - 1]
    hi = r[_rank(1.0 - alpha / 2.0, B) - 1]
    return float(lo), float(hi)


def normal_interval(point: float, se: float, level: float = 0.95):
    z = z_quantile(level)
    return float(point - z * se), float(point + z * se)


def summarize(replicates, method="percentile", level: float = 0.95, point=None,
              n_redrawn: int = 0) -> BootstrapResult:
    reps = np.asarray(replicates, dtype=float)
    if reps.shape[0] < 2:
        raise ValueError("need at least two replicates")
    method = IntervalMethod.parse(method)
    se = float(np.std(reps, ddof=1))
    if method is IntervalMethod.PERCENTILE:
        ci = percentile_interval(reps, level)
    else:
        if point is None:
            raise ValueError("normal-approximation interval needs the full-sample point estimate")
        ci = normal_interval(point, se, level)
    return BootstrapResult(reps, se, ci, method, level, n_redrawn)


def resample_indices(w, rng, max_tries: int):
    """Indices of one resample with at least two units in each arm.

    Returns ``(idx, n_rejected)``; ``idx`` is None when every try failed.
    """
    w = np.asarray(w)
    n = w.shape[0]
    for tries in range(max_tries):
        idx = rng.integers(0, n, size=n)
        n1 = int(w[idx].sum())
        if 2 <= n1 <= n - 2:
            return idx, tries
    return None, max_tries


def bootstrap_many(sample, statistic: Callable, B: int, seed) -> tuple:
    """Replicate matrix for a vector-valued statistic.

    ``sample`` may be any object with a treatment vector ``w`` and a
    ``take(idx)`` method, so callers can carry extra unit-level arrays.
    ``statistic(resample) -> 1-D array`` of fixed length m; a NaN entry
    marks a method that failed on that resample. A resample is redrawn
    (with the replicate's own stream) when it lacks two units per arm,
    when ``statistic`` raises :class:`EstimationError`, or when any entry
    is NaN, up to 10 tries; after that the last row is kept as is.

    Returns
    -------
    reps : ndarray, shape (B, m)
    n_redrawn : int
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    rows = []
    n_redrawn = 0
    width = None
    for b in range(B):
        rng = rng_for(seed, b)
        row = None
        for attempt in range(MAX_TRIES_PER_REPLICATE):
            idx, rejected = resample_indices(sample.w, rng, MAX_TRIES_PER_REPLICATE - attempt)
            n_redrawn += rejected
            if idx is None:
                break
            try:
                row = np.atleast_1d(np.asarray(statistic(sample.take(idx)), dtype=float))
            except (EstimationError, np.linalg.LinAlgError):
                row = None
            if row is not None and np.all(np.isfinite(row)):
                break
            n_redrawn += 1
        if row is not None:
            width = row.shape[0]
        rows.append(row)
    if n_redrawn > 10 * B:
        raise BootstrapDegenerateError(f"{n_redrawn} redraws exceed the cap of {10 * B}")
    if width is None:
        raise BootstrapDegenerateError(f"all {B} bootstrap replicates failed")
    rows = [np.full(width, np.nan) if r is None else r for r in rows]
    return np.vstack(rows), n_redrawn


def bootstrap(sample: ObservationalSample, estimator: Callable[[ObservationalSample], float],
              B: int = 400, method="percentile", level: float = 0.95, seed=0,
              point=None) -> BootstrapResult:
    """Bootstrap a scalar estimator by resampling whole (Y, W, X) units.

    ``estimator`` must run its full pipeline (propensity refit included)
    on whatever sample it is handed. ``point`` defaults to the estimator on
    the full sample; the normal interval is ``point +/- z * se``.

    Raises
    ------
    BootstrapDegenerateError
        If more than 10% of replicates still fail after retries, or total
        redraws exceed 10 B.
    """
    reps, n_redrawn = bootstrap_many(sample, lambda s: [estimator(s)], B, seed)
    reps = reps[:, 0]
    return finalize(reps, method, level, point, n_redrawn,
                    full_sample=lambda: estimator(sample))


def finalize(reps, method, level, point, n_redrawn=0, full_sample=None) -> BootstrapResult:
    """Drop failed replicates, enforce the 10% failure cap and summarize."""
    reps = np.asarray(reps, dtype=float)
    ok = np.isfinite(reps)
    B = reps.shape[0]
    if (B - ok.sum()) > 0.1 * B:
        raise BootstrapDegenerateError(f"{B - int(ok.sum())} of {B} bootstrap replicates failed")
    method = IntervalMethod.parse(method)
    if point is None and method is IntervalMethod.NORMAL:
        point = full_sample()
    return summarize(reps[ok], method, level, point, n_redrawn)


@dataclass(frozen=True)
class CoverageWidth:
    cp: float
    aw: float


def coverage_and_width(intervals: Sequence, truth: float) -> CoverageWidth:
    """Share of closed intervals containing ``truth`` and their mean width."""
    ci = np.asarray(list(intervals), dtype=float).reshape(-1, 2)
    if ci.shape[0] == 0:
        raise ValueError("need at least one interval")
    inside = (ci[:, 0] <= truth) & (truth <= ci[:, 1])
    return CoverageWidth(float(inside.mean()), float(np.mean(ci[:, 1] - ci[:, 0])))
