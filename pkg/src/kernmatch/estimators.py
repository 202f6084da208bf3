"""Point estimators of the ATE and ATT.

Kernel matching on propensity scores, nearest-neighbour matching (on
standardized covariates or on scores), Hajek-normalized IPW and the
doubly robust (augmented IPW) estimator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from . import _loops
from .errors import DegenerateScoreError, DenominatorUnderflow, RankError
from .kernels import KernelFamily, KernelSpec


class Estimand(str, Enum):
    ATE = "ATE"
    ATT = "ATT"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


class Method(str, Enum):
    KERNEL = "KernelMatch"
    NN_COVARIATES = "NNCovariates"
    NN_PSCORE = "NNPScore"
    IPW = "IPW"
    DR = "DR"


@dataclass(frozen=True)
class ObservationalSample:
    """Outcomes ``y``, binary treatments ``w`` and covariates ``x`` (N x d)."""

    y: np.ndarray
    w: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        w = np.asarray(self.w)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim != 1 or w.ndim != 1 or x.ndim != 2:
            raise ValueError("y and w must be 1-D, x must be 2-D")
        if not (y.shape[0] == w.shape[0] == x.shape[0]):
            raise ValueError(
                f"inconsistent lengths: y {y.shape[0]}, w {w.shape[0]}, x {x.shape[0]}"
            )
        if not np.all((w == 0) | (w == 1)):
            raise ValueError("w must be binary 0/1")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValueError("sample contains non-finite values")
        n1 = int(w.sum())
        if n1 < 2 or w.shape[0] - n1 < 2:
            raise ValueError(f"need at least 2 treated and 2 control units, got {n1} treated of {w.shape[0]}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w.astype(np.int64))
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def treated(self) -> np.ndarray:
        return self.w == 1

    @property
    def n_treated(self) -> int:
        return int(self.w.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    def take(self, idx) -> "ObservationalSample":
        return ObservationalSample(self.y[idx], self.w[idx], self.x[idx])


@dataclass(frozen=True)
class EffectEstimate:
    estimand: Estimand
    method: Method
    point: float
    se: Optional[float] = None
    ci: Optional[Tuple[float, float]] = None
    n_fallback: int = 0

    def __post_init__(self):
        if self.ci is not None and not self.ci[0] <= self.ci[1]:
            raise ValueError(f"confidence interval bounds out of order: {self.ci}")

    def with_interval(self, se, ci) -> "EffectEstimate":
        return EffectEstimate(self.estimand, self.method, self.point, se, ci, self.n_fallback)


@dataclass(frozen=True)
class ImputedOutcomes:
    y0hat: np.ndarray
    y1hat: np.ndarray
    n_fallback: int = 0
    fallback_units: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def _check_scores(sample: ObservationalSample, scores) -> np.ndarray:
    p = np.asarray(scores, dtype=float)
    if p.shape != (sample.n,):
        raise ValueError(f"scores must have length {sample.n}, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("scores must be finite")
    return p


def _family_code(kernel: KernelSpec) -> int:
    return _loops.GAUSSIAN if kernel.family is KernelFamily.GAUSSIAN else _loops.EPANECHNIKOV


def _smooth(p_recv, p_donor, y_donor, kernel: KernelSpec, on_empty: str):
    out = np.empty(p_recv.shape[0])
    empty = np.zeros(p_recv.shape[0], dtype=np.bool_)
    _loops.kernel_impute(
        np.ascontiguousarray(p_recv), np.ascontiguousarray(p_donor),
        np.ascontiguousarray(y_donor), kernel.bandwidth, _family_code(kernel), out, empty,
    )
    if empty.any():
        if on_empty == "raise":
            raise DenominatorUnderflow(
                f"{int(empty.sum())} unit(s) have no donor within the kernel support ({kernel})"
            )
        nn = np.empty(int(empty.sum()))
        _loops.nearest_1d(np.ascontiguousarray(p_recv[empty]), np.ascontiguousarray(p_donor),
                          np.ascontiguousarray(y_donor), 1, nn)
        out[empty] = nn
    return out, empty


def impute(sample: ObservationalSample, scores, kernel: KernelSpec,
           on_empty: str = "nearest", treated_only: bool = False) -> ImputedOutcomes:
    """Kernel-matching imputation of both potential outcomes.

    The missing outcome of unit i is the kernel-weighted mean of the
    opposite group's outcomes, with weights K((p_j - p_i)/h). Observed
    outcomes are copied unchanged.

    When a unit's weight sum vanishes (possible only for compact-support
    kernels) it falls back to its single nearest donor in score and is
    counted in ``n_fallback``; pass ``on_empty="raise"`` to get
    :class:`DenominatorUnderflow` instead. With ``treated_only`` the
    controls' Y(1) is left as NaN (all the ATT needs).
    """
    if on_empty not in ("nearest", "raise"):
        raise ValueError("on_empty must be 'nearest' or 'raise'")
    p = _check_scores(sample, scores)
    t = sample.treated
    c = ~t
    y0hat = sample.y.copy()
    y1hat = sample.y.copy()
    y0_t, empty_t = _smooth(p[t], p[c], sample.y[c], kernel, on_empty)
    y0hat[t] = y0_t
    fallback = [np.flatnonzero(t)[empty_t]]
    if treated_only:
        y1hat[c] = np.nan
    else:
        y1_c, empty_c = _smooth(p[c], p[t], sample.y[t], kernel, on_empty)
        y1hat[c] = y1_c
        fallback.append(np.flatnonzero(c)[empty_c])
    fallback = np.sort(np.concatenate(fallback))
    if fallback.size:
        warnings.warn(
            f"{fallback.size} unit(s) had an empty kernel neighbourhood; "
            "used the nearest donor instead",
            RuntimeWarning, stacklevel=2,
        )
    return ImputedOutcomes(y0hat, y1hat, int(fallback.size), fallback)


def kernel_match_ate(sample: ObservationalSample, scores, kernel: KernelSpec,
                     on_empty: str = "nearest", form: str = "imputed") -> EffectEstimate:
    """Kernel-matching ATE.

    ``form="imputed"`` averages y1hat - y0hat; ``form="signed"`` evaluates
    the equivalent (2W - 1)(Y - cross-group smooth) expression. The two
    agree up to rounding.
    """
    imp = impute(sample, scores, kernel, on_empty)
    if form == "imputed":
        point = float(np.mean(imp.y1hat - imp.y0hat))
    elif form == "signed":
        cross = np.where(sample.treated, imp.y0hat, imp.y1hat)
        point = float(np.mean((2 * sample.w - 1) * (sample.y - cross)))
    else:
        raise ValueError("form must be 'imputed' or 'signed'")
    return EffectEstimate(Estimand.ATE, Method.KERNEL, point, n_fallback=imp.n_fallback)


def kernel_match_att(sample: ObservationalSample, scores, kernel: KernelSpec,
                     on_empty: str = "nearest") -> EffectEstimate:
    imp = impute(sample, scores, kernel, on_empty, treated_only=True)
    t = sample.treated
    point = float(np.mean(sample.y[t] - imp.y0hat[t]))
    return EffectEstimate(Estimand.ATT, Method.KERNEL, point, n_fallback=imp.n_fallback)


def kernel_match(sample, scores, kernel, estimand, on_empty="nearest") -> EffectEstimate:
    if Estimand.parse(estimand) is Estimand.ATE:
        return kernel_match_ate(sample, scores, kernel, on_empty)
    return kernel_match_att(sample, scores, kernel, on_empty)


# -- nearest-neighbour matching ---------------------------------------------

def standardize(x) -> np.ndarray:
    """Scale every column to unit sample variance (constant columns untouched)."""
    x = np.asarray(x, dtype=float)
    sd = x.std(axis=0, ddof=1)
    sd[sd == 0] = 1.0
    return x / sd


def _knn_mean_euclid(x_recv, x_donor, y_donor, k) -> np.ndarray:
    # squared distances; the k nearest by (distance, donor index)
    d2 = ((x_recv[:, None, :] - x_donor[None, :, :]) ** 2).sum(axis=2)
    nd = x_donor.shape[0]
    if k == nd:
        return np.full(x_recv.shape[0], y_donor.mean())
    kth = np.partition(d2, k - 1, axis=1)[:, k - 1:k]
    closer = d2 < kth
    tied = d2 == kth
    need = k - closer.sum(axis=1, keepdims=True)
    take = closer | (tied & (np.cumsum(tied, axis=1) <= need))
    return (take * y_donor[None, :]).sum(axis=1) / k


def _knn_mean(metric, p_recv, p_donor, y_donor, k):
    if metric == "pscore":
        out = np.empty(p_recv.shape[0])
        _loops.nearest_1d(np.ascontiguousarray(p_recv, dtype=float),
                          np.ascontiguousarray(p_donor, dtype=float),
                          np.ascontiguousarray(y_donor, dtype=float), k, out)
        return out
    return _knn_mean_euclid(p_recv, p_donor, y_donor, k)


def nn_match(sample: ObservationalSample, metric: str = "covariates", scores=None,
             estimand="ATE", k: int = 1) -> EffectEstimate:
    """Nearest-neighbour matching with replacement.

    ``metric="covariates"``: Euclidean distance on covariates scaled to unit
    sample variance. ``metric="pscore"``: |p_j - p_i|. Each missing outcome
    is the mean of the k nearest opposite-group outcomes; ties at the k-th
    distance go to the lowest index.
    """
    estimand = Estimand.parse(estimand)
    metric = str(metric).lower()
    if metric in ("covariates", Method.NN_COVARIATES.value.lower()):
        metric = "covariates"
        z = standardize(sample.x)
    elif metric in ("pscore", Method.NN_PSCORE.value.lower()):
        metric = "pscore"
        if scores is None:
            raise ValueError("scores are required for propensity-score matching")
        z = _check_scores(sample, scores)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    k = int(k)
    t = sample.treated
    c = ~t
    n0, n1 = sample.n_control, sample.n_treated
    need = n0 if estimand is Estimand.ATT else min(n0, n1)
    if not 1 <= k <= need:
        raise ValueError(f"k={k} out of range [1, {need}]")
    y = sample.y
    y0_t = _knn_mean(metric, z[t], z[c], y[c], k)
    method = Method.NN_COVARIATES if metric == "covariates" else Method.NN_PSCORE
    if estimand is Estimand.ATT:
        return EffectEstimate(estimand, method, float(np.mean(y[t] - y0_t)))
    y1_c = _knn_mean(metric, z[c], z[t], y[t], k)
    y1hat = y.copy()
    y0hat = y.copy()
    y0hat[t] = y0_t
    y1hat[c] = y1_c
    return EffectEstimate(estimand, method, float(np.mean(y1hat - y0hat)))


# -- weighting estimators ---------------------------------------------------

def _check_open_scores(sample, scores):
    p = _check_scores(sample, scores)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DegenerateScoreError("propensity scores must lie strictly inside (0, 1)")
    return p


def ipw(sample: ObservationalSample, scores, estimand="ATE") -> EffectEstimate:
    """Hajek-normalized inverse probability weighting.

    ATE: treated outcomes weighted by 1/p and controls by 1/(1-p), each
    normalized to sum to one. ATT: treated mean minus the control mean
    weighted by the odds p/(1-p).
    """
    estimand = Estimand.parse(estimand)
    p = _check_open_scores(sample, scores)
    y = sample.y
    t = sample.treated
    c = ~t
    if estimand is Estimand.ATE:
        w1 = 1.0 / p[t]
        w0 = 1.0 / (1.0 - p[c])
        point = np.sum(w1 * y[t]) / np.sum(w1) - np.sum(w0 * y[c]) / np.sum(w0)
    else:
        odds = p[c] / (1.0 - p[c])
        point = y[t].mean() - np.sum(y[c] * odds) / np.sum(odds)
    return EffectEstimate(estimand, Method.IPW, float(point))


@dataclass(frozen=True)
class OutcomeModel:
    """Least-squares fit of Y on (1, X) within one treatment group."""

    coef: np.ndarray

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return self.coef[0] + x @ self.coef[1:]


def ols_outcome_model(sample: ObservationalSample, group: int) -> OutcomeModel:
    if group not in (0, 1):
        raise ValueError("group must be 0 or 1")
    mask = sample.w == group
    x = sample.x[mask]
    d = x.shape[1]
    if x.shape[0] < d + 2:
        raise RankError(f"group {group} has {x.shape[0]} units, need at least {d + 2}")
    Z = np.column_stack([np.ones(x.shape[0]), x])
    coef, _, rank, _ = np.linalg.lstsq(Z, sample.y[mask], rcond=None)
    if rank < Z.shape[1]:
        raise RankError(f"outcome design for group {group} has rank {rank} < {Z.shape[1]}")
    return OutcomeModel(coef)


def dr(sample: ObservationalSample, scores, estimand="ATE",
       mu0: Optional[np.ndarray] = None, mu1: Optional[np.ndarray] = None) -> EffectEstimate:
    """Doubly robust (augmented IPW) estimator.

    Outcome regressions default to per-group OLS of Y on (1, X); pass
    ``mu0``/``mu1`` (fitted values at every unit) to override them.

    ATE averages
    ``[W Y/p - (W - p)/p mu1] - [(1-W) Y/(1-p) + (W - p)/(1-p) mu0]``;
    ATT is ``(1/N1) sum [W Y - ((1-W) Y p + mu0 (W - p)) / (1-p)]``.
    """
    estimand = Estimand.parse(estimand)
    p = _check_open_scores(sample, scores)
    y = sample.y
    W = sample.w.astype(float)
    if mu0 is None:
        mu0 = ols_outcome_model(sample, 0).predict(sample.x)
    if estimand is Estimand.ATE:
        if mu1 is None:
            mu1 = ols_outcome_model(sample, 1).predict(sample.x)
        a1 = W * y / p - (W - p) / p * mu1
        a0 = (1.0 - W) * y / (1.0 - p) + (W - p) / (1.0 - p) * mu0
        point = np.mean(a1 - a0)
    else:
        terms = W * y - ((1.0 - W) * y * p + mu0 * (W - p)) / (1.0 - p)
        point = np.sum(terms) / W.sum()
    return EffectEstimate(estimand, Method.DR, float(point))
