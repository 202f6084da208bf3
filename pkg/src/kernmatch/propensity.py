"""Logistic propensity model fitted by Newton-Raphson maximum likelihood.

The design matrix always carries the intercept as its first column; use
:func:`add_intercept` on raw covariates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateTreatmentError, SeparationError

# Scores are kept inside [_P_EPS, 1 - _P_EPS]; 1 - 2**-53 is the largest double below 1.
_P_EPS = 2.0**-53

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
MAX_HALVINGS = 30
MAX_ABS_BETA = 30.0
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class PropensityFit:
    beta: np.ndarray
    log_lik: float
    iterations: int
    converged: bool
    grad_norm: float
    scores: np.ndarray

    def predict(self, X_new) -> np.ndarray:
        return predict(self, X_new)


def add_intercept(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return np.column_stack([np.ones(x.shape[0]), x])


def logistic(eta) -> np.ndarray:
    """Logistic CDF, clipped so that every value lies strictly inside (0, 1)."""
    return np.clip(expit(np.asarray(eta, dtype=float)), _P_EPS, 1.0 - _P_EPS)


def log_likelihood(X, W, beta) -> float:
    """Sum of W ln F(x'b) + (1 - W) ln(1 - F(x'b)), evaluated without overflow."""
    eta = np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    # ln F(eta) = -log(1 + e^-eta), ln(1 - F(eta)) = -log(1 + e^eta)
    return float(np.sum(W * eta - np.logaddexp(0.0, eta)))


def score_and_information(X, W, beta):
    """Average score vector and Fisher information of the logistic model.

    For a general link F with density f the per-unit score is
    ``x (W - F) f / (F (1 - F))`` and the information weight is
    ``f**2 / (F (1 - F))``. For the logistic link f = F (1 - F), so both
    collapse to ``x (W - F)`` and ``F (1 - F) x x'``; only these forms are
    computed here.

    Returns
    -------
    S : ndarray, shape (k,)
        ``(1/N) sum_i x_i (W_i - F_i)``
    I : ndarray, shape (k, k)
        ``(1/N) sum_i F_i (1 - F_i) x_i x_i'``
    """
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.ndim != 2 or X.shape[0] != W.shape[0] or X.shape[1] != beta.shape[0]:
        raise ValueError(
            f"dimension mismatch: X {X.shape}, W {W.shape}, beta {beta.shape}"
        )
    n = X.shape[0]
    F = expit(X @ beta)
    S = X.T @ (W - F) / n
    I = (X * (F * (1.0 - F))[:, None]).T @ X / n
    return S, I


def _check_inputs(X, W):
    X = np.asarray(X, dtype=float)
    W = np.asarray(W)
    if X.ndim != 2:
        raise ValueError("design matrix must be 2-D")
    if W.ndim != 1 or W.shape[0] != X.shape[0]:
        raise ValueError(f"length mismatch: X has {X.shape[0]} rows, W has {W.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix contains non-finite entries")
    if not np.all((W == 0) | (W == 1)):
        raise ValueError("treatment vector must be binary 0/1")
    if X.shape[0] < X.shape[1]:
        raise ValueError(f"need at least as many rows as columns, got {X.shape}")
    n1 = int(W.sum())
    if n1 == 0 or n1 == W.shape[0]:
        raise DegenerateTreatmentError("treatment vector is all-control or all-treated")
    return X, W.astype(float)


def _scaled_condition(info: np.ndarray) -> float:
    d = np.sqrt(np.diag(info))
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        return np.inf
    return float(np.linalg.cond(info / np.outer(d, d)))


def fit_logistic(X, W, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> PropensityFit:
    """Maximum-likelihood logistic regression by Newton-Raphson.

    Starts from beta = 0 and halves the Newton step (at most 30 times)
    until the log-likelihood does not decrease. Convergence means the
    infinity norm of the *average* score is at most ``tol``.

    Raises
    ------
    DegenerateTreatmentError
        If ``W`` has no treated or no control units.
    SeparationError
        If ``|beta|`` exceeds 30 in any coordinate or the (column-equilibrated)
        information matrix has condition number above 1e12.
    """
    X, W = _check_inputs(X, W)
    n, k = X.shape
    beta = np.zeros(k)
    ll = log_likelihood(X, W, beta)
    it = 0
    while it < max_iter:
        S, I = score_and_information(X, W, beta)
        if np.max(np.abs(S)) <= tol:
            break
        try:
            step = np.linalg.solve(I, S)
        except np.linalg.LinAlgError:
            raise SeparationError("information matrix is singular") from None
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + t * step
            ll_cand = log_likelihood(X, W, cand)
            if ll_cand >= ll:
                break
            t *= 0.5
        else:
            # no ascent possible at float resolution
            break
        beta, ll = cand, ll_cand
        it += 1
        if np.max(np.abs(beta)) > MAX_ABS_BETA:
            raise SeparationError(
                f"coefficient magnitude {np.max(np.abs(beta)):.3g} exceeds {MAX_ABS_BETA}; "
                "the treatment is (quasi-)separated by the covariates"
            )

    S, I = score_and_information(X, W, beta)
    grad_norm = float(np.max(np.abs(S)))
    converged = grad_norm <= tol
    if _scaled_condition(I) > MAX_CONDITION:
        raise SeparationError("information matrix is numerically singular")
    return PropensityFit(
        beta=beta,
        log_lik=ll,
        iterations=it,
        converged=converged,
        grad_norm=grad_norm,
        scores=logistic(X @ beta),
    )


def predict(fit: PropensityFit, X_new) -> np.ndarray:
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[1] != fit.beta.shape[0]:
        raise ValueError(
            f"design has {X_new.shape[-1]} columns, fit expects {fit.beta.shape[0]}"
        )
    return logistic(X_new @ fit.beta)
