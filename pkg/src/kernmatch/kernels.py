"""Kernel functions used for smoothing on the propensity-score scale.

Kernels are evaluated *unscaled*: callers pass an already normalized
argument ``u = (p_j - p_i) / h``. The ``1/h`` prefactor cancels in every
weight ratio used by the estimators, so it is never applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Gaussian tail mass beyond |u| = 12 is below 1e-30
GAUSSIAN_TRUNCATION = 12.0


class KernelFamily(str, Enum):
    GAUSSIAN = "gaussian"
    EPANECHNIKOV = "epanechnikov"

    @classmethod
    def parse(cls, name: "str | KernelFamily") -> "KernelFamily":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown kernel {name!r}; expected 'gaussian' or 'epanechnikov'"
            ) from None


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus bandwidth ``h`` (on the propensity-score scale)."""

    family: KernelFamily = KernelFamily.GAUSSIAN
    bandwidth: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        h = float(self.bandwidth)
        if not (math.isfinite(h) and h > 0):
            raise ValueError(f"bandwidth must be positive and finite, got {self.bandwidth!r}")
        object.__setattr__(self, "bandwidth", h)

    def __str__(self):
        return f"{self.family.value}(h={self.bandwidth:g})"


def eval_kernel(spec: KernelSpec, u: float) -> float:
    """Evaluate K(u) for a single finite argument."""
    u = float(u)
    if not math.isfinite(u):
        raise ValueError(f"kernel argument must be finite, got {u!r}")
    if spec.family is KernelFamily.GAUSSIAN:
        return _INV_SQRT_2PI * math.exp(-0.5 * u * u)
    au = abs(u)
    return 0.75 * (1.0 - au * au) if au < 1.0 else 0.0


def eval_kernel_array(spec: KernelSpec, u) -> np.ndarray:
    """Vectorized :func:`eval_kernel`."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("kernel argument must be finite")
    if spec.family is KernelFamily.GAUSSIAN:
        return _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    au = np.abs(u)
    return np.where(au < 1.0, 0.75 * (1.0 - au * au), 0.0)


@dataclass(frozen=True)
class MomentReport:
    """Numerical values of the four kernel integrals.

    m0 = int K, m2 = int u^2 K, k2 = int K^2, m3abs = int |u|^3 K.
    """

    family: KernelFamily
    m0: float
    m2: float
    k2: float
    m3abs: float

    def as_dict(self):
        return {"m0": self.m0, "m2": self.m2, "k2": self.k2, "m3abs": self.m3abs}


def verify_moments(spec: KernelSpec) -> MomentReport:
    """Compute the kernel moment integrals by adaptive quadrature.

    The Gaussian is integrated over [-12, 12]; the Epanechnikov over its
    exact support [-1, 1]. By symmetry each integral is twice the integral
    over the positive half-line, which keeps the integrands smooth.
    """
    if spec.family is KernelFamily.GAUSSIAN:
        upper = GAUSSIAN_TRUNCATION
    else:
        upper = 1.0

    def K(u):
        return eval_kernel(spec, u)

    def half(f):
        val, _ = integrate.quad(f, 0.0, upper, epsabs=1e-14, epsrel=1e-13, limit=200)
        return 2.0 * val

    return MomentReport(
        family=spec.family,
        m0=half(K),
        m2=half(lambda u: u * u * K(u)),
        k2=half(lambda u: K(u) ** 2),
        m3abs=half(lambda u: u**3 * K(u)),
    )
