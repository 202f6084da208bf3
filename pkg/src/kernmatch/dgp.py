"""Synthetic data-generating processes with known treatment effects.

Scenarios ``s1``..``s5`` are the five simulation settings, ``misspec``
the latent-index design with a logistic selection error, and ``overlap``
the covariate-resampling design whose selection coefficients can be
scaled down to improve overlap.

Randomness comes from numpy's Philox (counter-based, 64-bit) generator
keyed by the scenario seed, so draws are reproducible across platforms.
"""

from __future__ import annotations

import csv
import functools
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.special import expit

from .estimators import ObservationalSample

SCENARIOS = ("s1", "s2", "s3", "s4", "s5", "misspec", "overlap")

# shared covariance of the four-covariate designs: (1/3) * blockdiag([[1,-1],[-1,2]] x 2)
SIGMA4 = np.array([
    [1.0, -1.0, 0.0, 0.0],
    [-1.0, 2.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, -1.0],
    [0.0, 0.0, -1.0, 2.0],
]) / 3.0
THETA = np.ones(4)

OVERLAP_ATT_BENCHMARK = 2334.0  # dollars; reference ATT for the NSW/PSID design


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    n: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.kind!r}; choose from {', '.join(SCENARIOS)}")
        object.__setattr__(self, "kind", kind)
        if int(self.n) < 20:
            raise ValueError(f"N must be at least 20, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        scale = self.params.get("scale")
        if kind == "overlap" and scale is not None and float(scale) not in (1.0, 0.2):
            raise ValueError("overlap scale must be 1 (bad overlap) or 1/5 (good overlap)")


@dataclass
class GeneratedData:
    """A draw from a scenario plus the population truths.

    ``design`` is the covariate block the propensity model should be
    fitted on (without intercept); ``None`` means ``sample.x``.
    """

    sample: ObservationalSample
    true_scores: np.ndarray
    true_ate: float
    true_att: float
    design: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def ps_design(self) -> np.ndarray:
        return self.sample.x if self.design is None else self.design

    def truth(self, estimand) -> float:
        return self.true_ate if str(getattr(estimand, "value", estimand)).upper() == "ATE" else self.true_att


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def _mvnormal4(rng, n):
    L = np.linalg.cholesky(SIGMA4)
    return rng.standard_normal((n, 4)) @ L.T


def _assemble(x, p, y0, y1, rng, **kw) -> GeneratedData:
    w = (rng.random(x.shape[0]) < p).astype(np.int64)
    y = np.where(w == 1, y1, y0)
    return GeneratedData(ObservationalSample(y, w, x), p, **kw)


# -- population truths -------------------------------------------------------

@functools.lru_cache(maxsize=None)
def s1_true_att() -> float:
    """E[5 + 2 X1 + 4 X2 | W = 1] by 2-D Gauss-Legendre quadrature on the unit square."""
    t, wt = leggauss(200)
    u = 0.5 * t  # nodes on [-1/2, 1/2]
    x1, x2 = np.meshgrid(u, u, indexing="ij")
    ww = np.outer(wt, wt)
    p = expit(x1 + 2 * x2)
    return float(np.sum(ww * p * (5 + 2 * x1 + 4 * x2)) / np.sum(ww * p))


def _s5_effect(x1, x2):
    return np.sin(2 + x1 + 0.5 * x2) - np.sin(1 + x1 + 0.5 * x2)


def s5_true_ate() -> float:
    # E sin(a + Z) = sin(a) exp(-1/2) for Z ~ N(0, 1)
    return float(math.exp(-0.5) * 0.5 * sum(
        math.sin(2 + 0.5 * b) - math.sin(1 + 0.5 * b) for b in (0.0, 1.0)
    ))


@functools.lru_cache(maxsize=None)
def s5_true_att() -> float:
    """E[Y(1) - Y(0) | W = 1] by Gauss-Hermite quadrature over (X1, X3), summed over X2."""
    z, wz = hermegauss(160)
    wz = wz / wz.sum()
    x1, x3 = np.meshgrid(z, z, indexing="ij")
    ww = np.outer(wz, wz)
    num = den = 0.0
    for x2 in (0.0, 1.0):
        p = expit(2 * x1 + x2 - 3 * x3 + 3)
        num += 0.5 * np.sum(ww * p * _s5_effect(x1, x2))
        den += 0.5 * np.sum(ww * p)
    return float(num / den)


# -- simulation settings -----------------------------------------------------

def _setting1(n, rng):
    x = rng.uniform(-0.5, 0.5, (n, 2))
    p = expit(x[:, 0] + 2 * x[:, 1])
    y0 = 3 * x[:, 0] - 3 * x[:, 1] + rng.standard_normal(n)
    y1 = 5 + 5 * x[:, 0] + x[:, 1] + rng.standard_normal(n)
    return _assemble(x, p, y0, y1, rng, true_ate=5.0, true_att=s1_true_att())


def _setting2(n, rng):
    x = rng.uniform(-0.5, 0.5, (n, 2))
    p = expit(2 * x[:, 1])
    y0 = 10 * x[:, 0] + rng.standard_normal(n)
    y1 = 5 - 10 * x[:, 0] + rng.standard_normal(n)
    # X1 is independent of the score, so the ATT equals the ATE
    return _assemble(x, p, y0, y1, rng, true_ate=5.0, true_att=5.0)


def _setting3(n, rng):
    x = _mvnormal4(rng, n)
    idx = x @ THETA
    p = expit(x @ np.array([1.0, -3.0, 2.0, 1.0]))
    base = 0.4 + 0.25 * np.sin(8 * idx - 5) + 0.4 * np.exp(-16 * (4 * idx - 2.5) ** 2)
    eps = rng.standard_normal(n)
    return _assemble(x, p, base + eps, base + 1 + eps, rng, true_ate=1.0, true_att=1.0)


def _setting4(n, rng):
    x = _mvnormal4(rng, n)
    idx = x @ THETA
    p = expit(x.sum(axis=1))
    base = 0.15 + 0.7 * expit(math.sqrt(2) * idx)
    eps = rng.standard_normal(n)
    return _assemble(x, p, base + eps, base + 1 + eps, rng, true_ate=1.0, true_att=1.0)


def _setting5(n, rng):
    x1 = rng.standard_normal(n)
    x2 = (rng.random(n) < 0.5).astype(float)
    x3 = rng.standard_normal(n)
    x = np.column_stack([x1, x2, x3])
    p = expit(2 * x1 + x2 - 3 * x3 + 3)
    y0 = np.sin(1 + x1 + 0.5 * x2) + rng.standard_normal(n)
    y1 = np.sin(2 + x1 + 0.5 * x2) + rng.standard_normal(n)
    return _assemble(x, p, y0, y1, rng, true_ate=s5_true_ate(), true_att=s5_true_att())


_SETTINGS = {"s1": _setting1, "s2": _setting2, "s3": _setting3, "s4": _setting4, "s5": _setting5}


def generate(spec: ScenarioSpec) -> GeneratedData:
    """Draw one sample of size ``spec.n`` from the scenario."""
    rng = make_rng(spec.seed)
    if spec.kind in _SETTINGS:
        return _SETTINGS[spec.kind](spec.n, rng)
    if spec.kind == "misspec":
        return generate_misspec(spec.n, rng, spec.params.get("ps_form", "linear"))
    params = dict(spec.params)
    coeffs = params.pop("coefficients", None) or default_overlap_coefficients()
    source = params.pop("source", None)
    if source is None:
        source = default_overlap_source()
    return generate_overlap(coeffs, source, float(params.get("scale", 1.0)), spec.n, rng)


# -- misspecification design -------------------------------------------------

PS_FORMS = ("linear", "interactions")


def pairwise_interactions(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = x.shape[1]
    cols = [x[:, i] * x[:, j] for i in range(d) for j in range(i + 1, d)]
    return np.column_stack([x] + cols)


def generate_misspec(n, seed, ps_form: str = "linear") -> GeneratedData:
    """Latent-index design: Z = X1+X2+X3+X4, T = 1{Z - U > 0}, U standard logistic.

    Y(0) = Z + eps, Y(1) = Y(0) + 1. ``ps_form`` selects the propensity
    design handed to the fit: ``"linear"`` (the four covariates, correctly
    specified) or ``"interactions"`` (covariates plus all pairwise products).
    """
    ps_form = str(ps_form).lower()
    if ps_form in ("linearplusinteractions", "linear+interactions"):
        ps_form = "interactions"
    if ps_form not in PS_FORMS:
        raise ValueError(f"ps_form must be one of {PS_FORMS}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    x = _mvnormal4(rng, n)
    z = x.sum(axis=1)
    u = rng.logistic(size=n)
    w = (z - u > 0).astype(np.int64)
    y0 = z + rng.standard_normal(n)
    y = y0 + w
    design = x if ps_form == "linear" else pairwise_interactions(x)
    return GeneratedData(
        ObservationalSample(y, w, x), expit(z), 1.0, 1.0, design=design,
        meta={"ps_form": ps_form},
    )


# -- overlap design ------------------------------------------------------------

_TERM = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:(\^)\s*2|\*\s*([A-Za-z_][A-Za-z0-9_]*))?\s*$")


def _term_values(term: str, source: dict) -> np.ndarray:
    """Evaluate ``name``, ``name^2`` or ``a*b`` against named source columns."""
    if term == "intercept":
        n = len(next(iter(source.values())))
        return np.ones(n)
    m = _TERM.match(term)
    if not m:
        raise ValueError(f"cannot parse term {term!r}")
    a, sq, b = m.groups()
    for name in (a, b):
        if name is not None and name not in source:
            raise ValueError(f"term {term!r} refers to unknown column {name!r}")
    va = np.asarray(source[a], dtype=float)
    if sq:
        return va * va
    if b:
        return va * np.asarray(source[b], dtype=float)
    return va


@dataclass(frozen=True)
class OverlapCoefficients:
    """Selection index ``alpha + beta'Z`` and outcome regressions on Z.

    ``terms`` names the columns of Z (no intercept); ``delta0``/``delta1``
    are intercept-first coefficient vectors of length ``len(terms) + 1``.
    ``covariates`` lists the raw source columns used for covariate matching.
    """

    terms: tuple
    alpha: float
    beta: np.ndarray
    delta0: np.ndarray
    delta1: np.ndarray
    sigma0: float = 1.0
    sigma1: float = 1.0
    covariates: tuple = ()

    def __post_init__(self):
        k = len(self.terms)
        for name, vec, size in (("beta", self.beta, k), ("delta0", self.delta0, k + 1),
                                ("delta1", self.delta1, k + 1)):
            if np.asarray(vec).shape != (size,):
                raise ValueError(f"{name} must have {size} entries, got {np.asarray(vec).shape}")

    def features(self, source: dict) -> np.ndarray:
        return np.column_stack([_term_values(t, source) for t in self.terms])


def load_overlap_coefficients(path) -> OverlapCoefficients:
    """Read a coefficient CSV with columns ``block,term,value``.

    Blocks: ``alpha`` (term ``intercept``), ``beta``, ``delta0``,
    ``delta1`` (each with an ``intercept`` row for the deltas), optional
    ``sigma0``/``sigma1`` and ``covariate`` rows (value ignored).
    """
    rows = {}
    covariates = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"block", "term", "value"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
        for line, r in enumerate(reader, start=2):
            block = r["block"].strip().lower()
            if block == "covariate":
                covariates.append(r["term"].strip())
                continue
            try:
                value = float(r["value"])
            except ValueError:
                raise ValueError(f"{path}:{line}: bad value {r['value']!r}") from None
            rows.setdefault(block, {})[r["term"].strip()] = value
    for block in ("alpha", "beta", "delta0", "delta1"):
        if block not in rows:
            raise ValueError(f"{path}: missing coefficient block {block!r}")
    terms = tuple(rows["beta"].keys())

    def vec(block, with_intercept):
        d = rows[block]
        names = (("intercept",) if with_intercept else ()) + terms
        absent = [t for t in names if t not in d]
        if absent:
            raise ValueError(f"{path}: block {block!r} lacks term(s) {absent}")
        return np.array([d[t] for t in names])

    def scalar(block, default):
        # single-entry blocks: the term label is free text
        return float(next(iter(rows[block].values()))) if block in rows else default

    return OverlapCoefficients(
        terms=terms,
        alpha=scalar("alpha", 0.0),
        beta=vec("beta", False),
        delta0=vec("delta0", True),
        delta1=vec("delta1", True),
        sigma0=scalar("sigma0", 1.0),
        sigma1=scalar("sigma1", 1.0),
        covariates=tuple(covariates),
    )


def write_overlap_coefficients(coeffs: OverlapCoefficients, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["block", "term", "value"])
        wr.writerow(["alpha", "intercept", repr(float(coeffs.alpha))])
        for t, v in zip(coeffs.terms, coeffs.beta):
            wr.writerow(["beta", t, repr(float(v))])
        for block, vec in (("delta0", coeffs.delta0), ("delta1", coeffs.delta1)):
            for t, v in zip(("intercept",) + coeffs.terms, vec):
                wr.writerow([block, t, repr(float(v))])
        wr.writerow(["sigma0", "value", repr(float(coeffs.sigma0))])
        wr.writerow(["sigma1", "value", repr(float(coeffs.sigma1))])
        for c in coeffs.covariates:
            wr.writerow(["covariate", c, ""])


def read_source_table(path) -> dict:
    """Numeric CSV with a header row, returned as ``{column: ndarray}``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        data = [[float(v) for v in row] for row in reader if row]
    arr = np.array(data, dtype=float)
    return {h: arr[:, i] for i, h in enumerate(header)}


def default_overlap_coefficients() -> OverlapCoefficients:
    with resources.as_file(resources.files("kernmatch") / "data" / "overlap_coefficients.csv") as p:
        return load_overlap_coefficients(p)


def default_overlap_source() -> dict:
    with resources.as_file(resources.files("kernmatch") / "data" / "overlap_source.csv") as p:
        return read_source_table(p)


def overlap_truth(coeffs: OverlapCoefficients, source: dict, scale: float) -> float:
    """Population ATT when rows are drawn uniformly from ``source``.

    Exact: sum_r F(s(alpha + beta'Z_r)) (delta1 - delta0)'[1, Z_r] / sum_r F(...).
    """
    Z = coeffs.features(source)
    p = expit(scale * (coeffs.alpha + Z @ coeffs.beta))
    Z1 = np.column_stack([np.ones(Z.shape[0]), Z])
    effect = Z1 @ (coeffs.delta1 - coeffs.delta0)
    return float(np.sum(p * effect) / np.sum(p))


def generate_overlap(coeffs: OverlapCoefficients, source: dict, scale: float, n: int,
                     seed) -> GeneratedData:
    """Resample covariate rows and draw treatment and outcomes from fixed coefficients.

    T* = scale * (alpha + beta'Z) - U with U standard logistic, T = 1{T* > 0};
    Y(w) = delta_w'[1, Z] + sigma_w * eps_w. ``scale = 1`` keeps the fitted
    (poorly overlapping) selection equation, ``scale = 1/5`` shrinks it.
    """
    if coeffs is None:
        raise ValueError("overlap design needs coefficient blocks")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    n_source = len(next(iter(source.values())))
    rows = rng.integers(0, n_source, size=n)
    sub = {k: np.asarray(v, dtype=float)[rows] for k, v in source.items()}
    Z = coeffs.features(sub)
    index = scale * (coeffs.alpha + Z @ coeffs.beta)
    u = rng.logistic(size=n)
    w = (index - u > 0).astype(np.int64)
    Z1 = np.column_stack([np.ones(n), Z])
    y0 = Z1 @ coeffs.delta0 + coeffs.sigma0 * rng.standard_normal(n)
    y1 = Z1 @ coeffs.delta1 + coeffs.sigma1 * rng.standard_normal(n)
    y = np.where(w == 1, y1, y0)
    cov_names = coeffs.covariates or tuple(t for t in coeffs.terms if _TERM.match(t).groups()[1:] == (None, None))
    x = np.column_stack([sub[c] for c in cov_names])
    att = overlap_truth(coeffs, source, scale)
    return GeneratedData(
        ObservationalSample(y, w, x), expit(index), float("nan"), att, design=Z,
        meta={"scale": scale, "att_benchmark": OVERLAP_ATT_BENCHMARK},
    )
