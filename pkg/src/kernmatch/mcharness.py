"""Monte Carlo driver: replicate generate -> fit -> estimate -> bootstrap.

Replication r draws its data from a 64-bit seed derived from
``(master_seed, r)``; its bootstrap streams are keyed off that seed.
Aggregation walks replications in index order, so reports do not depend
on how many worker processes ran them.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .dgp import GeneratedData, ScenarioSpec, generate
from .errors import BootstrapDegenerateError, EstimationError
from .estimators import Estimand, ObservationalSample, dr, ipw, kernel_match, nn_match
from .kernels import KernelFamily, KernelSpec
from .propensity import add_intercept, fit_logistic
from .resampling import IntervalMethod, bootstrap_many, coverage_and_width, finalize

KINDS = ("kernel", "nn_covariates", "nn_pscore", "ipw", "dr")
FAILURE_SHARE = 0.05
TABLED_BANDWIDTHS = {200: 0.07, 500: 0.05, 1000: 0.03}


def default_bandwidth(n: int) -> float:
    """Tabled bandwidth for N in {200, 500, 1000}, else min(round(N^-1/2, 2), N^-1/4)."""
    if n <= 0:
        raise ValueError("N must be positive")
    if n in TABLED_BANDWIDTHS:
        return TABLED_BANDWIDTHS[n]
    cap = n ** -0.25
    h = min(round(n ** -0.5, 2), cap)
    if h <= 0:
        # tiny N^-1/2 rounds to zero; fall back to the unrounded value
        h = min(n ** -0.5, cap)
    return h


@dataclass(frozen=True)
class MethodSpec:
    """One estimator in a panel.

    ``ps_source`` is ``"estimated"`` (logistic fit on the scenario's
    propensity design, intercept added) or ``"true"``. Kernel methods carry
    ``kernel``; nearest-neighbour methods carry ``k``.
    """

    name: str
    kind: str
    estimand: Estimand = Estimand.ATE
    ps_source: str = "estimated"
    kernel: Optional[KernelSpec] = None
    k: Optional[int] = None
    ci: IntervalMethod = IntervalMethod.PERCENTILE

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}; choose from {', '.join(KINDS)}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "estimand", Estimand.parse(self.estimand))
        object.__setattr__(self, "ci", IntervalMethod.parse(self.ci))
        if self.ps_source not in ("estimated", "true"):
            raise ValueError("ps_source must be 'estimated' or 'true'")
        if kind == "kernel" and self.kernel is None:
            raise ValueError(f"method {self.name!r}: kernel methods need a kernel spec")
        if kind.startswith("nn_"):
            if self.k is None or int(self.k) < 1:
                raise ValueError(f"method {self.name!r}: nearest-neighbour methods need k >= 1")
            object.__setattr__(self, "k", int(self.k))

    @property
    def uses_scores(self) -> bool:
        return self.kind != "nn_covariates"


def default_panel(estimand="ATE", bandwidth: float = 0.05, family=KernelFamily.GAUSSIAN) -> list:
    """The six-method comparison: three matching baselines (normal intervals)
    and kernel matching, IPW, DR (percentile intervals)."""
    e = Estimand.parse(estimand)
    normal, pct = IntervalMethod.NORMAL, IntervalMethod.PERCENTILE
    return [
        MethodSpec("Covariate", "nn_covariates", e, k=1, ci=normal),
        MethodSpec("True PS", "nn_pscore", e, ps_source="true", k=1, ci=normal),
        MethodSpec("Estimated PS", "nn_pscore", e, k=1, ci=normal),
        MethodSpec("Proposed", "kernel", e, kernel=KernelSpec(KernelFamily.parse(family), bandwidth), ci=pct),
        MethodSpec("IPW", "ipw", e, ci=pct),
        MethodSpec("DR", "dr", e, ci=pct),
    ]


def matching_panel(estimand="ATT", bandwidth: float = 0.04, ks: Sequence[int] = (1, 4, 16, 64),
                   family=KernelFamily.GAUSSIAN) -> list:
    """Kernel matching against covariate and score NN matching at several k, plus IPW."""
    e = Estimand.parse(estimand)
    panel = [MethodSpec("Proposed", "kernel", e, kernel=KernelSpec(KernelFamily.parse(family), bandwidth))]
    panel += [MethodSpec(f"NN-Covariates k={k}", "nn_covariates", e, k=k) for k in ks]
    panel += [MethodSpec(f"NN-PS k={k}", "nn_pscore", e, k=k) for k in ks]
    panel.append(MethodSpec("IPW", "ipw", e))
    return panel


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec
    methods: tuple
    reps: int = 100
    bootstrap_b: int = 0
    master_seed: int = 0
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if int(self.reps) < 1:
            raise ValueError("reps must be at least 1")
        if int(self.bootstrap_b) < 0 or int(self.bootstrap_b) == 1:
            raise ValueError("bootstrap_b must be 0 (no intervals) or at least 2")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate method names in panel: {names}")


@dataclass(frozen=True)
class MethodRow:
    method: str
    estimand: str
    bias: float
    sd: float
    rmse: float
    aw: Optional[float]
    cp: Optional[float]
    var_n: float
    n_ok: int
    n_failed: int
    status: str = "ok"


@dataclass
class MonteCarloReport:
    scenario: str
    n: int
    reps: int
    rows: list
    truth: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)

    def row(self, method: str) -> MethodRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)


def replication_seed(master_seed: int, r: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(r),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class UnitBundle:
    """A sample plus the unit-level arrays that must follow it through resampling.

    ``design`` is the propensity design without intercept; ``true_scores``
    is None for real data.
    """

    sample: ObservationalSample
    design: np.ndarray
    true_scores: Optional[np.ndarray] = None

    @property
    def w(self) -> np.ndarray:
        return self.sample.w

    def take(self, idx) -> "UnitBundle":
        ts = None if self.true_scores is None else self.true_scores[idx]
        return UnitBundle(self.sample.take(idx), self.design[idx], ts)


def _apply(m: MethodSpec, sample, scores):
    if m.kind == "kernel":
        return kernel_match(sample, scores, m.kernel, m.estimand).point
    if m.kind == "nn_covariates":
        return nn_match(sample, "covariates", None, m.estimand, m.k).point
    if m.kind == "nn_pscore":
        return nn_match(sample, "pscore", scores, m.estimand, m.k).point
    if m.kind == "ipw":
        return ipw(sample, scores, m.estimand).point
    return dr(sample, scores, m.estimand).point


def evaluate_panel(methods: Sequence[MethodSpec], bundle: UnitBundle) -> np.ndarray:
    """Point estimate of every method on one sample; NaN marks a failure."""
    out = np.full(len(methods), np.nan)
    est_scores = None
    fit_failed = False
    if any(m.uses_scores and m.ps_source == "estimated" for m in methods):
        try:
            est_scores = fit_logistic(add_intercept(bundle.design), bundle.sample.w).scores
        except EstimationError:
            fit_failed = True
    with warnings.catch_warnings():
        # empty kernel neighbourhoods are handled by the nearest-donor fallback
        warnings.simplefilter("ignore", RuntimeWarning)
        for j, m in enumerate(methods):
            if m.uses_scores:
                if m.ps_source == "true":
                    if bundle.true_scores is None:
                        raise ValueError(f"method {m.name!r} needs true scores, which this sample lacks")
                    scores = bundle.true_scores
                elif fit_failed:
                    continue
                else:
                    scores = est_scores
            else:
                scores = None
            try:
                out[j] = _apply(m, bundle.sample, scores)
            except (EstimationError, np.linalg.LinAlgError, ValueError):
                pass
    return out


def bundle_of(data: GeneratedData) -> UnitBundle:
    return UnitBundle(data.sample, np.asarray(data.ps_design, dtype=float), data.true_scores)


def run_replication(config: ExperimentConfig, r: int) -> tuple:
    """Points and intervals of every method for replication ``r``.

    Returns ``(points, lo, hi)``; NaN entries mark failures (an interval is
    NaN when bootstrap is off or its replicates were degenerate).
    """
    seed = replication_seed(config.master_seed, r)
    data = generate(replace(config.scenario, seed=seed))
    bundle = bundle_of(data)
    methods = config.methods
    points = evaluate_panel(methods, bundle)
    m = len(methods)
    lo = np.full(m, np.nan)
    hi = np.full(m, np.nan)
    if config.bootstrap_b > 0:
        try:
            reps, n_redrawn = bootstrap_panel(methods, bundle, config.bootstrap_b, seed)
        except BootstrapDegenerateError:
            return points, lo, hi
        for j, meth in enumerate(methods):
            if not np.isfinite(points[j]):
                continue
            try:
                res = finalize(reps[:, j], meth.ci, config.level, points[j], n_redrawn)
            except (BootstrapDegenerateError, ValueError):
                continue
            lo[j], hi[j] = res.ci
    return points, lo, hi


def bootstrap_panel(methods, bundle: UnitBundle, B: int, seed):
    """Bootstrap replicate matrix (B x methods) of a whole panel, refitting scores per resample."""
    return bootstrap_many(bundle, lambda b: evaluate_panel(methods, b), B, seed)


def _worker(args):
    config, r = args
    return run_replication(config, r)


def run(config: ExperimentConfig, n_jobs: int = 1) -> MonteCarloReport:
    """Run all replications and aggregate Bias/SD/RMSE/AW/CP per method.

    SD divides by the number of successful replications, so
    RMSE^2 = Bias^2 + SD^2. A method failing in more than 5% of
    replications is reported with ``status="failed"``.
    """
    tasks = [(config, r) for r in range(config.reps)]
    if n_jobs > 1 and config.reps > 1:
        ctx = mp.get_context("fork")
        with ctx.Pool(min(n_jobs, config.reps)) as pool:
            results = pool.map(_worker, tasks, chunksize=1)
    else:
        results = [_worker(t) for t in tasks]
    points = np.vstack([r[0] for r in results])
    lo = np.vstack([r[1] for r in results])
    hi = np.vstack([r[2] for r in results])
    return aggregate(config, points, lo, hi)


def _truth(config: ExperimentConfig, estimand: Estimand) -> float:
    # population truths do not depend on the seed; a small draw carries them
    data = generate(replace(config.scenario, seed=0))
    return data.truth(estimand)


def summarize_estimates(est, truth: float, n: int, lo=None, hi=None, name="", estimand="ATE",
                        reps: Optional[int] = None) -> MethodRow:
    """Row of Monte Carlo summaries for one method.

    ``est`` holds one point per replication (NaN = failed). Intervals are
    optional; a replication whose interval is missing while intervals are
    requested counts as failed.
    """
    est = np.asarray(est, dtype=float)
    reps = est.shape[0] if reps is None else reps
    ok = np.isfinite(est)
    with_ci = lo is not None
    if with_ci:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        ok &= np.isfinite(lo) & np.isfinite(hi)
    n_ok = int(ok.sum())
    n_failed = reps - n_ok
    status = "failed" if n_failed > FAILURE_SHARE * reps else "ok"
    if n_ok == 0:
        nan = float("nan")
        return MethodRow(name, str(estimand), nan, nan, nan, None, None, nan, 0, n_failed, "failed")
    err = est[ok] - truth
    bias = float(err.mean())
    sd = float(np.std(est[ok]))
    rmse = float(math.sqrt(np.mean(err * err)))
    aw = cp = None
    if with_ci:
        cw = coverage_and_width(np.column_stack([lo[ok], hi[ok]]), truth)
        aw, cp = cw.aw, cw.cp
    return MethodRow(name, str(estimand), bias, sd, rmse, aw, cp, sd * sd * n, n_ok, n_failed, status)


def aggregate(config: ExperimentConfig, points, lo, hi) -> MonteCarloReport:
    rows = []
    truth = {}
    estimates = {}
    with_ci = config.bootstrap_b > 0
    for j, m in enumerate(config.methods):
        if m.estimand.value not in truth:
            truth[m.estimand.value] = _truth(config, m.estimand)
        t = truth[m.estimand.value]
        estimates[m.name] = points[:, j]
        rows.append(summarize_estimates(
            points[:, j], t, config.scenario.n,
            lo[:, j] if with_ci else None, hi[:, j] if with_ci else None,
            m.name, m.estimand.value, config.reps,
        ))
    return MonteCarloReport(config.scenario.kind, config.scenario.n, config.reps, rows, truth, estimates)


@dataclass(frozen=True)
class SweepCell:
    n: int
    h: float
    kernel: str
    bias: float
    rmse: float


def sweep(scenario: ScenarioSpec, ns: Sequence[int], hs: Sequence[float], kernels: Sequence,
          estimand="ATT", reps: int = 100, master_seed: int = 0, n_jobs: int = 1) -> list:
    """Bias and RMSE of kernel matching on estimated scores over an (N, h, kernel) grid.

    Each N shares its replications (same data seeds) across every h and
    kernel, which is what the bias-versus-bandwidth curves compare.
    """
    if not ns or not hs or not kernels:
        raise ValueError("sweep grids must be nonempty")
    families = [KernelFamily.parse(k) for k in kernels]
    cells = []
    for n in ns:
        panel = [MethodSpec(f"{f.value}:{h!r}", "kernel", estimand, kernel=KernelSpec(f, h))
                 for f in families for h in hs]
        cfg = ExperimentConfig(replace(scenario, n=int(n)), panel, reps, 0, master_seed)
        report = run(cfg, n_jobs)
        i = 0
        for f in families:
            for h in hs:
                row = report.rows[i]
                cells.append(SweepCell(int(n), float(h), f.value, row.bias, row.rmse))
                i += 1
    return cells
