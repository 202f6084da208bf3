"""NSW job-training data: loading, balance summaries, Welch tests, ATT panel.

Earnings stay in dollars everywhere except the balance summary, which
reports them in thousands.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataFormatError
from .estimators import EffectEstimate, Estimand, Method, ObservationalSample
from .kernels import KernelFamily, KernelSpec
from .mcharness import MethodSpec, UnitBundle, bootstrap_panel, evaluate_panel
from .resampling import IntervalMethod, finalize

COVARIATES = ("age", "educ", "black", "hispanic", "married", "nodegr",
              "re74", "re75", "u74", "u75")
COLUMNS = ("treat",) + COVARIATES + ("re78",)
BINARY = ("treat", "black", "hispanic", "married", "nodegr", "u74", "u75")
INTEGER = ("age", "educ")
EARNINGS = ("re74", "re75", "re78")

# spellings seen in the public extracts
ALIASES = {
    "treat": ("treat", "trt", "treated"),
    "age": ("age",),
    "educ": ("educ", "education"),
    "black": ("black",),
    "hispanic": ("hispanic", "hisp", "hispan"),
    "married": ("married", "marr"),
    "nodegr": ("nodegr", "nodeg", "nodegree"),
    "re74": ("re74",),
    "re75": ("re75",),
    "re78": ("re78",),
    "u74": ("u74",),
    "u75": ("u75",),
}

BUNDLED = {"experimental": "nsw_exp.csv", "cps3": "nsw_cps3.csv"}
TABLED_BANDWIDTHS = {"experimental": 0.05, "cps3": 0.04}


@dataclass(frozen=True)
class NswRecord:
    treat: int
    age: int
    educ: int
    black: int
    hispanic: int
    married: int
    nodegr: int
    re74: float
    re75: float
    u74: int
    u75: int
    re78: float


@dataclass
class NswData:
    sample: ObservationalSample
    records: list
    violations: list = field(default_factory=list)
    source: str = ""

    @property
    def n_treated(self) -> int:
        return self.sample.n_treated

    @property
    def n_control(self) -> int:
        return self.sample.n_control

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def bundled_path(name: str) -> Path:
    """Path of a bundled file: ``"experimental"`` or ``"cps3"``."""
    if name not in BUNDLED:
        raise ValueError(f"unknown bundled dataset {name!r}; choose from {sorted(BUNDLED)}")
    return Path(str(resources.files("kernmatch") / "data" / BUNDLED[name]))


def _split(line: str, comma: bool):
    if comma:
        return [c.strip().strip('"') for c in line.split(",")]
    return line.split()


def _resolve(header, schema):
    """Map each canonical column to its index in ``header``."""
    lower = {h.lower(): i for i, h in enumerate(header)}
    index = {}
    for col in COLUMNS:
        if schema and col in schema:
            names = (schema[col],)
        else:
            names = ALIASES[col]
        hit = next((lower[n.lower()] for n in names if n.lower() in lower), None)
        if hit is None:
            raise DataFormatError(f"missing column {col!r} (looked for {', '.join(names)})")
        index[col] = hit
    return index


def _parse_cell(raw: str, col: str, row: int):
    try:
        v = float(raw)
    except ValueError:
        raise DataFormatError(f"row {row}, column {col!r}: cannot parse {raw!r} as a number") from None
    if not math.isfinite(v):
        raise DataFormatError(f"row {row}, column {col!r}: non-finite value {raw!r}")
    if col in BINARY and v not in (0.0, 1.0):
        raise DataFormatError(f"row {row}, column {col!r}: expected 0 or 1, got {raw!r}")
    if col in INTEGER:
        if v != int(v) or v < 0:
            raise DataFormatError(f"row {row}, column {col!r}: expected a nonnegative integer, got {raw!r}")
        return int(v)
    if col in BINARY:
        return int(v)
    if v < 0:
        raise DataFormatError(f"row {row}, column {col!r}: earnings must be nonnegative, got {raw!r}")
    return v


def check_invariants(records: Sequence[NswRecord]) -> list:
    """Rows where a zero-earnings flag disagrees with the earnings value (1-based rows)."""
    out = []
    for i, r in enumerate(records, start=1):
        for flag, amount in (("u74", "re74"), ("u75", "re75")):
            f, a = getattr(r, flag), getattr(r, amount)
            if (f == 1) != (a == 0):
                out.append(f"row {i}: {flag}={f} but {amount}={a:g}")
    return out


def load_nsw(path, schema: Optional[dict] = None) -> NswData:
    """Read an NSW-style file into a sample plus typed records.

    Comma- or whitespace-delimited, with a header row. ``schema`` maps
    canonical names (``treat``, ``age``, ..., ``re78``) to the file's own
    column names; common spellings are recognized without it. Outcome is
    ``re78``, treatment ``treat``, and covariates are :data:`COVARIATES` in
    that order. Zero-earnings flag mismatches are collected in
    ``violations``, not corrected.

    Raises
    ------
    DataFormatError
        Missing file, empty file, missing column, or an unparseable cell
        (the message names the 1-based data row and the column).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror or exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path} is empty")
    comma = "," in lines[0]
    header = _split(lines[0], comma)
    index = _resolve(header, schema)
    records = []
    for row, line in enumerate(lines[1:], start=1):
        cells = _split(line, comma)
        if len(cells) != len(header):
            raise DataFormatError(f"row {row}: expected {len(header)} fields, found {len(cells)}")
        values = {col: _parse_cell(cells[i], col, row) for col, i in index.items()}
        records.append(NswRecord(**values))
    if not records:
        raise DataFormatError(f"{path} has a header but no data rows")
    y = np.array([r.re78 for r in records], dtype=float)
    w = np.array([r.treat for r in records], dtype=np.int64)
    x = np.array([[getattr(r, c) for c in COVARIATES] for r in records], dtype=float)
    return NswData(ObservationalSample(y, w, x), records, check_invariants(records), str(path))


def write_nsw(records: Sequence[NswRecord], path) -> None:
    """Write records as comma-separated text that :func:`load_nsw` reads back unchanged."""
    names = [f.name for f in fields(NswRecord)]
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for r in records:
            fh.write(",".join(repr(getattr(r, n)) for n in names) + "\n")


# -- Welch two-sample t-test ---------------------------------------------------

def _betacf(a: float, b: float, x: float, eps: float = 1e-15, max_iter: int = 500) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the continued fraction converges fast for x < (a + 1)/(a + b + 2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    return betainc_reg(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def welch_t_test(a, b) -> WelchResult:
    """Unequal-variance two-sample t-test with Welch-Satterthwaite df."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    if va + vb == 0.0:
        raise ValueError("both samples have zero variance")
    t = float((a.mean() - b.mean()) / math.sqrt(va + vb))
    df = float((va + vb) ** 2 / (va * va / (a.size - 1) + vb * vb / (b.size - 1)))
    return WelchResult(t, df, student_t_sf2(t, df))


# -- balance summary -------------------------------------------------------------

LABELS = {"age": "Age", "educ": "Educ", "black": "Black", "hispanic": "Hispanic",
          "married": "Married", "nodegr": "Nodegr", "re74": "Re74", "re75": "Re75",
          "u74": "U74", "u75": "U75"}


@dataclass(frozen=True)
class BalanceRow:
    variable: str
    treated_mean: float
    treated_sd: float
    control_mean: float
    control_sd: float
    comparison_mean: Optional[float]
    comparison_sd: Optional[float]
    p_control: float
    p_comparison: Optional[float]


def balance_table(experimental: NswData, comparison: Optional[NswData] = None) -> list:
    """Means, SDs (ddof 1) and Welch p-values per covariate.

    Treated vs experimental controls, and treated vs the comparison file's
    controls when given. Earnings are shown in thousands of dollars.
    """
    t = experimental.sample.treated
    rows = []
    for j, name in enumerate(COVARIATES):
        scale = 1000.0 if name in EARNINGS else 1.0
        x = experimental.sample.x[:, j] / scale
        xt, xc = x[t], x[~t]
        cm = csd = pc = None
        if comparison is not None:
            z = comparison.sample.x[:, j] / scale
            zc = z[~comparison.sample.treated]
            cm, csd = float(zc.mean()), float(zc.std(ddof=1))
            pc = welch_t_test(xt, zc).p
        rows.append(BalanceRow(
            LABELS[name], float(xt.mean()), float(xt.std(ddof=1)),
            float(xc.mean()), float(xc.std(ddof=1)), cm, csd,
            welch_t_test(xt, xc).p, pc,
        ))
    return rows


# -- ATT panel ---------------------------------------------------------------------

@dataclass(frozen=True)
class PanelEstimate:
    name: str
    estimate: EffectEstimate
    n_redrawn: int = 0


def nsw_panel(bandwidth: float = 0.05, family=KernelFamily.GAUSSIAN, k: int = 1) -> list:
    """Kernel matching, covariate NN, score NN, IPW and DR for the ATT, all with normal intervals."""
    normal = IntervalMethod.NORMAL
    return [
        MethodSpec("Proposed", "kernel", Estimand.ATT,
                   kernel=KernelSpec(KernelFamily.parse(family), bandwidth), ci=normal),
        MethodSpec("Covariates", "nn_covariates", Estimand.ATT, k=k, ci=normal),
        MethodSpec("Estimated PS", "nn_pscore", Estimand.ATT, k=k, ci=normal),
        MethodSpec("IPW", "ipw", Estimand.ATT, ci=normal),
        MethodSpec("DR", "dr", Estimand.ATT, ci=normal),
    ]


_METHOD_TAG = {"kernel": Method.KERNEL, "nn_covariates": Method.NN_COVARIATES,
               "nn_pscore": Method.NN_PSCORE, "ipw": Method.IPW, "dr": Method.DR}


def analyze_att(sample: ObservationalSample, methods: Optional[Sequence[MethodSpec]] = None,
                bootstrap_b: int = 400, seed: int = 0, level: float = 0.95,
                design: Optional[np.ndarray] = None) -> list:
    """Point estimates, bootstrap SEs and intervals for a method panel.

    The propensity model is logistic on an intercept plus ``design``
    (default: every covariate column of ``sample.x``, untransformed), refitted
    on each bootstrap resample. All methods share the same B resamples.
    ``bootstrap_b = 0`` returns points only.
    """
    methods = list(methods) if methods is not None else nsw_panel()
    bundle = UnitBundle(sample, sample.x if design is None else np.asarray(design, dtype=float))
    points = evaluate_panel(methods, bundle)
    reps = None
    n_redrawn = 0
    if bootstrap_b > 0:
        reps, n_redrawn = bootstrap_panel(methods, bundle, bootstrap_b, seed)
    out = []
    for j, m in enumerate(methods):
        est = EffectEstimate(m.estimand, _METHOD_TAG[m.kind], float(points[j]))
        if reps is not None and np.isfinite(points[j]):
            res = finalize(reps[:, j], m.ci, level, float(points[j]), n_redrawn)
            est = est.with_interval(res.se, res.ci)
        out.append(PanelEstimate(m.name, est, n_redrawn))
    return out


def dataset_label(path) -> str:
    """``"cps3"`` when the file name mentions CPS, else ``"experimental"``."""
    return "cps3" if re.search(r"cps", Path(path).name, re.IGNORECASE) else "experimental"
