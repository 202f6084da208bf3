"""Command-line entry point: ``kernmatch <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime or data error. Options
may also come from an INI-style ``--config`` file (flat ``key = value``
lines, optionally under a ``[subcommand]`` section); command-line flags
win over the file. ``KERNMATCH_OUTDIR`` prefixes relative ``--out`` paths.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataio
from .dgp import ScenarioSpec, default_overlap_source, load_overlap_coefficients, read_source_table
from .errors import DataFormatError, EstimationError
from .kernels import KernelFamily, KernelSpec, verify_moments
from .mcharness import (
    ExperimentConfig,
    MethodSpec,
    default_bandwidth,
    default_panel,
    matching_panel,
    run,
    sweep,
)
from .propensity import add_intercept, fit_logistic

log = logging.getLogger("kernmatch")

STOCHASTIC = {"simulate", "sweep", "misspec", "overlap"}
REPORT_COLUMNS = ["method", "estimand", "bias", "sd", "rmse", "aw", "cp", "var_n",
                  "n_ok", "n_failed", "status"]


class UsageError(Exception):
    pass


# -- output -----------------------------------------------------------------------

@dataclass
class Table:
    header: list
    rows: list = field(default_factory=list)


def _cell_csv(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.6g" % float(v)
    return str(v)


def _cell_text(v) -> str:
    if isinstance(v, (float, np.floating)) and not isinstance(v, bool):
        v = float(v)
        if v != v:
            return "nan"
        return f"{v:.4f}" if abs(v) < 1e5 else "%.6g" % v
    return "" if v is None else _cell_csv(v)


def render(table: Table, fmt: str) -> str:
    """CSV (6 significant digits, '.' decimal) or column-aligned text."""
    if fmt == "csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(table.header)
        for row in table.rows:
            wr.writerow([_cell_csv(v) for v in row])
        return buf.getvalue()
    cells = [list(map(str, table.header))] + [[_cell_text(v) for v in row] for row in table.rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(table.header))]
    lines = []
    for k, r in enumerate(cells):
        first = r[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join([first] + rest).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def output_path(path) -> Optional[Path]:
    if path is None or str(path) == "-":
        return None
    p = Path(path)
    outdir = os.environ.get("KERNMATCH_OUTDIR")
    if outdir and not p.is_absolute():
        p = Path(outdir) / p
    return p


def emit(table: Table, fmt: str = "csv", path=None) -> None:
    """Write ``table`` to ``path`` (stdout when None or ``-``)."""
    if fmt not in ("csv", "text"):
        raise ValueError("format must be 'csv' or 'text'")
    text = render(table, fmt)
    p = output_path(path)
    if p is None:
        sys.stdout.write(text)
        return
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        fh.write(text)


def report_table(report, extra: Optional[dict] = None) -> Table:
    extra = extra or {}
    header = list(extra) + REPORT_COLUMNS
    rows = []
    for r in report.rows:
        rows.append(list(extra.values()) + [r.method, r.estimand, r.bias, r.sd, r.rmse, r.aw,
                                            r.cp, r.var_n, r.n_ok, r.n_failed, r.status])
    return Table(header, rows)


# -- argument parsing --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text!r}")
    return v


def _common(p, seeded=True, threads=True):
    p.add_argument("--config", help="INI-style file of option defaults (flags override it)")
    p.add_argument("--out", help="output file (default: stdout); relative paths honour KERNMATCH_OUTDIR")
    p.add_argument("--format", choices=("csv", "text"), help="output format (default: csv)")
    if seeded:
        p.add_argument("--seed", type=int, help="master seed (required: no clock seeding)")
    if threads:
        p.add_argument("--threads", type=_positive_int, help="worker processes for replications (default: 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kernmatch",
                     description="Kernel matching on propensity scores: estimation, simulation, NSW analysis.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="SUBCOMMAND")

    p = sub.add_parser("simulate", help="Monte Carlo table for one scenario and method panel")
    p.add_argument("--scenario", choices=("s1", "s2", "s3", "s4", "s5"), help="simulation setting")
    p.add_argument("--n", type=_positive_int, help="sample size per replication")
    p.add_argument("--reps", type=_positive_int, help="Monte Carlo replications (default: 1000)")
    p.add_argument("--boot", type=_nonneg_int, help="bootstrap resamples per replication; 0 disables intervals (default: 400)")
    p.add_argument("--estimand", choices=("ATE", "ATT", "ate", "att"), help="default: ATE")
    p.add_argument("--kernel", help="gaussian or epanechnikov (default: gaussian)")
    p.add_argument("--bandwidth", type=float, help="kernel bandwidth (default: tabled by N)")
    p.add_argument("--level", type=float, help="interval level (default: 0.95)")
    _common(p)

    p = sub.add_parser("sweep", help="bias/RMSE of kernel matching over (N, h, kernel)")
    p.add_argument("--scenario", choices=("s1", "s2", "s3", "s4", "s5"), help="simulation setting")
    p.add_argument("--ns", type=_int_list, help="sample sizes, comma-separated (default: 200,500,1000)")
    p.add_argument("--hs", type=_float_list, help="bandwidths, comma-separated (default: 0.01..0.09)")
    p.add_argument("--kernels", type=_str_list, help="kernel families, comma-separated (default: gaussian,epanechnikov)")
    p.add_argument("--estimand", choices=("ATE", "ATT", "ate", "att"), help="default: ATT")
    p.add_argument("--reps", type=_positive_int, help="replications per cell (default: 200)")
    _common(p)

    p = sub.add_parser("analyze", help="ATT panel or balance table for an NSW-style file")
    p.add_argument("--data", help="input file, or 'experimental' / 'cps3' for the bundled samples")
    p.add_argument("--bandwidth", type=float, help="kernel bandwidth (default: 0.05 experimental, 0.04 CPS-3)")
    p.add_argument("--kernel", help="gaussian or epanechnikov (default: gaussian)")
    p.add_argument("--k", type=_positive_int, help="neighbours for the matching baselines (default: 1)")
    p.add_argument("--boot", type=_nonneg_int, help="bootstrap resamples; 0 gives points only (default: 400)")
    p.add_argument("--level", type=float, help="interval level (default: 0.95)")
    p.add_argument("--balance", action="store_true", default=None,
                   help="emit the covariate balance table instead of the ATT panel")
    p.add_argument("--comparison", help="second file whose controls enter the balance table")
    p.add_argument("--ps-columns", type=_str_list,
                   help="covariates entering the propensity model, comma-separated (default: all ten)")
    p.add_argument("--beta-out", help="also write the fitted propensity coefficients (beta0..betad) here")
    _common(p, threads=False)

    p = sub.add_parser("misspec", help="latent-index design with correct or interacted propensity design")
    p.add_argument("--n", type=_positive_int, help="sample size (default: 500)")
    p.add_argument("--reps", type=_positive_int, help="replications (default: 1000)")
    p.add_argument("--ps-form", choices=("linear", "interactions", "both"), help="default: both")
    p.add_argument("--ks", type=_int_list, help="neighbour counts (default: 1,4,16,64)")
    p.add_argument("--bandwidth", type=float, help="kernel bandwidth (default: 0.04)")
    p.add_argument("--estimand", choices=("ATE", "ATT", "ate", "att"), help="default: ATT")
    _common(p)

    p = sub.add_parser("overlap", help="bad/good overlap design resampling NSW-PSID covariates")
    p.add_argument("--n", type=_positive_int, help="sample size (default: 400)")
    p.add_argument("--reps", type=_positive_int, help="replications (default: 1000)")
    p.add_argument("--scale", choices=("1", "0.2", "both"), help="selection-index scale (default: both)")
    p.add_argument("--ks", type=_int_list, help="neighbour counts (default: 1,4,16)")
    p.add_argument("--bandwidth", type=float, help="kernel bandwidth (default: 0.05)")
    p.add_argument("--coefficients", help="coefficient CSV (block,term,value); default: bundled")
    p.add_argument("--source", help="covariate rows to resample (CSV with header); default: bundled")
    _common(p)

    p = sub.add_parser("kernel-check", help="numeric moments of a kernel")
    p.add_argument("--kernel", help="gaussian, epanechnikov or all (default: all)")
    _common(p, seeded=False, threads=False)
    return parser


DEFAULTS = {
    "simulate": dict(reps=1000, boot=400, estimand="ATE", kernel="gaussian", level=0.95),
    "sweep": dict(ns=[200, 500, 1000], hs=[0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09],
                  kernels=["gaussian", "epanechnikov"], estimand="ATT", reps=200),
    "analyze": dict(kernel="gaussian", k=1, boot=400, level=0.95, balance=False),
    "misspec": dict(n=500, reps=1000, ps_form="both", ks=[1, 4, 16, 64], bandwidth=0.04, estimand="ATT"),
    "overlap": dict(n=400, reps=1000, scale="both", ks=[1, 4, 16], bandwidth=0.05),
    "kernel-check": dict(kernel="all"),
}
COMMON_DEFAULTS = dict(format="csv", threads=1)


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def read_config(path, command) -> tuple:
    """Flat options and dotted ``method.<i>.<field>`` / ``schema.<col>`` entries from an INI file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    if not text.lstrip().startswith("["):
        text = "[kernmatch]\n" + text
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"config {path}: {exc}") from None
    flat = {}
    for section in ("kernmatch", command):
        if cp.has_section(section):
            flat.update(dict(cp.items(section)))
    for section in cp.sections():
        if section not in ("kernmatch",) + tuple(DEFAULTS):
            raise UsageError(f"config {path}: unknown section [{section}]")
    dotted = {k: v for k, v in flat.items() if "." in k}
    plain = {k.replace("-", "_"): v for k, v in flat.items() if "." not in k}
    return plain, dotted


def resolve(parser, args) -> tuple:
    """Merge flags over config over defaults. Returns (options, dotted config entries)."""
    sub = _subparser(parser, args.command)
    types = {a.dest: a for a in sub._actions if a.dest not in ("help",)}
    opts = dict(COMMON_DEFAULTS)
    opts.update(DEFAULTS[args.command])
    dotted = {}
    if getattr(args, "config", None):
        plain, dotted = read_config(args.config, args.command)
        for key, raw in plain.items():
            if key not in types or key == "config":
                raise UsageError(f"config {args.config}: unknown option {key!r} for {args.command}")
            action = types[key]
            if isinstance(action, argparse._StoreTrueAction):
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                try:
                    value = action.type(raw) if action.type else raw
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    raise UsageError(f"config {args.config}: bad value for {key}: {exc}") from None
                if action.choices is not None and value not in action.choices:
                    raise UsageError(f"config {args.config}: {key} must be one of {list(action.choices)}")
            opts[key] = value
    for key, value in vars(args).items():
        if value is not None:
            opts[key] = value
    return opts, dotted


def _require(opts, *keys):
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise UsageError(f"{opts['command']}: missing required option(s) {flags}")


def panel_from_config(dotted: dict, default_estimand: str) -> Optional[list]:
    """Build a method panel from ``method.<i>.<field>`` keys; None when there are none.

    Fields: ``name``, ``kind`` (kernel, nn_covariates, nn_pscore, ipw, dr),
    ``estimand``, ``ps`` (estimated or true), ``kernel``, ``bandwidth``,
    ``k``, ``ci`` (percentile or normal).
    """
    groups = {}
    for key, value in dotted.items():
        parts = key.split(".")
        if parts[0] != "method":
            continue
        if len(parts) != 3:
            raise UsageError(f"config key {key!r} must look like method.<index>.<field>")
        groups.setdefault(parts[1], {})[parts[2]] = value
    if not groups:
        return None
    allowed = {"name", "kind", "estimand", "ps", "kernel", "bandwidth", "k", "ci"}
    panel = []
    for idx in sorted(groups, key=lambda s: (len(s), s)):
        g = groups[idx]
        bad = set(g) - allowed
        if bad:
            raise UsageError(f"method.{idx}: unknown field(s) {sorted(bad)}")
        if "kind" not in g:
            raise UsageError(f"method.{idx}: 'kind' is required")
        try:
            kernel = None
            if g["kind"].lower() == "kernel":
                if "bandwidth" not in g:
                    raise UsageError(f"method.{idx}: kernel methods need 'bandwidth'")
                kernel = KernelSpec(KernelFamily.parse(g.get("kernel", "gaussian")), float(g["bandwidth"]))
            panel.append(MethodSpec(
                g.get("name", f"method{idx}"), g["kind"], g.get("estimand", default_estimand),
                g.get("ps", "estimated"), kernel, int(g["k"]) if "k" in g else None,
                g.get("ci", "percentile"),
            ))
        except ValueError as exc:
            raise UsageError(f"method.{idx}: {exc}") from None
    return panel


# -- subcommands ---------------------------------------------------------------------

def cmd_simulate(opts, dotted):
    _require(opts, "scenario", "n", "seed")
    n = opts["n"]
    h = opts.get("bandwidth") or default_bandwidth(n)
    panel = panel_from_config(dotted, opts["estimand"]) or default_panel(opts["estimand"], h, opts["kernel"])
    cfg = ExperimentConfig(ScenarioSpec(opts["scenario"], n), panel, opts["reps"], opts["boot"],
                           opts["seed"], opts["level"])
    t0 = time.perf_counter()
    report = run(cfg, opts["threads"])
    log.info("simulate %s N=%d R=%d B=%d: %.1fs", opts["scenario"], n, opts["reps"], opts["boot"],
             time.perf_counter() - t0)
    return report_table(report)


def cmd_sweep(opts, dotted):
    _require(opts, "scenario", "seed")
    t0 = time.perf_counter()
    cells = sweep(ScenarioSpec(opts["scenario"], max(20, min(opts["ns"]))), opts["ns"], opts["hs"],
                  opts["kernels"], opts["estimand"], opts["reps"], opts["seed"], opts["threads"])
    log.info("sweep %s: %d cells in %.1fs", opts["scenario"], len(cells), time.perf_counter() - t0)
    return Table(["N", "h", "kernel", "bias", "rmse"],
                 [[c.n, c.h, c.kernel, c.bias, c.rmse] for c in cells])


def _dataset_path(name):
    if name in dataio.BUNDLED:
        return dataio.bundled_path(name)
    p = Path(name)
    if not p.exists():
        # a bare bundled file name ("nsw_exp.csv") resolves to the packaged copy
        for key, fname in dataio.BUNDLED.items():
            if p.name == fname and len(p.parts) == 1:
                return dataio.bundled_path(key)
    return p


def cmd_analyze(opts, dotted):
    _require(opts, "data")
    schema = {k.split(".", 1)[1]: v for k, v in dotted.items() if k.startswith("schema.")}
    unknown = [k for k in dotted if not k.startswith("schema.")]
    if unknown:
        raise UsageError(f"analyze: unexpected config key(s) {unknown}")
    path = _dataset_path(opts["data"])
    data = dataio.load_nsw(path, schema or None)
    log.info("loaded %s: %d treated, %d controls", path, data.n_treated, data.n_control)
    for v in data.violations:
        log.warning("invariant violation: %s", v)
    if opts["balance"]:
        comparison = None
        if opts.get("comparison"):
            comparison = dataio.load_nsw(_dataset_path(opts["comparison"]), schema or None)
        rows = dataio.balance_table(data, comparison)
        return Table(["variable", "treated_mean", "treated_sd", "control_mean", "control_sd",
                      "comparison_mean", "comparison_sd", "p_control", "p_comparison"],
                     [[r.variable, r.treated_mean, r.treated_sd, r.control_mean, r.control_sd,
                       r.comparison_mean, r.comparison_sd, r.p_control, r.p_comparison] for r in rows])
    if opts["boot"] > 0:
        _require(opts, "seed")
    label = dataio.dataset_label(path) if opts["data"] not in dataio.BUNDLED else opts["data"]
    h = opts.get("bandwidth") or dataio.TABLED_BANDWIDTHS[label]
    design = data.sample.x
    if opts.get("ps_columns"):
        unknown = [c for c in opts["ps_columns"] if c not in dataio.COVARIATES]
        if unknown:
            raise UsageError(f"--ps-columns: unknown covariate(s) {unknown}; choose from {', '.join(dataio.COVARIATES)}")
        design = design[:, [dataio.COVARIATES.index(c) for c in opts["ps_columns"]]]
    if opts.get("beta_out"):
        fit = fit_logistic(add_intercept(design), data.sample.w)
        emit(Table([f"beta{i}" for i in range(fit.beta.size)], [list(fit.beta)]), "csv", opts["beta_out"])
    panel = dataio.nsw_panel(h, opts["kernel"], opts["k"])
    results = dataio.analyze_att(data.sample, panel, opts["boot"], opts.get("seed") or 0, opts["level"], design)
    rows = []
    for r in results:
        e = r.estimate
        lo, hi = e.ci if e.ci is not None else (None, None)
        rows.append([r.name, e.estimand.value, e.point, e.se, lo, hi])
    return Table(["method", "estimand", "point", "se", "ci_lo", "ci_hi"], rows)


def cmd_misspec(opts, dotted):
    _require(opts, "seed")
    forms = ("linear", "interactions") if opts["ps_form"] == "both" else (opts["ps_form"],)
    panel = matching_panel(opts["estimand"], opts["bandwidth"], opts["ks"])
    table = None
    for form in forms:
        cfg = ExperimentConfig(ScenarioSpec("misspec", opts["n"], params={"ps_form": form}),
                               panel, opts["reps"], 0, opts["seed"])
        t0 = time.perf_counter()
        t = report_table(run(cfg, opts["threads"]), {"ps_form": form})
        log.info("misspec %s N=%d R=%d: %.1fs", form, opts["n"], opts["reps"], time.perf_counter() - t0)
        table = t if table is None else Table(table.header, table.rows + t.rows)
    return table


def cmd_overlap(opts, dotted):
    _require(opts, "seed")
    scales = (1.0, 0.2) if opts["scale"] == "both" else (float(opts["scale"]),)
    params = {}
    if opts.get("coefficients"):
        params["coefficients"] = load_overlap_coefficients(opts["coefficients"])
    if opts.get("source"):
        params["source"] = read_source_table(opts["source"])
    panel = matching_panel("ATT", opts["bandwidth"], opts["ks"])
    table = None
    for scale in scales:
        cfg = ExperimentConfig(ScenarioSpec("overlap", opts["n"], params=dict(params, scale=scale)),
                               panel, opts["reps"], 0, opts["seed"])
        t0 = time.perf_counter()
        t = report_table(run(cfg, opts["threads"]), {"scale": scale})
        log.info("overlap scale=%g N=%d R=%d: %.1fs", scale, opts["n"], opts["reps"], time.perf_counter() - t0)
        table = t if table is None else Table(table.header, table.rows + t.rows)
    return table


def cmd_kernel_check(opts, dotted):
    names = ["gaussian", "epanechnikov"] if opts["kernel"] == "all" else [opts["kernel"]]
    rows = []
    for name in names:
        try:
            fam = KernelFamily.parse(name)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        rep = verify_moments(KernelSpec(fam, 1.0))
        rows.append([fam.value, rep.m0, rep.m2, rep.k2, rep.m3abs])
    return Table(["kernel", "m0", "m2", "k2", "m3abs"], rows)


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "misspec": cmd_misspec,
    "overlap": cmd_overlap,
    "kernel-check": cmd_kernel_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        sys.stderr.write("kernmatch: error: a subcommand is required\n")
        return 1
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="kernmatch: %(message)s", stream=sys.stderr)
    try:
        opts, dotted = resolve(parser, args)
        opts["command"] = args.command
        if args.command in STOCHASTIC and opts.get("seed") is None:
            raise UsageError(f"{args.command}: --seed is required (set it on the command line or in the config)")
        table = COMMANDS[args.command](opts, dotted)
        emit(table, opts["format"], opts.get("out"))
    except UsageError as exc:
        sys.stderr.write(f"kernmatch: error: {exc}\n")
        return 1
    except (EstimationError, DataFormatError, OSError, ValueError, ArithmeticError) as exc:
        sys.stderr.write(f"kernmatch: {type(exc).__name__}: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
