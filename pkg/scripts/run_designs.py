"""Misspecification and overlap designs: |bias| x 1000 and variance x N.

    python scripts/run_designs.py --seed 7 [--reps 1000] [--outdir results/designs]

Misspecification: N=500, h=0.04, k in {1, 4, 16, 64}, with the propensity
design either the four covariates or covariates plus pairwise products.
Overlap: N=400, h=0.05, k in {1, 4, 16}, selection scale 1 and 1/5.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from kernmatch.cli import Table, emit
from kernmatch.dgp import ScenarioSpec
from kernmatch.mcharness import ExperimentConfig, matching_panel, run


def summary(report):
    return {r.method: (abs(r.bias) * 1000, r.var_n) for r in report.rows}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--outdir", default="results/designs")
    args = ap.parse_args()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    cols = {}
    for form in ("linear", "interactions"):
        cfg = ExperimentConfig(ScenarioSpec("misspec", 500, params={"ps_form": form}),
                               matching_panel("ATT", 0.04, (1, 4, 16, 64)), args.reps, 0, args.seed)
        cols[form] = summary(run(cfg, args.threads))
    names = list(cols["linear"])
    t = Table(["method", "linear_bias_x1000", "interactions_bias_x1000", "linear_var_n", "interactions_var_n"],
              [[m, cols["linear"][m][0], cols["interactions"][m][0], cols["linear"][m][1],
                cols["interactions"][m][1]] for m in names])
    emit(t, "text")
    emit(t, "csv", outdir / "misspec.csv")

    cols = {}
    for scale in (1.0, 0.2):
        cfg = ExperimentConfig(ScenarioSpec("overlap", 400, params={"scale": scale}),
                               matching_panel("ATT", 0.05, (1, 4, 16)), args.reps, 0, args.seed)
        cols[scale] = summary(run(cfg, args.threads))
    names = list(cols[1.0])
    t = Table(["method", "bad_bias_x1000", "good_bias_x1000", "bad_var_n", "good_var_n"],
              [[m, cols[1.0][m][0], cols[0.2][m][0], cols[1.0][m][1], cols[0.2][m][1]] for m in names])
    print()
    emit(t, "text")
    emit(t, "csv", outdir / "overlap.csv")


if __name__ == "__main__":
    main()
