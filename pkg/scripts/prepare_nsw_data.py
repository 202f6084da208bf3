"""Write the NSW experimental and comparison samples as plain CSV.

Source: the Dehejia-Wahba extracts distributed with the R package DAAG
(``nsw74demo``, ``cps3`` and ``psid1``), read through the ``rdatasets``
Python package. The output files are what ``kernmatch.dataio.load_nsw``
consumes:

- ``nsw_exp.csv``: 185 treated, 260 experimental controls
- ``nsw_cps3.csv``: the same 185 treated, 429 CPS-3 controls
- ``nsw_psid1_black.csv``: the 156 Black treated units, 624 Black PSID-1
  controls (the pool behind the overlap simulation design)

    pip install rdatasets
    python scripts/prepare_nsw_data.py src/kernmatch/data/
"""

import sys
from pathlib import Path

import pandas as pd
import rdatasets

RENAME = {"trt": "treat", "hisp": "hispanic", "marr": "married", "nodeg": "nodegr"}
ORDER = ["treat", "age", "educ", "black", "hispanic", "married", "nodegr",
         "re74", "re75", "u74", "u75", "re78"]


def _tidy(df):
    df = df.drop(columns="rownames").rename(columns=RENAME)
    df["u74"] = (df["re74"] == 0).astype(int)
    df["u75"] = (df["re75"] == 0).astype(int)
    return df[ORDER]


def main(outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    exp = _tidy(rdatasets.data("DAAG", "nsw74demo"))
    # treated first, then controls, matching the original file order
    exp = pd.concat([exp[exp.treat == 1], exp[exp.treat == 0]], ignore_index=True)
    cps = _tidy(rdatasets.data("DAAG", "cps3"))
    cps3 = pd.concat([exp[exp.treat == 1], cps], ignore_index=True)
    psid = _tidy(rdatasets.data("DAAG", "psid1"))
    treated = exp[exp.treat == 1]
    psid_black = pd.concat([treated[treated.black == 1], psid[psid.black == 1]], ignore_index=True)
    exp.to_csv(outdir / "nsw_exp.csv", index=False, float_format="%.2f")
    cps3.to_csv(outdir / "nsw_cps3.csv", index=False, float_format="%.2f")
    psid_black.to_csv(outdir / "nsw_psid1_black.csv", index=False, float_format="%.2f")
    for name, df in (("nsw_exp", exp), ("nsw_cps3", cps3), ("nsw_psid1_black", psid_black)):
        print(f"{name}.csv: {int(df.treat.sum())} treated, {int((1 - df.treat).sum())} controls")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/kernmatch/data")
