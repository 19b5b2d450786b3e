#!/usr/bin/env python3
# Copyright 2026 The idexpo Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Fetches the six tabular benchmark datasets from OpenML as toolkit CSVs.

The core library ingests local CSVs only (header row, numeric feature
columns, integer label in the last column). This script needs network access
and scikit-learn; run it once, then point the CLI at the written files.

Usage:
    python3 scripts/fetch_openml.py --out data            # all six
    python3 scripts/fetch_openml.py --out data wine-quality-red
"""

import argparse
import sys

# name -> (openml data_id, expected samples, features, classes)
DATASETS = {
    "collins": (478, 500, 23, 2),
    "mfeat-fourier": (14, 2000, 77, 10),
    "one-hundred-plants-shape": (1492, 1600, 65, 100),
    "qsar-biodeg": (1494, 1055, 42, 2),
    "steel-plates-fault": (40982, 1941, 28, 7),
    "wine-quality-red": (40691, 1599, 12, 6),
}


def fetch_one(name: str, out_dir: str) -> None:
    import pandas as pd
    from sklearn.datasets import fetch_openml

    data_id, exp_n, exp_q, exp_l = DATASETS[name]
    print(f"fetching {name} (openml id {data_id}) ...", flush=True)
    bundle = fetch_openml(data_id=data_id, as_frame=True, parser="auto")
    x = bundle.data
    y = bundle.target

    # All features must be numeric; categorical columns become integer codes.
    for col in x.columns:
        if not pd.api.types.is_numeric_dtype(x[col]):
            x[col] = x[col].astype("category").cat.codes
    if pd.api.types.is_numeric_dtype(y):
        labels = y.astype(float).round().astype(int)
    else:
        labels = y.astype("category").cat.codes

    frame = x.copy()
    frame.columns = [str(c).strip().replace(",", "_") for c in x.columns]
    frame["label"] = labels.values

    n, q = x.shape
    l = labels.nunique()
    if (n, q, l) != (exp_n, exp_q, exp_l):
        print(
            f"  warning: fetched shape {n}x{q} with {l} classes differs from the "
            f"reference specification {exp_n}x{exp_q} with {exp_l} classes; "
            "OpenML feature counts can differ by bookkeeping columns",
            file=sys.stderr,
        )

    path = f"{out_dir}/{name}.csv"
    frame.to_csv(path, index=False)
    print(f"  wrote {path} ({n} rows, {q} features, {l} classes)")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", default=[], help="dataset names (default: all six)")
    ap.add_argument("--out", default="data", help="output directory (must exist)")
    args = ap.parse_args()

    names = args.names or sorted(DATASETS)
    unknown = [n for n in names if n not in DATASETS]
    if unknown:
        ap.error(f"unknown dataset(s): {', '.join(unknown)}; known: {', '.join(sorted(DATASETS))}")

    failures = 0
    for name in names:
        try:
            fetch_one(name, args.out)
        except Exception as e:  # network or parsing trouble; report and move on
            failures += 1
            print(f"  failed to fetch {name}: {e}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
