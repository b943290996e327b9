"""Run the tabular pipeline on a CSV (default: the bundled stand-in table).

    python demos/tabular_benchmark.py
    python demos/tabular_benchmark.py --csv housing.csv --target MedHouseVal
"""

import argparse

from discouq import data as D
from discouq import experiments as E
from discouq.cli import STANDIN_TARGET, standin_csv_path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--csv", default=None)
    ap.add_argument("--target", default=STANDIN_TARGET)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = D.load_csv(args.csv or standin_csv_path(), args.target)
    res = E.benchmark(ds, seed=args.seed)
    print(f"{len(ds)} rows, {ds.feature_dim} features; train {res.n_train}, test {res.n_test}")
    for k, v in res.summary().items():
        print(f"{k:8s} {v:.4g}" if isinstance(v, float) else f"{k:8s} {v}")


if __name__ == "__main__":
    main()
