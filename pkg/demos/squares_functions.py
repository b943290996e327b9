"""Sample functions at fixed noise on the three-squares data.

Inside the squares all activations cover the data; outside they extrapolate
differently. Prints coverage per square and the spread of the curves at the
edges of an extended x-range.

    python demos/squares_functions.py
"""

import argparse

import numpy as np

from discouq import experiments as E


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--count", type=int, default=10)
    args = ap.parse_args()

    x = np.linspace(-3.0, 3.0, 601)
    for act in ("relu", "selu", "tanh", "gcu"):
        p = E.preset("squares", mlp_activation=act)
        params, _, _ = E.train_preset(p, args.seed)
        x, curves = E.squares_functions(params, args.count, x, args.seed)
        cov = E.function_coverage(curves, x)
        edge = curves[:, [0, -1]]
        print(f"{act:5s} coverage {np.round(cov, 2).tolist()}  "
              f"spread at x=-3: {np.ptp(edge[:, 0]):.2f}  at x=3: {np.ptp(edge[:, 1]):.2f}")


if __name__ == "__main__":
    main()
