"""Train on the heteroscedastic unimodal data and print quantile bands.

    python demos/unimodal_quantiles.py --epochs 300
"""

import argparse

import numpy as np

from discouq import experiments as E
from discouq.data import UNIMODAL_NOISE, unimodal_mean
from discouq.inference import ensemble_stats, predict_ensemble


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    p = E.preset("unimodal", n_epoch=args.epochs)
    params, history, _ = E.train_preset(p, args.seed)
    print(f"final training loss {history.loss[-1]:.4f}")

    levels = (0.05, 0.5, 0.95)
    z = 1.6448536269514722
    print(" x      q05     q50     q95   | true q05  q50     q95")
    for x in np.linspace(-1, 1, 9):
        st = ensemble_stats(predict_ensemble(params, [x], 3000, args.seed), levels)
        q = st["quantiles"][:, 0]
        m = float(unimodal_mean(x))
        print(f"{x:5.2f}  {q[0]:6.3f}  {q[1]:6.3f}  {q[2]:6.3f}  | "
              f"{m - z * UNIMODAL_NOISE:6.3f}  {m:6.3f}  {m + z * UNIMODAL_NOISE:6.3f}")

    rep = E.evaluate_synthetic(params, "unimodal", p.evaluation, args.seed)
    print({k: round(v, 4) for k, v in rep.summary().items()})


if __name__ == "__main__":
    main()
