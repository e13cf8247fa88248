"""Print how many lag coefficients survive along a Lasso penalty path on one synthetic case."""
import argparse

import numpy as np

from cyclecast import linear_models as lm
from cyclecast.datagen import case_preset, generate
from cyclecast.features import make_windows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--case", type=int, default=3, choices=[1, 2, 3])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lags", type=int, default=3)
    ap.add_argument("--points", type=int, default=12)
    args = ap.parse_args()

    w = make_windows(generate(case_preset(args.case, seed=args.seed)), args.lags, 1)
    X = w.inputs[:, np.ptp(w.inputs, axis=0) > 0]
    for ch, name in enumerate(("cycle", "period")):
        y = w.targets[:, ch]
        if np.ptp(y) == 0:
            print(f"{name}: constant target, every penalty gives the mean model")
            continue
        top = lm.lasso_lambda_max(X, y)
        print(f"{name}: critical lambda {top:.4f}")
        for lam in top * np.geomspace(1, 1e-3, args.points):
            fit = lm.fit_lasso(X, y, lm.LassoConfig(lam=lam))
            print(f"  lambda={lam:9.5f} nonzero={np.count_nonzero(fit.coefficients):2d} "
                  f"intercept={fit.intercept[0]:.3f}")


if __name__ == "__main__":
    main()
