"""Compare BPTT gradients with central finite differences for both LSTM architectures."""
import argparse
import time

import numpy as np

from cyclecast import lstm


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--samples", type=int, default=50, help="parameters probed per check")
    ap.add_argument("--lags", type=int, default=3)
    args = ap.parse_args()

    for arch in lstm.Architecture:
        for seed in args.seeds:
            net = lstm.init_network(arch, seed)
            rng = np.random.default_rng(seed)
            start = time.perf_counter()
            rel, absolute = lstm.gradient_check(net, rng.uniform(size=(args.lags, 2)), rng.uniform(size=2),
                                                n_samples=args.samples, seed=seed)
            print(f"{arch.value:12s} seed={seed} params={net.flat.size:6d} "
                  f"max_rel={rel:.2e} max_abs={absolute:.2e} ({time.perf_counter() - start:.2f}s)")


if __name__ == "__main__":
    main()
