"""Evaluate every model on the three synthetic cases and print per-case tables.

Example:
    python scripts/run_cases.py --seeds 0 1 2
    python scripts/run_cases.py --quick --out results/
"""
import argparse
import time
from pathlib import Path

import numpy as np

from cyclecast.datagen import case_preset, generate
from cyclecast.evaluation import EvalConfig, compare_models, table_to_csv, table_to_text
from cyclecast.forecasters import MODEL_NAMES, build_forecaster

CASE_SETTINGS = {1: ("Case1Arch", 100), 2: ("StackedArch", 1600), 3: ("StackedArch", 1600)}


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--cycles", type=int, default=120)
    ap.add_argument("--horizon", type=int, default=14)
    ap.add_argument("--cases", type=int, nargs="+", default=[1, 2, 3], choices=[1, 2, 3])
    ap.add_argument("--models", default=",".join(MODEL_NAMES))
    ap.add_argument("--quick", action="store_true", help="cap LSTM training at 100 epochs")
    ap.add_argument("--out", type=Path, help="directory for per-case, per-seed metric CSVs")
    return ap.parse_args()


def main():
    args = parse_args()
    names = args.models.split(",")
    cfg = EvalConfig(horizon=args.horizon)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    for case in args.cases:
        arch, epochs = CASE_SETTINGS[case]
        if args.quick:
            epochs = min(epochs, 100)
        pooled = {}
        for seed in args.seeds:
            start = time.perf_counter()
            series = generate(case_preset(case, n_cycles=args.cycles, seed=seed))
            models = [build_forecaster(n, architecture=arch, epochs=epochs, seed=seed) for n in names]
            rows = compare_models(series, models, cfg)
            print(f"\n== Case {case}, seed {seed} ({time.perf_counter() - start:.1f}s) ==")
            print(table_to_text(rows), end="")
            if args.out:
                (args.out / f"case{case}_seed{seed}.csv").write_text(table_to_csv(rows))
            for r in rows:
                if not r.failed:
                    pooled.setdefault((r.model_tag, r.channel), []).append(r.report.mae)
        if len(args.seeds) > 1:
            print(f"\n-- Case {case}: mean MAE over seeds {args.seeds} --")
            for (tag, channel), maes in sorted(pooled.items(), key=lambda kv: (kv[0][1], np.mean(kv[1]))):
                print(f"{tag:6s} {channel:6s} {np.mean(maes):.4f} (sd {np.std(maes):.4f})")


if __name__ == "__main__":
    main()
