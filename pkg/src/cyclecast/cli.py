"""``cyclecast`` command line: gen, eval, report, plotdata.

Exit codes: 0 success, 1 validation or user error, 2 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import datagen
from .datagen import CaseId, CycleSeries, GeneratorConfig, case_preset, generate, infer_case, summarize
from .errors import CycleCastError
from .evaluation import (
    CHANNEL_NAMES,
    EvalConfig,
    Protocol,
    compare_models,
    table_from_csv,
    table_to_csv,
    table_to_text,
)
from .forecasters import MODEL_NAMES, LstmForecaster, build_forecaster
from .lstm import Architecture

SEED_ENV = "CYCLECAST_SEED"
DEFAULT_EPOCHS = {CaseId.CASE1: 100, CaseId.CASE2: 1600, CaseId.CASE3: 1600}
DEFAULT_ARCH = {CaseId.CASE1: Architecture.CASE1, CaseId.CASE2: Architecture.STACKED, CaseId.CASE3: Architecture.STACKED}
CASE_ORDER = {CaseId.CASE1: 0, CaseId.CASE2: 1, CaseId.CASE3: 2}


class UsageError(Exception):
    """Bad flags or inputs; maps to exit code 1."""


def write_atomic(path: Path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sidecar(path: Path, suffix: str) -> Path:
    """``m.csv`` -> ``m<suffix>`` (e.g. ``m.predictions.csv``)."""
    path = Path(path)
    return path.with_name(path.stem + suffix)


def config_path(series_path: Path) -> Path:
    return Path(str(series_path) + ".config")


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _read_input(path) -> str:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    return path.read_text()


def load_series(path) -> tuple[CycleSeries, GeneratorConfig | None]:
    text = _read_input(path)
    cfg_file = config_path(Path(path))
    gen_config = GeneratorConfig.from_text(cfg_file.read_text()) if cfg_file.is_file() else None
    return CycleSeries.from_csv(text, gen_config or "external"), gen_config


def _format_summary(summary) -> str:
    lines = []
    for name in CHANNEL_NAMES:
        s = getattr(summary, name)
        lines.append(f"{name:6s} mean={s.mean:.3f} std={s.std:.3f} min={s.min:g} max={s.max:g}")
    return "\n".join(lines)


# -- gen -------------------------------------------------------------------------

def run_gen(args) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be a positive integer, got {args.n}")
    seed = args.seed if args.seed is not None else default_seed()
    config = case_preset(args.case, n_cycles=args.n, seed=seed)
    series = generate(config)
    out = Path(args.out)
    write_atomic(out, series.to_csv())
    write_atomic(config_path(out), config.to_text())
    print(f"wrote {len(series)} cycles to {out}")
    print(_format_summary(summarize(series)))
    return 0


# -- eval ------------------------------------------------------------------------

def _parse_models(raw: str) -> list[str]:
    names = [m.strip().lower() for m in raw.split(",") if m.strip()]
    if not names:
        raise UsageError("--models is empty")
    unknown = [m for m in names if m not in MODEL_NAMES]
    if unknown:
        raise UsageError(f"unknown model(s) {', '.join(unknown)}; choose from {','.join(MODEL_NAMES)}")
    if len(set(names)) != len(names):
        raise UsageError("--models lists a model twice")
    return names


def _parse_order(raw: str | None):
    if raw is None:
        return None
    try:
        order = tuple(int(v) for v in raw.split(","))
    except ValueError:
        raise UsageError(f"--order expects p,d,q integers, got {raw!r}") from None
    if len(order) != 3 or min(order) < 0:
        raise UsageError(f"--order expects three non-negative integers, got {raw!r}")
    return order


def _parse_protocol(raw: str) -> Protocol:
    aliases = {"recursive": Protocol.RECURSIVE, "rolling": Protocol.ROLLING}
    if raw.lower() in aliases:
        return aliases[raw.lower()]
    try:
        return Protocol(raw)
    except ValueError:
        raise UsageError(f"unknown protocol {raw!r}") from None


def _validate_overrides(args):
    if args.L < 1:
        raise UsageError("--L must be positive")
    if args.P != 1:
        raise UsageError("--P must be 1; multi-step horizons are produced recursively")
    if args.horizon < 1:
        raise UsageError("--horizon must be positive")
    if args.delta is not None and not args.delta > 0:
        raise UsageError("--delta must be positive")
    if args.lam is not None and not args.lam >= 0:
        raise UsageError("--lambda must be non-negative")
    if args.k is not None and not 1 <= args.k <= 2 * args.L:
        raise UsageError(f"--k must lie in [1, {2 * args.L}]")
    if args.epochs is not None and args.epochs < 1:
        raise UsageError("--epochs must be positive")
    if args.learning_rate is not None and not 0 < args.learning_rate <= 1:
        raise UsageError("--learning-rate must lie in (0, 1]")


def _run_record(args, models, gen_config, case, protocol, seed) -> str:
    lines = [
        f"series={args.series}",
        f"case={case.value if case else 'unknown'}",
        f"horizon={args.horizon}",
        f"protocol={protocol.value}",
        f"L={args.L}",
        f"P={args.P}",
        f"round={str(args.round).lower()}",
        f"seed={seed}",
        "models=" + ",".join(m.tag for m in models),
    ]
    if gen_config is not None:
        lines += [f"generator.{line}" for line in gen_config.to_text().splitlines()]
    for m in models:
        for key, value in m.hyperparameters().items():
            lines.append(f"model.{m.tag}.{key}={value}")
    return "\n".join(lines) + "\n"


def _predictions_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("model", "step", "index", "actual_cycle", "predicted_cycle", "actual_period", "predicted_period"))
    seen = set()
    for row in sorted(rows, key=lambda r: r.model_tag):
        if row.failed or row.model_tag in seen:
            continue
        seen.add(row.model_tag)
        fc = row.forecast
        for step, (a, p) in enumerate(zip(fc.actual, fc.predicted)):
            writer.writerow((row.model_tag, step + 1, fc.train_length + step,
                             repr(float(a[0])), repr(float(p[0])), repr(float(a[1])), repr(float(p[1]))))
    return buf.getvalue()


def run_eval(args) -> int:
    _validate_overrides(args)
    names = _parse_models(args.models)
    protocol = _parse_protocol(args.protocol)
    order = _parse_order(args.order)
    series, gen_config = load_series(args.series)
    case = CaseId.parse(args.case) if args.case else (infer_case(gen_config) if gen_config else None)

    needed = args.horizon + args.L + 2
    if len(series) < needed:
        raise UsageError(
            f"insufficient history: {len(series)} cycles, horizon {args.horizon} with L={args.L} needs {needed}"
        )
    seed = args.seed if args.seed is not None else default_seed()
    arch = Architecture(args.arch) if args.arch else DEFAULT_ARCH.get(case, Architecture.CASE1)
    epochs = args.epochs if args.epochs is not None else DEFAULT_EPOCHS.get(case, 100)
    models = [
        build_forecaster(name, L=args.L, delta=args.delta, lam=args.lam, k=args.k, order=order,
                         architecture=arch, epochs=epochs, learning_rate=args.learning_rate, seed=seed)
        for name in names
    ]
    config = EvalConfig(horizon=args.horizon, protocol=protocol, round_predictions=args.round)
    rows = compare_models(series, models, config)

    out = Path(args.out)
    write_atomic(out, table_to_csv(rows))
    write_atomic(sidecar(out, ".predictions.csv"), _predictions_csv(rows))
    write_atomic(sidecar(out, ".run.txt"), _run_record(args, models, gen_config, case, protocol, seed))
    for m in models:
        if isinstance(m, LstmForecaster) and m.losses_:
            lines = ["epoch,loss"] + [f"{i},{loss!r}" for i, loss in enumerate(m.losses_, 1)]
            write_atomic(sidecar(out, ".lstm_loss.csv"), "\n".join(lines) + "\n")
    if args.save_fits:
        fit_dir = Path(args.save_fits)
        fit_dir.mkdir(parents=True, exist_ok=True)
        failed = {r.model_tag for r in rows if r.failed}
        for m in models:
            if m.tag not in failed:
                write_atomic(fit_dir / f"{m.tag.lower()}.fit.txt", m.to_text())
    print(table_to_text(rows), end="")
    return 0


# -- report ----------------------------------------------------------------------

def _read_run_record(metrics_path: Path) -> dict[str, str]:
    run_file = sidecar(metrics_path, ".run.txt")
    return datagen.parse_key_values(run_file.read_text()) if run_file.is_file() else {}


def run_report(args) -> int:
    if not args.inputs:
        raise UsageError("report needs at least one metrics CSV")
    sections = []
    for position, raw in enumerate(args.inputs):
        path = Path(raw)
        rows = table_from_csv(_read_input(path))
        record = _read_run_record(path)
        try:
            rank = CASE_ORDER[CaseId.parse(record.get("case", ""))]
        except CycleCastError:
            rank = len(CASE_ORDER)
        sections.append((rank, position, path, rows, record))
    sections.sort(key=lambda s: (s[0], s[1]))

    out = ["# cyclecast evaluation report", ""]
    for _, _, path, rows, record in sections:
        title = record.get("case", "unknown")
        out += [f"## {title if title != 'unknown' else 'Unlabelled series'} ({path.name})", ""]
        out += [
            f"- series: `{record.get('series', '?')}`",
            f"- horizon: {record.get('horizon', '?')}, protocol: {record.get('protocol', '?')}, "
            f"L={record.get('L', '?')}, rounding: {record.get('round', '?')}",
            "",
            "| model | channel | MAE | MSE | RMSE |",
            "|---|---|---:|---:|---:|",
        ]
        for r in rows:
            cells = [r["mae"], r["mse"], r["rmse"]]
            shown = ["failed" if c == "nan" else f"{float(c):.4f}" for c in cells]
            out.append(f"| {r['model']} | {r['channel']} | " + " | ".join(shown) + " |")
        gen = {k[len("generator."):]: v for k, v in record.items() if k.startswith("generator.")}
        if gen:
            out += ["", "Generator configuration:", "", "```"] + [f"{k}={v}" for k, v in gen.items()] + ["```"]
        hyper = [(k[len("model."):], v) for k, v in record.items() if k.startswith("model.")]
        if hyper:
            out += ["", "Model hyperparameters:", ""] + [f"- `{k}` = {v}" for k, v in hyper]
        out.append("")
    write_atomic(Path(args.out), "\n".join(out))
    print(f"wrote report with {len(sections)} section(s) to {args.out}")
    return 0


# -- plotdata --------------------------------------------------------------------

def histogram_csv(values) -> str:
    values = np.asarray(values, dtype=int)
    lines = ["bin_left,bin_right,count"]
    for k in range(int(values.min()), int(values.max()) + 1):
        lines.append(f"{k},{k + 1},{int(np.sum(values == k))}")
    return "\n".join(lines) + "\n"


def boxplot_csv(series: CycleSeries) -> str:
    summary = summarize(series)
    lines = ["channel,min,q1,median,q3,max"]
    for name in CHANNEL_NAMES:
        lines.append(name + "," + ",".join(f"{v:g}" for v in getattr(summary, name).five_numbers()))
    return "\n".join(lines) + "\n"


def run_plotdata(args) -> int:
    if not args.series and not args.eval:
        raise UsageError("plotdata needs --series and/or --eval")
    outdir = Path(args.outdir)
    payload = {}
    if args.series:
        series, _ = load_series(args.series)
        payload["hist_cycle.csv"] = histogram_csv(series.cycle_lengths)
        payload["hist_period.csv"] = histogram_csv(series.period_lengths)
        payload["boxplot.csv"] = boxplot_csv(series)
    if args.eval:
        metrics = Path(args.eval)
        _read_input(metrics)
        preds = sidecar(metrics, ".predictions.csv")
        payload["actual_vs_predicted.csv"] = _read_input(preds)
        loss = sidecar(metrics, ".lstm_loss.csv")
        if loss.is_file():
            payload["loss_curve.csv"] = loss.read_text()
    outdir.mkdir(parents=True, exist_ok=True)
    for name, text in payload.items():
        write_atomic(outdir / name, text)
    print(f"wrote {', '.join(sorted(payload))} to {outdir}")
    return 0


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyclecast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic cycle series CSV")
    g.add_argument("--case", required=True, choices=["1", "2", "3"])
    g.add_argument("--n", type=int, default=120, help="number of cycles")
    g.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV}, then 0")
    g.add_argument("--out", required=True)
    g.set_defaults(func=run_gen)

    e = sub.add_parser("eval", help="fit models and score the held-out cycles")
    e.add_argument("--series", required=True)
    e.add_argument("--models", default=",".join(MODEL_NAMES))
    e.add_argument("--horizon", type=int, default=14)
    e.add_argument("--protocol", default="recursive", help="recursive | rolling")
    e.add_argument("--case", choices=["1", "2", "3"], help="override the case read from the series config")
    e.add_argument("--L", type=int, default=3, help="lag window length")
    e.add_argument("--P", type=int, default=1, help="target window length (must be 1)")
    e.add_argument("--delta", type=float, help="Huber threshold")
    e.add_argument("--lambda", dest="lam", type=float, help="Lasso penalty")
    e.add_argument("--k", type=int, help="OMP predictor budget")
    e.add_argument("--order", help="ARIMA p,d,q")
    e.add_argument("--epochs", type=int)
    e.add_argument("--learning-rate", type=float)
    e.add_argument("--arch", choices=[a.value for a in Architecture])
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--round", action="store_true", help="round predictions to whole days before scoring")
    e.add_argument("--out", required=True, help="metrics CSV path")
    e.add_argument("--save-fits", help="directory for fitted model artifacts")
    e.set_defaults(func=run_eval)

    r = sub.add_parser("report", help="markdown report over eval outputs")
    r.add_argument("--inputs", nargs="*", default=[])
    r.add_argument("--out", required=True)
    r.set_defaults(func=run_report)

    p = sub.add_parser("plotdata", help="plot-ready CSVs for external tools")
    p.add_argument("--series")
    p.add_argument("--eval", help="metrics CSV written by eval")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=run_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (UsageError, CycleCastError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
