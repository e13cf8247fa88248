"""Forecast metrics and the hold-out evaluation harness."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .datagen import CycleSeries
from .errors import CycleCastError, EmptyInputError, InsufficientHistoryError, ShapeError
from .features import HOLDOUT

CHANNEL_NAMES = ("cycle", "period")
TABLE_HEADER = ("model", "channel", "mae", "mse", "rmse", "horizon", "protocol")


class Protocol(str, Enum):
    RECURSIVE = "RecursiveMultiStep"
    ROLLING = "RollingOneStep"


class Channels(str, Enum):
    CYCLE = "CycleOnly"
    PERIOD = "PeriodOnly"
    BOTH = "Both"

    @property
    def indices(self) -> tuple[int, ...]:
        return {Channels.CYCLE: (0,), Channels.PERIOD: (1,), Channels.BOTH: (0, 1)}[self]


@dataclass(frozen=True)
class MetricReport:
    mae: float
    mse: float
    rmse: float
    horizon: int
    model_tag: str = ""

    def __post_init__(self):
        if self.mae < 0 or self.mse < 0:
            raise ValueError("metrics must be non-negative")
        if abs(self.rmse - math.sqrt(self.mse)) > 1e-9:
            raise ValueError("rmse must equal sqrt(mse)")


@dataclass(frozen=True)
class EvalConfig:
    horizon: int = HOLDOUT
    protocol: Protocol = Protocol.RECURSIVE
    channels: Channels = Channels.BOTH
    round_predictions: bool = False

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        object.__setattr__(self, "channels", Channels(self.channels))
        if self.horizon < 1:
            raise ValueError("horizon must be positive")


def compute_metrics(actual, predicted, model_tag: str = "") -> MetricReport:
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if a.size == 0 or p.size == 0:
        raise EmptyInputError("metrics need at least one value")
    if a.shape != p.shape:
        raise ShapeError(f"actual has {a.size} values, predicted has {p.size}")
    err = a - p
    mse = float(np.mean(err**2))
    return MetricReport(float(np.mean(np.abs(err))), mse, math.sqrt(mse), a.size, model_tag)


@dataclass
class HoldoutForecast:
    actual: np.ndarray  # (h, 2)
    predicted: np.ndarray  # (h, 2)
    train_length: int


def _as_rows(series) -> np.ndarray:
    return series.to_array() if isinstance(series, CycleSeries) else np.asarray(series, dtype=float)


def forecast_holdout(model, series, config: EvalConfig = EvalConfig()) -> HoldoutForecast:
    """Fit on all but the last ``horizon`` rows and forecast them.

    Recursive mode feeds each prediction back as the newest lag; rolling mode
    appends the observed row instead, without refitting. The model never sees a
    held-out row in recursive mode.
    """
    rows = _as_rows(series)
    h = config.horizon
    if rows.shape[0] <= h:
        raise InsufficientHistoryError(
            f"series has {rows.shape[0]} cycles; a horizon of {h} leaves nothing to train on",
            required=h + 1,
        )
    train, held_out = rows[:-h], rows[-h:]
    model.fit(train.copy())
    history = train.copy()
    preds = []
    for step in range(h):
        nxt = np.asarray(model.predict_next(history.copy()), dtype=float).reshape(2)
        preds.append(nxt)
        newest = nxt if config.protocol == Protocol.RECURSIVE else held_out[step]
        history = np.vstack([history, newest])
    predicted = np.array(preds)
    if config.round_predictions:
        predicted = np.floor(predicted + 0.5)
    return HoldoutForecast(held_out, predicted, train.shape[0])


def rolling_eval(model, series, config: EvalConfig = EvalConfig()) -> dict[str, MetricReport]:
    """Per-channel metrics of the hold-out forecast, keyed by channel name."""
    fc = forecast_holdout(model, series, config)
    tag = getattr(model, "tag", type(model).__name__)
    return {
        CHANNEL_NAMES[ch]: compute_metrics(fc.actual[:, ch], fc.predicted[:, ch], tag)
        for ch in config.channels.indices
    }


@dataclass
class TableRow:
    model_tag: str
    channel: str
    report: MetricReport | None
    horizon: int
    protocol: Protocol
    error: str | None = None
    forecast: HoldoutForecast | None = field(default=None, repr=False)

    @property
    def failed(self) -> bool:
        return self.report is None


def _sort_key(row: TableRow):
    failed = row.failed
    return (
        CHANNEL_NAMES.index(row.channel),
        failed,
        0.0 if failed else row.report.mae,
        0.0 if failed else row.report.rmse,
        row.model_tag,
    )


FIT_ERRORS = (CycleCastError, np.linalg.LinAlgError, FloatingPointError, ValueError)


def compare_models(series, models, config: EvalConfig = EvalConfig()) -> list[TableRow]:
    """Evaluate each model and return rows sorted by channel, then MAE, RMSE and tag.

    A model that raises while fitting or forecasting yields one annotated row per
    channel, placed after the successful rows of that channel.
    """
    if not models:
        raise EmptyInputError("compare_models needs at least one model")
    rows = []
    for model in models:
        tag = getattr(model, "tag", type(model).__name__)
        try:
            fc = forecast_holdout(model, series, config)
        except FIT_ERRORS as exc:
            for ch in config.channels.indices:
                rows.append(TableRow(tag, CHANNEL_NAMES[ch], None, config.horizon, config.protocol,
                                     f"{type(exc).__name__}: {exc}"))
            continue
        for ch in config.channels.indices:
            report = compute_metrics(fc.actual[:, ch], fc.predicted[:, ch], tag)
            rows.append(TableRow(tag, CHANNEL_NAMES[ch], report, config.horizon, config.protocol, None, fc))
    return sorted(rows, key=_sort_key)


def _fmt(x: float) -> str:
    return repr(float(x))


def table_to_csv(rows: list[TableRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    for r in rows:
        if r.failed:
            metrics = ("nan", "nan", "nan")
        else:
            metrics = (_fmt(r.report.mae), _fmt(r.report.mse), _fmt(r.report.rmse))
        writer.writerow((r.model_tag, r.channel, *metrics, r.horizon, r.protocol.value))
    return buf.getvalue()


def table_from_csv(text: str) -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != TABLE_HEADER:
        raise ValueError(f"expected header {','.join(TABLE_HEADER)}")
    return [dict(zip(TABLE_HEADER, row)) for row in reader if row]


def table_to_text(rows: list[TableRow]) -> str:
    """Aligned plain-text table for terminals."""
    body = []
    for r in rows:
        if r.failed:
            body.append((r.model_tag, r.channel, "-", "-", "-", f"FAILED {r.error}"))
        else:
            rep = r.report
            body.append((r.model_tag, r.channel, f"{rep.mae:.4f}", f"{rep.mse:.4f}", f"{rep.rmse:.4f}", ""))
    head = ("Model", "Channel", "MAE", "MSE", "RMSE", "")
    widths = [max(len(x[i]) for x in [head, *body]) for i in range(5)]
    lines = []
    for cells in [head, *body]:
        left = [cells[0].ljust(widths[0]), cells[1].ljust(widths[1])]
        right = [cells[i].rjust(widths[i]) for i in range(2, 5)]
        lines.append("  ".join(left + right + ([cells[5]] if cells[5] else [])).rstrip())
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"
