"""Synthetic cycle/period series.

Each record draws a cycle length and a period length as ``mean + std * z`` with
``z`` standard normal, rounds to whole days and redraws until the value lands
inside the configured bounds (a discretised truncated normal). Draws come from
numpy's PCG64 bit generator seeded with ``config.seed``; variates use numpy's
``Generator.standard_normal`` (ziggurat), so a seed pins the stream exactly.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, DistributionInfeasibleError, EmptyInputError

MAX_DRAWS_PER_RECORD = 10_000
CSV_HEADER = ("index", "cycle_length", "period_length", "period_start_day")


class Anchor(str, Enum):
    CYCLE_START = "CycleStart"
    CYCLE_END = "CycleEnd"
    MID_CYCLE = "MidCycle"


class CaseId(str, Enum):
    CASE1 = "Case1"
    CASE2 = "Case2"
    CASE3 = "Case3"

    @classmethod
    def parse(cls, value) -> "CaseId":
        if isinstance(value, CaseId):
            return value
        text = str(value).strip()
        if text in {"1", "2", "3"}:
            text = "Case" + text
        try:
            return cls(text)
        except ValueError:
            raise ConfigError(f"unknown case id {value!r}; expected 1, 2 or 3") from None


@dataclass(frozen=True)
class GeneratorConfig:
    cycle_mean: float
    cycle_std: float
    period_mean: float
    period_std: float
    cycle_bounds: tuple[int, int]
    period_bounds: tuple[int, int]
    anchor: Anchor = Anchor.CYCLE_START
    n_cycles: int = 120
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cycle_bounds", tuple(int(v) for v in self.cycle_bounds))
        object.__setattr__(self, "period_bounds", tuple(int(v) for v in self.period_bounds))
        object.__setattr__(self, "anchor", Anchor(self.anchor))
        clo, chi = self.cycle_bounds
        plo, phi = self.period_bounds
        if self.cycle_std < 0 or self.period_std < 0:
            raise ConfigError("standard deviations must be non-negative")
        if clo > chi or plo > phi:
            raise ConfigError("bounds must be ordered (lo <= hi)")
        if plo < 1:
            raise ConfigError("period lengths must be at least one day")
        if phi >= clo:
            raise ConfigError("period_bounds.hi must be below cycle_bounds.lo")
        if clo < 21 or chi > 60:
            raise ConfigError("cycle_bounds must lie inside [21, 60]")
        if not isinstance(self.n_cycles, (int, np.integer)) or self.n_cycles < 1:
            raise ConfigError(f"n_cycles must be a positive integer, got {self.n_cycles!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "GeneratorConfig":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return GeneratorConfig(**values)

    def to_text(self) -> str:
        """Flat ``key=value`` lines, one per field, in declaration order."""
        lines = [
            f"cycle_mean={self.cycle_mean!r}",
            f"cycle_std={self.cycle_std!r}",
            f"period_mean={self.period_mean!r}",
            f"period_std={self.period_std!r}",
            f"cycle_bounds={self.cycle_bounds[0]},{self.cycle_bounds[1]}",
            f"period_bounds={self.period_bounds[0]},{self.period_bounds[1]}",
            f"anchor={self.anchor.value}",
            f"n_cycles={self.n_cycles}",
            f"seed={self.seed}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GeneratorConfig":
        kv = parse_key_values(text)
        try:
            return cls(
                cycle_mean=float(kv["cycle_mean"]),
                cycle_std=float(kv["cycle_std"]),
                period_mean=float(kv["period_mean"]),
                period_std=float(kv["period_std"]),
                cycle_bounds=tuple(int(v) for v in kv["cycle_bounds"].split(",")),
                period_bounds=tuple(int(v) for v in kv["period_bounds"].split(",")),
                anchor=Anchor(kv["anchor"]),
                n_cycles=int(kv["n_cycles"]),
                seed=int(kv["seed"]),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed generator config: {exc}") from None


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


@dataclass(frozen=True)
class CycleRecord:
    cycle_length: int
    period_length: int
    period_start_day: int

    def __post_init__(self):
        if not 1 <= self.period_length < self.cycle_length:
            raise ConfigError(
                f"period_length {self.period_length} must satisfy 1 <= period < cycle ({self.cycle_length})"
            )
        last_start = self.cycle_length - self.period_length + 1
        if not 1 <= self.period_start_day <= last_start:
            raise ConfigError(
                f"period_start_day {self.period_start_day} outside [1, {last_start}]"
            )


@dataclass(frozen=True)
class CycleSeries:
    records: tuple[CycleRecord, ...]
    provenance: GeneratorConfig | str = "external"

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise EmptyInputError("a cycle series needs at least one record")

    def __len__(self):
        return len(self.records)

    def to_array(self) -> np.ndarray:
        """(n, 2) float array of (cycle_length, period_length)."""
        return np.array([(r.cycle_length, r.period_length) for r in self.records], dtype=float)

    @property
    def cycle_lengths(self) -> np.ndarray:
        return np.array([r.cycle_length for r in self.records])

    @property
    def period_lengths(self) -> np.ndarray:
        return np.array([r.period_length for r in self.records])

    @classmethod
    def from_lengths(cls, cycles: Sequence[int], periods: Sequence[int], provenance="external"):
        """Build a series from bare lengths with every period starting on day 1."""
        if len(cycles) != len(periods):
            raise ConfigError("cycle and period sequences differ in length")
        records = [CycleRecord(int(c), int(p), 1) for c, p in zip(cycles, periods)]
        return cls(tuple(records), provenance)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i, r in enumerate(self.records):
            writer.writerow((i, r.cycle_length, r.period_length, r.period_start_day))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, provenance: GeneratorConfig | str = "external") -> "CycleSeries":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(h.strip() for h in rows[0]) != CSV_HEADER:
            raise ConfigError(f"row 1: expected header {','.join(CSV_HEADER)}")
        records = []
        for rowno, row in enumerate(rows[1:], 2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ConfigError(f"row {rowno}: expected {len(CSV_HEADER)} columns, got {len(row)}")
            values = []
            for col, cell in zip(CSV_HEADER, row):
                try:
                    values.append(int(cell))
                except ValueError:
                    raise ConfigError(f"row {rowno}, column {col}: not an integer: {cell!r}") from None
            try:
                records.append(CycleRecord(values[1], values[2], values[3]))
            except ConfigError as exc:
                raise ConfigError(f"row {rowno}: {exc}") from None
        if not records:
            raise EmptyInputError("series CSV has no data rows")
        return cls(tuple(records), provenance)


_PRESET_BOUNDS = {
    CaseId.CASE1: ((28, 30), (5, 5), Anchor.CYCLE_START),
    CaseId.CASE2: ((28, 35), (5, 6), Anchor.CYCLE_END),
    CaseId.CASE3: ((28, 49), (4, 8), Anchor.MID_CYCLE),
}


def case_preset(case_id, n_cycles: int = 120, seed: int = 0) -> GeneratorConfig:
    """Generator settings for one of the three regularity regimes.

    Means sit at the interval midpoints and standard deviations are a sixth of
    the interval width, so roughly 99.7% of the untruncated mass is in bounds.
    """
    cycle_bounds, period_bounds, anchor = _PRESET_BOUNDS[CaseId.parse(case_id)]
    return GeneratorConfig(
        cycle_mean=(cycle_bounds[0] + cycle_bounds[1]) / 2,
        cycle_std=(cycle_bounds[1] - cycle_bounds[0]) / 6,
        period_mean=(period_bounds[0] + period_bounds[1]) / 2,
        period_std=(period_bounds[1] - period_bounds[0]) / 6,
        cycle_bounds=cycle_bounds,
        period_bounds=period_bounds,
        anchor=anchor,
        n_cycles=n_cycles,
        seed=seed,
    )


def infer_case(config: GeneratorConfig) -> CaseId | None:
    """Case whose bounds and anchor match ``config``, if any."""
    for case_id, (cb, pb, anchor) in _PRESET_BOUNDS.items():
        if config.cycle_bounds == cb and config.period_bounds == pb and config.anchor == anchor:
            return case_id
    return None


def _draw_bounded(rng: np.random.Generator, mean: float, std: float, bounds, what: str) -> int:
    lo, hi = bounds
    for _ in range(MAX_DRAWS_PER_RECORD):
        value = math.floor(mean + std * rng.standard_normal() + 0.5)
        if lo <= value <= hi:
            return value
    raise DistributionInfeasibleError(
        f"{what}: no draw from N({mean}, {std}^2) landed in [{lo}, {hi}] "
        f"after {MAX_DRAWS_PER_RECORD} attempts"
    )


def period_start(cycle_length: int, period_length: int, anchor: Anchor) -> int:
    last = cycle_length - period_length + 1
    if anchor == Anchor.CYCLE_START:
        return 1
    if anchor == Anchor.CYCLE_END:
        return last
    return min(max(cycle_length // 2 - period_length // 2, 1), last)


def generate(config: GeneratorConfig) -> CycleSeries:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    records = []
    for _ in range(config.n_cycles):
        cycle = _draw_bounded(rng, config.cycle_mean, config.cycle_std, config.cycle_bounds, "cycle_length")
        period = _draw_bounded(rng, config.period_mean, config.period_std, config.period_bounds, "period_length")
        records.append(CycleRecord(cycle, period, period_start(cycle, period, config.anchor)))
    return CycleSeries(tuple(records), config)


@dataclass(frozen=True)
class ChannelSummary:
    mean: float
    std: float
    min: float
    q1: float
    median: float
    q3: float
    max: float

    def five_numbers(self) -> tuple[float, float, float, float, float]:
        return (self.min, self.q1, self.median, self.q3, self.max)


@dataclass(frozen=True)
class SeriesSummary:
    n: int
    cycle: ChannelSummary
    period: ChannelSummary = field(repr=True)


def _channel_summary(values: np.ndarray) -> ChannelSummary:
    q1, med, q3 = np.percentile(values, [25, 50, 75], method="midpoint")
    return ChannelSummary(
        mean=float(np.mean(values)),
        std=float(np.std(values)),
        min=float(np.min(values)),
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        max=float(np.max(values)),
    )


def summarize(series: CycleSeries) -> SeriesSummary:
    """Mean, population std, extremes and midpoint-interpolated quartiles per channel."""
    if series is None or len(series) == 0:
        raise EmptyInputError("cannot summarize an empty series")
    arr = series.to_array()
    return SeriesSummary(len(series), _channel_summary(arr[:, 0]), _channel_summary(arr[:, 1]))
