"""Lag embedding and min-max scaling.

A window ending at time ``t`` holds the last ``L`` (cycle, period) pairs
flattened row-major, i.e. ``(x1(t-L+1), x2(t-L+1), ..., x1(t), x2(t))``, and
targets the next ``P`` pairs in the same layout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import CycleSeries
from .errors import EmptyInputError, InsufficientHistoryError, ShapeError

DEFAULT_LAGS = 3
DEFAULT_HORIZON = 1
HOLDOUT = 14


@dataclass(frozen=True)
class SupervisedWindows:
    inputs: np.ndarray
    targets: np.ndarray
    L: int
    P: int

    def __len__(self):
        return self.inputs.shape[0]

    def sequences(self) -> np.ndarray:
        """Inputs reshaped to (n_windows, L, 2) for sequence models."""
        return self.inputs.reshape(len(self), self.L, 2)


def _as_array(series) -> np.ndarray:
    if isinstance(series, CycleSeries):
        return series.to_array()
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeError(f"expected an (n, 2) array of (cycle, period) rows, got shape {arr.shape}")
    return arr


def make_windows(series, L: int = DEFAULT_LAGS, P: int = DEFAULT_HORIZON) -> SupervisedWindows:
    if L < 1 or P < 1:
        raise ValueError("L and P must be positive")
    arr = _as_array(series)
    n = arr.shape[0]
    if n < L + P:
        raise InsufficientHistoryError(
            f"series has {n} cycles; windows with L={L}, P={P} need at least {L + P}",
            required=L + P,
        )
    rows = n - L - P + 1
    inputs = np.stack([arr[i:i + L].ravel() for i in range(rows)])
    targets = np.stack([arr[i + L:i + L + P].ravel() for i in range(rows)])
    return SupervisedWindows(inputs, targets, L, P)


@dataclass(frozen=True)
class ScalerParams:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        if np.any(self.max < self.min):
            raise ValueError("scaler max must be >= min in every column")


def fit_scaler(windows) -> ScalerParams:
    """Column-wise min/max over the window inputs (or over a bare matrix)."""
    matrix = windows.inputs if isinstance(windows, SupervisedWindows) else np.asarray(windows, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise EmptyInputError("scaler needs at least one row")
    return ScalerParams(matrix.min(axis=0), matrix.max(axis=0))


def channel_scaler(windows: SupervisedWindows) -> ScalerParams:
    """One (min, max) pair per channel, pooled over every lag position."""
    return fit_scaler(windows.inputs.reshape(-1, 2))


def _check_columns(params: ScalerParams, matrix: np.ndarray):
    if matrix.shape[-1] != params.min.shape[0]:
        raise ShapeError(
            f"matrix has {matrix.shape[-1]} columns, scaler was fitted on {params.min.shape[0]}"
        )


def apply_scaler(params: ScalerParams, matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    _check_columns(params, matrix)
    span = params.max - params.min
    flat = span == 0
    scaled = (matrix - params.min) / np.where(flat, 1.0, span)
    return np.where(flat, 0.5, scaled)


def invert_scaler(params: ScalerParams, matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    _check_columns(params, matrix)
    span = params.max - params.min
    return np.where(span == 0, params.min, matrix * span + params.min)


def train_test_split(series, holdout: int = HOLDOUT):
    """Split raw rows so the last ``holdout`` cycles are held out."""
    arr = _as_array(series)
    if holdout < 1 or holdout >= arr.shape[0]:
        raise InsufficientHistoryError(
            f"cannot hold out {holdout} of {arr.shape[0]} cycles", required=holdout + 1
        )
    return arr[:-holdout], arr[-holdout:]
