"""Uniform fit / one-step-predict wrappers around every model family.

A forecaster is fitted on an ``(n, 2)`` history of (cycle, period) rows and
then maps any history to the next row. Multi-step forecasts are produced by
the evaluation harness, which decides whether predicted or observed rows are
appended between steps.
"""
from __future__ import annotations

import numpy as np

from . import arima as _arima
from . import linear_models as lm
from .errors import ConfigError, InsufficientHistoryError
from .features import DEFAULT_LAGS, apply_scaler, channel_scaler, invert_scaler, make_windows
from .lstm import Architecture, TrainConfig, init_network, predict, train

MODEL_NAMES = ("ols", "huber", "lasso", "omp", "arima", "lstm")


class Forecaster:
    tag = "base"

    def fit(self, history) -> "Forecaster":
        raise NotImplementedError

    def predict_next(self, history) -> np.ndarray:
        raise NotImplementedError

    def hyperparameters(self) -> dict:
        return {}

    def to_text(self) -> str:
        raise NotImplementedError


def _lag_row(history, L):
    history = np.asarray(history, dtype=float)
    if history.shape[0] < L:
        raise InsufficientHistoryError(f"need {L} rows of history, got {history.shape[0]}", required=L)
    return history[-L:].ravel()


_KIND_ALIASES = {"ols": "OLS", "huber": "Huber", "lasso": "Lasso", "omp": "OMP"}


class LinearForecaster(Forecaster):
    """OLS / Huber / Lasso / OMP on lag windows.

    OLS and Huber refuse rank-deficient designs, and lag windows often contain
    them (a constant period channel duplicates the intercept). Those two fit on
    the largest order-preserving independent column subset instead and report
    zero weight for the dropped lags.
    """

    def __init__(self, kind: str = "ols", L: int = DEFAULT_LAGS, config=None):
        self.kind = lm.ModelTag(_KIND_ALIASES.get(kind, kind))
        self.tag = self.kind.value
        self.L = L
        if config is None:
            config = {
                lm.ModelTag.HUBER: lm.HuberConfig(),
                lm.ModelTag.LASSO: lm.LassoConfig(),
                lm.ModelTag.OMP: lm.OmpConfig(),
            }.get(self.kind)
        self.config = config
        self.fit_: lm.LinearFit | None = None

    def fit(self, history):
        w = make_windows(history, self.L, 1)
        X, Y = w.inputs, w.targets
        if self.kind in (lm.ModelTag.OLS, lm.ModelTag.HUBER):
            keep = lm.independent_columns(X)
            if self.kind == lm.ModelTag.OLS:
                sub = lm.fit_ols(X[:, keep], Y)
            else:
                sub = lm.fit_huber(X[:, keep], Y, self.config)
            coef = np.zeros((Y.shape[1], X.shape[1]))
            coef[:, keep] = sub.coefficients
            self.fit_ = lm.LinearFit(coef, sub.intercept, self.kind, None, sub.converged, sub.iterations)
        elif self.kind == lm.ModelTag.LASSO:
            self.fit_ = lm.fit_lasso(X, Y, self.config)
        else:
            k = min(self.config.max_predictors, X.shape[1])
            self.fit_ = lm.fit_omp(X, Y, lm.OmpConfig(k, self.config.residual_tol))
        return self

    def predict_next(self, history):
        return lm.predict_linear(self.fit_, _lag_row(history, self.L))

    def hyperparameters(self):
        params = {"L": self.L}
        if isinstance(self.config, lm.HuberConfig):
            params.update(delta=self.config.delta, max_iter=self.config.max_iter, tol=self.config.tol)
        elif isinstance(self.config, lm.LassoConfig):
            params.update(lam=self.config.lam, max_iter=self.config.max_iter, tol=self.config.tol)
        elif isinstance(self.config, lm.OmpConfig):
            params.update(k=self.config.max_predictors, residual_tol=self.config.residual_tol)
        return params

    def to_text(self):
        return f"L={self.L}\n" + self.fit_.to_text()


class ArimaForecaster(Forecaster):
    """Independent ARIMA fits for the cycle and period channels."""

    tag = "ARIMA"

    def __init__(self, config: _arima.ArimaConfig = _arima.ArimaConfig()):
        self.config = config
        self.fits_: list[_arima.ArimaFit] | None = None

    def fit(self, history):
        history = np.asarray(history, dtype=float)
        self.fits_ = [_arima.fit_arima(history[:, ch], self.config) for ch in range(history.shape[1])]
        return self

    def predict_next(self, history):
        history = np.asarray(history, dtype=float)
        out = []
        for ch, fit in enumerate(self.fits_):
            current = _arima.refilter(fit, history[:, ch])
            out.append(_arima.forecast_arima(current, self.config, 1)[0])
        return np.array(out)

    def hyperparameters(self):
        return {"p": self.config.p, "d": self.config.d, "q": self.config.q}

    def to_text(self):
        parts = []
        for ch, fit in enumerate(self.fits_):
            parts.extend(f"channel{ch}.{line}" for line in fit.to_text().splitlines())
        return "\n".join(parts) + "\n"


class LstmForecaster(Forecaster):
    """LSTM on min-max scaled lag sequences; both channels come out of one head."""

    tag = "LSTM"

    def __init__(self, architecture=Architecture.CASE1, epochs: int = 100, learning_rate: float = 1e-3,
                 seed: int = 0, L: int = DEFAULT_LAGS):
        self.train_config = TrainConfig(epochs, learning_rate, seed, architecture)
        self.L = L
        self.network_ = None
        self.scaler_ = None
        self.losses_: list[float] = []

    def fit(self, history):
        w = make_windows(history, self.L, 1)
        self.scaler_ = channel_scaler(w)
        X = apply_scaler(self.scaler_, w.sequences())
        Y = apply_scaler(self.scaler_, w.targets)
        net = init_network(self.train_config.architecture, self.train_config.seed)
        result = train(net, X, Y, self.train_config)
        self.network_ = result.network
        self.losses_ = result.losses
        return self

    def predict_next(self, history):
        seq = _lag_row(history, self.L).reshape(self.L, 2)
        scaled = predict(self.network_, apply_scaler(self.scaler_, seq))
        return invert_scaler(self.scaler_, scaled)[0]

    def hyperparameters(self):
        c = self.train_config
        return {"architecture": c.architecture.value, "epochs": c.epochs, "learning_rate": c.learning_rate,
                "seed": c.seed, "L": self.L}

    def to_text(self):
        lines = [
            f"L={self.L}",
            "scaler.min=" + ",".join(repr(float(v)) for v in self.scaler_.min),
            "scaler.max=" + ",".join(repr(float(v)) for v in self.scaler_.max),
        ]
        return "\n".join(lines) + "\n" + self.network_.to_text()


def build_forecaster(name: str, *, L: int = DEFAULT_LAGS, delta=None, lam=None, k=None,
                     order=None, architecture=None, epochs=None, learning_rate=None, seed: int = 0) -> Forecaster:
    """Construct a forecaster by short name with optional hyperparameter overrides."""
    name = name.lower()
    if name == "ols":
        return LinearForecaster("ols", L)
    if name == "huber":
        return LinearForecaster("huber", L, lm.HuberConfig(delta=1.35 if delta is None else delta))
    if name == "lasso":
        return LinearForecaster("lasso", L, lm.LassoConfig(lam=1.0 if lam is None else lam))
    if name == "omp":
        return LinearForecaster("omp", L, lm.OmpConfig(max_predictors=1 if k is None else k))
    if name == "arima":
        return ArimaForecaster(_arima.ArimaConfig(*(order or (1, 1, 1))))
    if name == "lstm":
        return LstmForecaster(
            architecture or Architecture.CASE1,
            100 if epochs is None else epochs,
            1e-3 if learning_rate is None else learning_rate,
            seed,
            L,
        )
    raise ConfigError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
