"""OLS, Huber (IRLS), Lasso (coordinate descent) and OMP regressors.

Every fitter takes an ``(n, p)`` input matrix and an ``(n, m)`` target matrix
and fits each target column independently, with an intercept.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, ShapeError, SingularDesignError

RANK_RTOL = 1e-10


class ModelTag(str, Enum):
    OLS = "OLS"
    HUBER = "Huber"
    LASSO = "Lasso"
    OMP = "OMP"


@dataclass(frozen=True)
class LinearFit:
    coefficients: np.ndarray  # (channels, features)
    intercept: np.ndarray  # (channels,)
    model_tag: ModelTag
    selected_support: tuple[tuple[int, ...], ...] | None = None
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        coef = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "intercept", np.atleast_1d(np.asarray(self.intercept, dtype=float)))
        object.__setattr__(self, "model_tag", ModelTag(self.model_tag))
        if self.intercept.shape[0] != coef.shape[0]:
            raise ShapeError("one intercept per channel required")

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[1]

    def to_text(self) -> str:
        lines = [f"model_tag={self.model_tag.value}", f"channels={self.coefficients.shape[0]}"]
        for ch, (coef, b) in enumerate(zip(self.coefficients, self.intercept)):
            lines.append(f"coefficients.{ch}=" + ",".join(repr(float(v)) for v in coef))
            lines.append(f"intercept.{ch}={float(b)!r}")
            if self.selected_support is not None:
                lines.append(f"support.{ch}=" + ",".join(str(j) for j in self.selected_support[ch]))
        lines.append(f"converged={str(self.converged).lower()}")
        lines.append(f"iterations={self.iterations}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LinearFit":
        from .datagen import parse_key_values

        kv = parse_key_values(text)
        channels = int(kv["channels"])
        coef = [[float(v) for v in kv[f"coefficients.{c}"].split(",")] for c in range(channels)]
        intercept = [float(kv[f"intercept.{c}"]) for c in range(channels)]
        support = None
        if "support.0" in kv:
            support = tuple(
                tuple(int(v) for v in kv[f"support.{c}"].split(",") if v) for c in range(channels)
            )
        return cls(
            np.array(coef),
            np.array(intercept),
            ModelTag(kv["model_tag"]),
            support,
            kv.get("converged", "true") == "true",
            int(kv.get("iterations", 0)),
        )


@dataclass(frozen=True)
class HuberConfig:
    delta: float = 1.35
    max_iter: int = 100
    tol: float = 1e-8

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError("Huber delta must be positive")
        if self.max_iter < 1 or not self.tol > 0:
            raise ConfigError("max_iter and tol must be positive")


@dataclass(frozen=True)
class LassoConfig:
    lam: float = 1.0
    max_iter: int = 100_000
    tol: float = 1e-10

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigError("Lasso lambda must be non-negative")
        if self.max_iter < 1 or not self.tol > 0:
            raise ConfigError("max_iter and tol must be positive")


@dataclass(frozen=True)
class OmpConfig:
    max_predictors: int = 1
    residual_tol: float = 0.0

    def __post_init__(self):
        if self.max_predictors < 1:
            raise ConfigError("OMP needs max_predictors >= 1")
        if self.residual_tol < 0:
            raise ConfigError("residual_tol must be non-negative")


def _prepare(inputs, targets):
    X = np.asarray(inputs, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeError(f"inputs {X.shape} and targets {Y.shape} do not align")
    return X, Y


def _with_intercept(X):
    return np.column_stack([np.ones(X.shape[0]), X])


def _check_rank(A, rows_needed=True):
    n, k = A.shape
    if rows_needed and n < k:
        raise SingularDesignError(f"{n} rows cannot determine {k} parameters", column=k - 2)
    R = np.linalg.qr(A, mode="r")
    diag = np.abs(np.diag(R))
    scale = max(diag.max(), 1.0)
    bad = np.flatnonzero(diag <= RANK_RTOL * scale)
    if bad.size:
        col = int(bad[0]) - 1
        what = "the intercept" if col < 0 else f"input column {col}"
        raise SingularDesignError(f"design is rank deficient at {what}", column=col)


def _lstsq_qr(A, y, w=None):
    """Least squares via Householder QR; ``w`` are optional row weights."""
    if w is not None:
        s = np.sqrt(w)
        A = A * s[:, None]
        y = y * s
    Q, R = np.linalg.qr(A)
    return np.linalg.solve(R, Q.T @ y)


def independent_columns(inputs, tol: float = RANK_RTOL) -> list[int]:
    """Greedy, order-preserving subset of columns that keeps ``[1, X_S]`` full rank."""
    X = np.asarray(inputs, dtype=float)
    keep: list[int] = []
    basis = np.ones((X.shape[0], 1)) / np.sqrt(X.shape[0])
    for j in range(X.shape[1]):
        col = X[:, j]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        resid = col - basis @ (basis.T @ col)
        resid = resid - basis @ (basis.T @ resid)
        rn = np.linalg.norm(resid)
        if rn > tol * 1e2 * max(norm, 1.0):
            keep.append(j)
            basis = np.column_stack([basis, resid / rn])
    return keep


def fit_ols(inputs, targets) -> LinearFit:
    X, Y = _prepare(inputs, targets)
    A = _with_intercept(X)
    _check_rank(A)
    coefs, intercepts = [], []
    for y in Y.T:
        beta = _lstsq_qr(A, y)
        intercepts.append(beta[0])
        coefs.append(beta[1:])
    return LinearFit(np.array(coefs), np.array(intercepts), ModelTag.OLS)


def huber_loss(residuals, delta: float) -> np.ndarray:
    a = np.abs(np.asarray(residuals, dtype=float))
    return np.where(a <= delta, 0.5 * a**2, delta * (a - 0.5 * delta))


def huber_weights(residuals, delta: float) -> np.ndarray:
    a = np.abs(residuals)
    return np.where(a <= delta, 1.0, delta / np.maximum(a, delta))


def _huber_channel(A, y, config: HuberConfig, history=None):
    beta = _lstsq_qr(A, y)
    converged = False
    it = 0
    if history is not None:
        history.append(float(huber_loss(y - A @ beta, config.delta).sum()))
    for it in range(1, config.max_iter + 1):
        w = huber_weights(y - A @ beta, config.delta)
        new = _lstsq_qr(A, y, w)
        change = np.max(np.abs(new - beta))
        beta = new
        if history is not None:
            history.append(float(huber_loss(y - A @ beta, config.delta).sum()))
        if change < config.tol:
            converged = True
            break
    return beta, converged, it


def fit_huber(inputs, targets, config: HuberConfig = HuberConfig(), loss_history: list | None = None) -> LinearFit:
    """Huber regression by IRLS, started from the OLS solution.

    Rows with ``|r| <= delta`` get weight 1 and the rest ``delta / |r|``; this is
    the majorize-minimize step for the Huber objective, so the total loss never
    increases. ``loss_history``, if given, receives one list of losses per channel.
    """
    X, Y = _prepare(inputs, targets)
    A = _with_intercept(X)
    _check_rank(A)
    coefs, intercepts = [], []
    all_converged, max_it = True, 0
    for y in Y.T:
        hist = [] if loss_history is not None else None
        beta, ok, it = _huber_channel(A, y, config, hist)
        if loss_history is not None:
            loss_history.append(hist)
        all_converged &= ok
        max_it = max(max_it, it)
        intercepts.append(beta[0])
        coefs.append(beta[1:])
    return LinearFit(np.array(coefs), np.array(intercepts), ModelTag.HUBER, None, all_converged, max_it)


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _standardize(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    flat = std == 0
    Z = (X - mean) / np.where(flat, 1.0, std)
    Z[:, flat] = 0.0
    return Z, mean, std, flat


def lasso_lambda_max(inputs, target) -> float:
    """Smallest penalty at which every standardized coefficient is zero."""
    X, Y = _prepare(inputs, target)
    Z, *_ = _standardize(X)
    y = Y[:, 0]
    return float(np.max(np.abs(Z.T @ (y - y.mean()))) / X.shape[0])


def lasso_objective(Z, yc, coef, lam) -> float:
    r = yc - Z @ coef
    return float(r @ r / (2 * len(yc)) + lam * np.abs(coef).sum())


def _lasso_channel(Z, yc, config: LassoConfig, history=None):
    n, p = Z.shape
    # Standardized columns have unit mean square except constant ones, which stay zero.
    col_sq = (Z**2).sum(axis=0) / n
    coef = np.zeros(p)
    resid = yc.copy()
    converged = False
    sweep = 0
    if history is not None:
        history.append(lasso_objective(Z, yc, coef, config.lam))
    for sweep in range(1, config.max_iter + 1):
        max_change = 0.0
        for j in range(p):
            if col_sq[j] == 0:
                continue
            old = coef[j]
            rho = Z[:, j] @ resid / n + col_sq[j] * old
            new = soft_threshold(rho, config.lam) / col_sq[j]
            if new != old:
                resid -= Z[:, j] * (new - old)
                coef[j] = new
                max_change = max(max_change, abs(new - old))
        if history is not None:
            history.append(lasso_objective(Z, yc, coef, config.lam))
        if max_change < config.tol:
            converged = True
            break
    return coef, converged, sweep


def fit_lasso(inputs, targets, config: LassoConfig = LassoConfig(), objective_history: list | None = None) -> LinearFit:
    """Lasso by cyclic coordinate descent on standardized inputs.

    The penalty ``lam * sum|a_j|`` applies to coefficients of the standardized
    columns (zero mean, unit population variance); the squared loss carries the
    1/(2n) factor. Coefficients are mapped back to the raw scale and the
    intercept is left unpenalized.
    """
    X, Y = _prepare(inputs, targets)
    if X.shape[0] < 2:
        raise ShapeError("Lasso needs at least two rows")
    Z, mean, std, flat = _standardize(X)
    coefs, intercepts = [], []
    all_converged, max_sweeps = True, 0
    for y in Y.T:
        ybar = y.mean()
        hist = [] if objective_history is not None else None
        a, ok, sweeps = _lasso_channel(Z, y - ybar, config, hist)
        if objective_history is not None:
            objective_history.append(hist)
        raw = np.where(flat, 0.0, a / np.where(flat, 1.0, std))
        coefs.append(raw)
        intercepts.append(ybar - raw @ mean)
        all_converged &= ok
        max_sweeps = max(max_sweeps, sweeps)
    return LinearFit(np.array(coefs), np.array(intercepts), ModelTag.LASSO, None, all_converged, max_sweeps)


@dataclass
class OmpPath:
    support: list[int] = field(default_factory=list)
    residuals: list[np.ndarray] = field(default_factory=list)
    coefficients: np.ndarray | None = None


def omp(D, y, max_predictors: int, residual_tol: float = 0.0) -> OmpPath:
    """Greedy selection over the columns of ``D``.

    Each step picks the column with the largest ``|<d_j, r>|`` on unit-normalized
    columns (lowest index on ties), refits least squares on the selected set and
    replaces the residual with its projection onto the orthogonal complement.
    ``residuals[0]`` is ``y`` itself.
    """
    D = np.asarray(D, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = D.shape
    if max_predictors > p:
        raise ConfigError(f"max_predictors={max_predictors} exceeds {p} columns")
    norms = np.linalg.norm(D, axis=0)
    usable = norms > 0
    U = D / np.where(usable, norms, 1.0)
    path = OmpPath(residuals=[y.copy()])
    r = y.copy()
    sol = np.zeros(0)
    while len(path.support) < max_predictors and np.linalg.norm(r) > residual_tol:
        scores = np.abs(U.T @ r)
        scores[~usable] = -1.0
        scores[path.support] = -1.0
        j = int(np.argmax(scores))
        if scores[j] <= 0:
            break
        path.support.append(j)
        S = D[:, path.support]
        sol = _lstsq_qr(S, y)
        r = y - S @ sol
        path.residuals.append(r.copy())
    coef = np.zeros(p)
    coef[path.support] = sol if path.support else 0.0
    path.coefficients = coef
    return path


def fit_omp(inputs, targets, config: OmpConfig = OmpConfig()) -> LinearFit:
    """OMP per channel on centered data, followed by an intercept refit.

    Centering makes the intercept orthogonal to every candidate column, so the
    selection only competes among lags; the final coefficients are ordinary
    least squares on the selected support.
    """
    X, Y = _prepare(inputs, targets)
    if config.max_predictors > X.shape[1]:
        raise ConfigError(f"max_predictors={config.max_predictors} exceeds {X.shape[1]} columns")
    xm = X.mean(axis=0)
    Xc = X - xm
    coefs, intercepts, supports = [], [], []
    for y in Y.T:
        ym = y.mean()
        path = omp(Xc, y - ym, config.max_predictors, config.residual_tol)
        coefs.append(path.coefficients)
        intercepts.append(ym - path.coefficients @ xm)
        supports.append(tuple(path.support))
    return LinearFit(np.array(coefs), np.array(intercepts), ModelTag.OMP, tuple(supports))


def predict_linear(fit: LinearFit, input_row) -> np.ndarray:
    x = np.asarray(input_row, dtype=float)
    if x.shape[-1] != fit.n_features:
        raise ShapeError(f"row has {x.shape[-1]} entries, fit expects {fit.n_features}")
    return x @ fit.coefficients.T + fit.intercept
