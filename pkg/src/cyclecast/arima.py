"""ARIMA(p, d, q) by Hannan-Rissanen regression.

On the d-times differenced series ``w`` the model is

    w_t = c + sum_i phi_i w_{t-i} + sum_j theta_j e_{t-j} + e_t

Estimation: a long AR fitted by least squares supplies proxy innovations, ``w``
is regressed on its own lags and the lagged proxies, and one refinement pass
recomputes the innovations with the fitted recursion and regresses again.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InsufficientHistoryError, ShapeError

LONG_AR_MAX = 10


@dataclass(frozen=True)
class ArimaConfig:
    p: int = 1
    d: int = 1
    q: int = 1

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ConfigError("ARIMA orders must be non-negative")

    @property
    def is_mean_model(self) -> bool:
        return self.p == 0 and self.q == 0


@dataclass(frozen=True)
class ArimaFit:
    c: float
    phi: np.ndarray
    theta: np.ndarray
    sigma2: float
    residuals: np.ndarray
    initial_values: np.ndarray
    differenced: np.ndarray = field(repr=False)
    stationary: bool = True
    fallback: bool = False

    @property
    def order(self) -> ArimaConfig:
        return ArimaConfig(len(self.phi), len(self.initial_values), len(self.theta))

    def to_text(self) -> str:
        def join(v):
            return ",".join(repr(float(x)) for x in v)

        o = self.order
        lines = [
            f"p={o.p}",
            f"d={o.d}",
            f"q={o.q}",
            f"c={float(self.c)!r}",
            f"phi={join(self.phi)}",
            f"theta={join(self.theta)}",
            f"sigma2={float(self.sigma2)!r}",
            f"initial_values={join(self.initial_values)}",
            f"differenced={join(self.differenced)}",
            f"stationary={str(self.stationary).lower()}",
            f"fallback={str(self.fallback).lower()}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ArimaFit":
        from .datagen import parse_key_values

        kv = parse_key_values(text)

        def vec(key):
            raw = kv.get(key, "")
            return np.array([float(x) for x in raw.split(",") if x], dtype=float)

        w = vec("differenced")
        phi, theta, c = vec("phi"), vec("theta"), float(kv["c"])
        return cls(
            c=c,
            phi=phi,
            theta=theta,
            sigma2=float(kv["sigma2"]),
            residuals=innovations(w, c, phi, theta),
            initial_values=vec("initial_values"),
            differenced=w,
            stationary=kv.get("stationary", "true") == "true",
            fallback=kv.get("fallback", "false") == "true",
        )

    def __post_init__(self):
        warmup = max(len(self.phi), len(self.theta))
        if len(self.residuals) != max(0, len(self.differenced) - warmup):
            raise ShapeError("residual count must equal differenced length minus the warm-up")


def difference(series, d: int):
    """Apply the first-difference operator ``d`` times.

    Returns the differenced vector and the leading value consumed at each
    order, which is exactly what :func:`inverse_difference` needs.
    """
    x = np.asarray(series, dtype=float)
    if d < 0:
        raise ValueError("d must be non-negative")
    if x.shape[0] <= d:
        raise InsufficientHistoryError(f"need more than {d} values to difference {d} times", required=d + 1)
    initial = []
    for _ in range(d):
        initial.append(x[0])
        x = np.diff(x)
    return x, np.array(initial, dtype=float)


def inverse_difference(differenced, initial_values, d: int) -> np.ndarray:
    x = np.asarray(differenced, dtype=float)
    initial = np.asarray(initial_values, dtype=float)
    if initial.shape[0] != d:
        raise ShapeError(f"expected {d} initial values, got {initial.shape[0]}")
    for k in reversed(range(d)):
        x = np.concatenate([[initial[k]], initial[k] + np.cumsum(x)])
    return x


def _lagged(v, lags, start, stop):
    """Rows t in [start, stop) with columns v[t-1], ..., v[t-lags]."""
    return np.column_stack([v[start - i:stop - i] for i in range(1, lags + 1)]) if lags else np.empty((stop - start, 0))


def _regress(A, y):
    """Least squares returning None when the design is rank deficient."""
    if A.shape[0] < A.shape[1]:
        return None
    sol, _, rank, sv = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1] or sv[-1] <= 1e-10 * sv[0]:
        return None
    return sol


def innovations(w, c, phi, theta) -> np.ndarray:
    """Run the ARMA recursion over ``w`` with pre-sample innovations set to zero.

    Returns innovations for t >= max(p, q).
    """
    w = np.asarray(w, dtype=float)
    p, q = len(phi), len(theta)
    start = max(p, q)
    e = np.zeros(len(w))
    for t in range(start, len(w)):
        pred = c
        for i in range(p):
            pred += phi[i] * w[t - 1 - i]
        for j in range(q):
            pred += theta[j] * e[t - 1 - j]
        e[t] = w[t] - pred
    return e[start:]


def _mean_model(w, initial, p, q, fallback):
    c = float(np.mean(w))
    phi, theta = np.zeros(p), np.zeros(q)
    res = innovations(w, c, phi, theta)
    return ArimaFit(c, phi, theta, float(np.mean(res**2)) if res.size else 0.0, res, initial, w, True, fallback)


def ar_is_stationary(phi) -> bool:
    if len(phi) == 0:
        return True
    # roots of 1 - phi_1 z - ... - phi_p z^p
    coeffs = np.concatenate([-np.asarray(phi)[::-1], [1.0]])
    roots = np.roots(coeffs)
    return bool(np.all(np.abs(roots) > 1.0))


MA_ROOT_MARGIN = 1.01


def make_invertible(theta):
    """Reflect MA roots inside the unit circle and keep every root at modulus >= 1.01.

    Reflection preserves the autocovariance of the MA part; without it the
    innovation recursion grows geometrically. Returns ``(theta, adjusted)``.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        return theta, False
    # 1 + theta_1 z + ... + theta_q z^q, highest power first for np.roots
    roots = np.roots(np.concatenate([theta[::-1], [1.0]]))
    if np.all(np.abs(roots) >= MA_ROOT_MARGIN):
        return theta, False
    fixed = []
    for r in roots:
        if abs(r) < 1:
            r = 1 / np.conj(r)
        if abs(r) < MA_ROOT_MARGIN:
            r = r * (MA_ROOT_MARGIN / abs(r))
        fixed.append(r)
    monic = np.poly(fixed)
    poly = np.real(monic / monic[-1])[::-1]
    out = np.zeros_like(theta)
    out[:len(poly) - 1] = poly[1:]
    return out, True


def fit_arima(series, config: ArimaConfig = ArimaConfig()) -> ArimaFit:
    w, initial = difference(series, config.d)
    p, q = config.p, config.q
    n = len(w)
    if config.is_mean_model:
        if n < 1:
            raise InsufficientHistoryError("no values left after differencing", required=config.d + 1)
        return _mean_model(w, initial, 0, 0, False)
    if n < p + q + 2:
        raise InsufficientHistoryError(
            f"ARIMA({p},{config.d},{q}) needs at least {p + q + 2} differenced values, got {n}",
            required=p + q + 2 + config.d,
        )
    if np.ptp(w) == 0:
        return _mean_model(w, initial, p, q, True)

    if q == 0:
        start = p
        A = np.column_stack([np.ones(n - start), _lagged(w, p, start, n)])
        sol = _regress(A, w[start:])
        if sol is None:
            return _mean_model(w, initial, p, q, True)
        c, phi, theta = sol[0], sol[1:], np.zeros(0)
    else:
        m = max(min(LONG_AR_MAX, n // 4), p, q, 1)
        A = np.column_stack([np.ones(n - m), _lagged(w, m, m, n)])
        long_ar = _regress(A, w[m:])
        if long_ar is None:
            return _mean_model(w, initial, p, q, True)
        proxy = np.zeros(n)
        proxy[m:] = w[m:] - A @ long_ar

        start = m + q
        if n - start < 1 + p + q:
            return _mean_model(w, initial, p, q, True)
        A = np.column_stack([np.ones(n - start), _lagged(w, p, start, n), _lagged(proxy, q, start, n)])
        sol = _regress(A, w[start:])
        if sol is None:
            return _mean_model(w, initial, p, q, True)
        c, phi, theta = sol[0], sol[1:1 + p], sol[1 + p:]
        theta, _ = make_invertible(theta)

        # refinement: innovations from the fitted recursion replace the proxies
        start = max(p, q)
        e = np.zeros(n)
        e[start:] = innovations(w, c, phi, theta)
        A = np.column_stack([np.ones(n - start), _lagged(w, p, start, n), _lagged(e, q, start, n)])
        refined = _regress(A, w[start:])
        if refined is not None and np.all(np.isfinite(refined)):
            r_theta, _ = make_invertible(refined[1 + p:])
            r_phi = refined[1:1 + p]
            # near an MA unit root the refit can trade a spurious intercept for
            # integrated innovations; keep it only when the innovations shrink
            before = np.mean(innovations(w, c, phi, theta) ** 2)
            after = np.mean(innovations(w, refined[0], r_phi, r_theta) ** 2)
            if after <= before:
                c, phi, theta = refined[0], r_phi, r_theta

    res = innovations(w, c, phi, theta)
    return ArimaFit(
        c=float(c),
        phi=np.asarray(phi, dtype=float),
        theta=np.asarray(theta, dtype=float),
        sigma2=float(np.mean(res**2)),
        residuals=res,
        initial_values=initial,
        differenced=w,
        stationary=ar_is_stationary(phi),
    )


def forecast_differenced(w, residuals, c, phi, theta, h: int) -> np.ndarray:
    """Iterate the recursion ``h`` steps past the end of ``w`` with future shocks at zero."""
    p, q = len(phi), len(theta)
    hist = list(np.asarray(w, dtype=float))
    # innovations aligned with hist; warm-up entries are zero
    shocks = [0.0] * (len(hist) - len(residuals)) + list(residuals)
    out = []
    for _ in range(h):
        pred = c
        for i in range(p):
            pred += phi[i] * hist[-1 - i]
        for j in range(q):
            pred += theta[j] * shocks[-1 - j]
        hist.append(pred)
        shocks.append(0.0)
        out.append(pred)
    return np.array(out)


def forecast_arima(fit: ArimaFit, config: ArimaConfig | None = None, h: int = 1) -> np.ndarray:
    """Forecast ``h`` values on the original scale."""
    if h < 1:
        raise ValueError("horizon must be at least 1")
    if config is not None and config != fit.order:
        raise ConfigError(f"fit has order {fit.order}, forecast asked for {config}")
    d = len(fit.initial_values)
    future = forecast_differenced(fit.differenced, fit.residuals, fit.c, fit.phi, fit.theta, h)
    if d == 0:
        return future
    full = inverse_difference(np.concatenate([fit.differenced, future]), fit.initial_values, d)
    return full[-h:]


def refilter(fit: ArimaFit, series) -> ArimaFit:
    """Same parameters, innovations recomputed over a new (usually extended) series."""
    w, initial = difference(series, len(fit.initial_values))
    res = innovations(w, fit.c, fit.phi, fit.theta)
    return ArimaFit(fit.c, fit.phi, fit.theta, fit.sigma2, res, initial, w, fit.stationary, fit.fallback)
