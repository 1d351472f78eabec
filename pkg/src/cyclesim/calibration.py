"""Fit the sentiment-to-price map to a measured information series.

Pipeline: integrate sentiment under a daily ``h`` series, then regress the
target log price on ``s``, the running integral of ``s`` and time. The price
map ``p = c1 s + c2 * integral(s - s_star) dt + const`` is linear in
``(c1, c2, c2 * s_star, const)``, so one least-squares solve suffices.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

C2_FLOOR = 1e-8
MAX_GAP_BUSINESS_DAYS = 5


class CalibrationError(ValueError):
    """Design matrix is rank deficient; ``condition`` holds its condition number."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


def sentiment_from_h(h, beta1=1.1, beta2=1.0, tau_s=25.0, s0=0.0, substeps=8):
    """Sentiment on the daily grid of ``h``.

    ``h[k]`` is held over day ``k``; each day is covered by ``substeps`` RK4
    steps. Returns an array with ``s[0] = s0`` and ``s[k + 1]`` the value at
    the end of day ``k``; its length is ``len(h) + 1``.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or h.size == 0:
        raise ConfigError("h must be a non-empty 1-D series", key="h")
    if not np.all(np.isfinite(h)) or np.any(np.abs(h) > 1.0):
        raise ConfigError("h must be finite with |h| <= 1", key="h")
    if not -1.0 <= s0 <= 1.0:
        raise ConfigError("s0 must lie in [-1, 1]", key="s0")
    dt = 1.0 / substeps
    out = np.empty(h.size + 1)
    s = float(s0)
    out[0] = s

    def f(x, hk):
        return (-x + math.tanh(beta1 * x + beta2 * hk)) / tau_s

    for k, hk in enumerate(h):
        for _ in range(substeps):
            k1 = f(s, hk)
            k2 = f(s + 0.5 * dt * k1, hk)
            k3 = f(s + 0.5 * dt * k2, hk)
            k4 = f(s + dt * k3, hk)
            s += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        out[k + 1] = s
    return out


@dataclass(frozen=True)
class FitResult:
    c1: float
    c2: float
    s_star: float | None
    integration_constant: float
    correlation: float
    residual_norm: float
    condition_number: float
    n: int

    def as_dict(self) -> dict:
        return dict(vars(self))


def design_matrix(s, dt=1.0):
    """Columns ``[s, cumulative s dt (left Riemann), -t, 1]``."""
    s = np.asarray(s, dtype=np.float64)
    cum = np.concatenate(([0.0], np.cumsum(s[:-1]) * dt))
    t = np.arange(s.size) * dt
    return np.column_stack([s, cum, -t, np.ones_like(s)])


def price_model(s, c1, c2, s_star, const, dt=1.0):
    """Log price implied by a sentiment path and map coefficients."""
    X = design_matrix(s, dt)
    return X @ np.array([c1, c2, c2 * s_star, const])


def _correlation(a, b):
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    r = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
    return max(-1.0, min(1.0, r))


def fit_price_map(s, target, dt=1.0) -> FitResult:
    s = np.asarray(s, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if s.shape != target.shape or s.ndim != 1:
        raise ConfigError("sentiment and target must be aligned 1-D series")
    if s.size < 5:
        raise ConfigError("need at least 5 observations")
    X = design_matrix(s, dt)
    # column scaling keeps the condition number about the geometry, not units
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    sv = np.linalg.svd(Xs, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if not cond < 1e12:
        raise CalibrationError(f"design matrix is rank deficient (condition number "
                               f"{cond:.3g})", condition=cond)
    beta = np.linalg.lstsq(Xs, target, rcond=None)[0] / scale
    c1, c2, folded, const = map(float, beta)
    s_star = folded / c2 if abs(c2) > C2_FLOOR else None
    fitted = X @ beta
    return FitResult(c1=c1, c2=c2, s_star=s_star, integration_constant=const,
                     correlation=_correlation(fitted, target),
                     residual_norm=float(np.linalg.norm(target - fitted)),
                     condition_number=cond, n=int(s.size))


def fitted_prices(fit: FitResult, s, dt=1.0):
    X = design_matrix(s, dt)
    folded = 0.0 if fit.s_star is None else fit.c2 * fit.s_star
    return X @ np.array([fit.c1, fit.c2, folded, fit.integration_constant])


def replication_report(fit: FitResult, s, target, dt=1.0) -> dict:
    """Fit summary with residual diagnostics."""
    target = np.asarray(target, dtype=np.float64)
    model = fitted_prices(fit, s, dt)
    r = target - model
    rc = r - r.mean()
    denom = float(rc @ rc)
    acf1 = float(rc[:-1] @ rc[1:]) / denom if denom > 0 else 0.0
    return {
        "fit": fit.as_dict(),
        "correlation": _correlation(model, target),
        "residual_mean": float(r.mean()),
        "residual_std": float(r.std(ddof=1)) if r.size > 1 else 0.0,
        "residual_max_abs": float(np.abs(r).max()),
        "residual_acf_lag1": acf1,
        "n": int(target.size),
    }


def _parse_date(text, path, lineno):
    try:
        return np.datetime64(text.strip(), "D")
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: bad ISO date {text!r}", key="date") from exc


def read_dated_csv(path, column):
    """Read ``date,<column>``; dates must be ISO, increasing and without gaps
    longer than five business days."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["date", column]:
            raise ConfigError(f"{path}: expected header 'date,{column}', got {header!r}",
                              key=column)
        dates, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 2 fields", key=column)
            dates.append(_parse_date(row[0], path, lineno))
            try:
                values.append(float(row[1]))
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad number {row[1]!r}",
                                  key=column) from exc
    dates = np.array(dates, dtype="datetime64[D]")
    values = np.array(values, dtype=np.float64)
    if dates.size < 2:
        raise ConfigError(f"{path}: need at least two rows", key=column)
    if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
        raise ConfigError(f"{path}: dates must be strictly increasing", key="date")
    gaps = np.busday_count(dates[:-1], dates[1:])
    if np.any(gaps > MAX_GAP_BUSINESS_DAYS):
        k = int(np.argmax(gaps > MAX_GAP_BUSINESS_DAYS))
        raise ConfigError(f"{path}: gap of {int(gaps[k])} business days after "
                          f"{dates[k]}", key="date")
    return dates, values


def align(dates_a, a, dates_b, b):
    common, ia, ib = np.intersect1d(dates_a, dates_b, return_indices=True)
    if common.size < 5:
        raise ConfigError("series share fewer than 5 dates")
    return common, a[ia], b[ib]


def calibrate_files(h_path, price_path, beta1=1.1, beta2=1.0, tau_s=25.0, s0=0.0):
    """Read ``date,h`` and ``date,log_price``, fit, and return
    ``(dates, fit, s, p_model, p_target)`` on the common dates."""
    dh, h = read_dated_csv(h_path, "h")
    dp, lp = read_dated_csv(price_path, "log_price")
    dates, h, lp = align(dh, h, dp, lp)
    s = sentiment_from_h(h, beta1, beta2, tau_s, s0)[:-1]
    fit = fit_price_map(s, lp)
    return dates, fit, s, fitted_prices(fit, s), lp


def write_replication_csv(path, dates, p_model, p_target):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("date,p_model,p_target\n")
        for d, m, t in zip(dates, p_model, p_target):
            fh.write(f"{d},{float(m)!r},{float(t)!r}\n")


def write_fit_json(path, report):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


# empirical-scale coefficients used as the default synthetic truth
REFERENCE_TRUTH = {"c1": 0.337, "c2": 0.003, "s_star": 0.113, "const": 6.421}


def synthetic_h(n_days, seed, persistence_days=20.0, scale=0.3):
    """Bounded persistent information series: ``scale * tanh`` of an AR(1)."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    phi = math.exp(-1.0 / persistence_days)
    e = rng.standard_normal(n_days) * math.sqrt(1 - phi * phi)
    x = np.empty(n_days)
    x[0] = e[0] / math.sqrt(1 - phi * phi)
    for k in range(1, n_days):
        x[k] = phi * x[k - 1] + e[k]
    return scale * np.tanh(2.0 * x)


def synthetic_dataset(seed, n_days=2500, truth=None, sigma=0.01,
                      beta1=1.1, beta2=1.0, tau_s=25.0):
    """``(h, s, target)`` from known coefficients plus Gaussian observation
    noise of standard deviation ``sigma``."""
    truth = dict(REFERENCE_TRUTH if truth is None else truth)
    ss = np.random.SeedSequence(seed)
    h_seed, noise_seed = ss.spawn(2)
    h = synthetic_h(n_days, h_seed)
    s = sentiment_from_h(h, beta1, beta2, tau_s)[:-1]
    clean = price_model(s, truth["c1"], truth["c2"], truth["s_star"], truth["const"])
    rng = np.random.Generator(np.random.PCG64(noise_seed))
    return h, s, clean + sigma * rng.standard_normal(n_days)


def round_trip(seed, n_days=2500, truth=None, sigma=0.01, tol_c=0.05, tol_s_star=0.10):
    """Fit a synthetic dataset and check recovery. Returns ``(ok, fit, truth)``."""
    truth = dict(REFERENCE_TRUTH if truth is None else truth)
    _, s, target = synthetic_dataset(seed, n_days, truth, sigma)
    fit = fit_price_map(s, target)

    def rel(a, b):
        return abs(a - b) / abs(b)

    ok = (rel(fit.c1, truth["c1"]) <= tol_c and rel(fit.c2, truth["c2"]) <= tol_c
          and fit.s_star is not None and rel(fit.s_star, truth["s_star"]) <= tol_s_star)
    return ok, fit, truth
