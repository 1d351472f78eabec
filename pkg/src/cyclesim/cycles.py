"""Business-cycle statistics of simulated (or supplied) log output.

Cycles are measured trough to trough on the log-output residual left after
removing a long centred moving average. Growth rates are OLS slopes with
autocorrelation-robust (Newey-West) standard errors, since the residuals of a
cycling series are far from independent.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import ConfigError
from .model import DAYS_PER_YEAR, Params

BIN_WIDTH_YEARS = 2.0
DEFAULT_HAC_LAG_DAYS = 2500
MIN_ABS_PROMINENCE = 1e-6


def window_samples(window_years, samples_per_year=DAYS_PER_YEAR) -> int:
    """Odd number of samples spanning ``window_years``."""
    w = int(round(window_years * samples_per_year))
    if w < 1:
        raise ConfigError("window must cover at least one sample", key="window_years")
    return w if w % 2 else w + 1


def centered_average(x, w):
    """Two-sided moving average over ``w`` (odd) samples, valid part only.

    Output ``k`` is centred on input ``k + w // 2``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < w:
        raise ValueError(f"series of {x.size} samples shorter than window {w}")
    c = np.concatenate(([0.0], np.cumsum(x)))
    return (c[w:] - c[:-w]) / w


def detrend(series, window_years=12.0, samples_per_year=DAYS_PER_YEAR):
    """Residual of ``series`` about its centred moving average.

    Edges where the full window does not fit are dropped, so the result has
    ``len(series) - w + 1`` samples and element ``k`` lines up with
    ``series[k + w // 2]``.
    """
    x = np.asarray(series, dtype=np.float64)
    w = window_samples(window_years, samples_per_year)
    if x.size <= w:
        raise ValueError(f"series of {x.size} samples is not longer than the "
                         f"{window_years}-year window ({w} samples)")
    half = w // 2
    return x[half: x.size - half] - centered_average(x, w)


def ma_gain(period_samples, w):
    """Gain of a length-``w`` centred average on a sinusoid of given period."""
    a = math.pi / period_samples
    return math.sin(w * a) / (w * math.sin(a))


def _alternate(minima, maxima, values):
    """Keep minima separated by at least one maximum; of consecutive minima
    keep the deepest."""
    events = sorted([(int(i), 0) for i in minima] + [(int(i), 1) for i in maxima])
    kept = []
    last_kind = None
    for idx, kind in events:
        if kind == 0:
            if last_kind == 0:
                if values[idx] < values[kept[-1]]:
                    kept[-1] = idx
            else:
                kept.append(idx)
        last_kind = kind
    return np.asarray(kept, dtype=np.int64)


def find_troughs(residual, smooth_window_years=2.0, min_prominence=None,
                 samples_per_year=DAYS_PER_YEAR, min_separation_years=None):
    """Indices (into ``residual``) of cycle troughs.

    The residual is smoothed with a centred average of ``smooth_window_years``.
    Minima need prominence of at least ``min_prominence`` (default: a quarter
    of the smoothed series' standard deviation, never below
    ``MIN_ABS_PROMINENCE`` so rounding noise is not read as cycles), must be at least
    ``min_separation_years`` apart (default: twice the smoothing window, the
    resolution floor of the filter) and must alternate with maxima that
    qualify under the same rules.
    """
    r = np.asarray(residual, dtype=np.float64)
    w = window_samples(smooth_window_years, samples_per_year)
    if r.size < w + 2:
        return np.empty(0, dtype=np.int64)
    sm = centered_average(r, w)
    if min_prominence is None:
        min_prominence = max(0.25 * float(sm.std()), MIN_ABS_PROMINENCE)
    if min_separation_years is None:
        min_separation_years = 2.0 * smooth_window_years
    distance = max(1, int(round(min_separation_years * samples_per_year)))
    prom = min_prominence if min_prominence > 0 else None
    minima, _ = find_peaks(-sm, prominence=prom, distance=distance)
    maxima, _ = find_peaks(sm, prominence=prom, distance=distance)
    return _alternate(minima, maxima, sm) + w // 2


@dataclass
class CycleStats:
    trough_times: np.ndarray
    lengths: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def modal_bin(self):
        if self.counts.sum() == 0:
            return None
        k = int(np.argmax(self.counts))
        return float(self.bin_edges[k]), float(self.bin_edges[k + 1])

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_cycles": int(self.lengths.size),
            "modal_bin": self.modal_bin,
            "mean_length_years": float(self.lengths.mean()) if self.lengths.size else None,
            "trough_times_years": self.trough_times.tolist(),
            "bin_edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
            "meta": self.meta,
        }

    def to_csv(self, path):
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("bin_lo,bin_hi,count\n")
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                fh.write(f"{lo:g},{hi:g},{int(c)}\n")


def histogram(lengths, bin_width=BIN_WIDTH_YEARS, max_years=None):
    """Counts in bins ``[k w, (k+1) w)`` anchored at zero."""
    lengths = np.asarray(lengths, dtype=np.float64)
    top = max_years if max_years is not None else (lengths.max() if lengths.size else 0.0)
    n_bins = max(1, int(math.floor(top / bin_width)) + 1)
    edges = np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(lengths, bins=edges)
    return edges, counts


def cycle_stats(t_days, y, detrend_years=12.0, smooth_window_years=2.0,
                min_prominence=None, min_separation_years=None, seed=None) -> CycleStats:
    """Troughs, trough-to-trough lengths and their histogram for a daily series."""
    t_days = np.asarray(t_days, dtype=np.float64)
    r = detrend(y, detrend_years)
    offset = window_samples(detrend_years) // 2
    idx = find_troughs(r, smooth_window_years, min_prominence,
                       min_separation_years=min_separation_years)
    times = t_days[idx + offset] / DAYS_PER_YEAR
    lengths = np.diff(times)
    edges, counts = histogram(lengths)
    meta = {"detrend_years": detrend_years, "smooth_window_years": smooth_window_years,
            "min_prominence": min_prominence, "min_separation_years": min_separation_years}
    return CycleStats(times, lengths, edges, counts, seed, meta)


def simulate_output(params: Params, years, seed, noise_config=None, scheme="heun",
                    burn_in_days=5000):
    """Full-formulation daily trajectory of ``years`` post-burn-in years."""
    from .integrator import SimConfig, simulate_full
    from .noise import NoiseConfig, sample_path

    if years <= 0:
        raise ConfigError("years must be > 0", key="years")
    base = noise_config or NoiseConfig()
    ncfg = NoiseConfig(base.daily_std, base.substeps_per_day, base.intraday_ar_coeff,
                       int(seed))
    n_days = int(round(years * DAYS_PER_YEAR))
    sim = SimConfig(dt=ncfg.dt, n_days=n_days, scheme=scheme, burn_in_days=burn_in_days)
    noise = sample_path(ncfg, sim.burn_in_days + n_days)
    return simulate_full(params, sim, noise)


def _histogram_job(args):
    params, years, seed, noise_config, sim_kw, cycle_kw = args
    traj = simulate_output(params, years, seed, noise_config, **sim_kw)
    stats = cycle_stats(traj.times, traj.y, seed=seed, **cycle_kw)
    stats.meta["years"] = years
    return stats


def _pool_map(fn, jobs_args, jobs):
    if jobs <= 1 or len(jobs_args) <= 1:
        return [fn(a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, jobs_args))


def cycle_histogram(sim_years=2000, params: Params | None = None, seeds=(0,),
                    noise_config=None, jobs=1, sim_kw=None, cycle_kw=None):
    """One :class:`CycleStats` per seed, in seed order.

    ``sim_kw`` goes to :func:`simulate_output` (``scheme``, ``burn_in_days``),
    ``cycle_kw`` to :func:`cycle_stats`.
    """
    params = params or Params()
    args = [(params, sim_years, int(s), noise_config, dict(sim_kw or {}),
             dict(cycle_kw or {})) for s in seeds]
    return _pool_map(_histogram_job, args, jobs)


@dataclass(frozen=True)
class GrowthEstimate:
    lam: float
    window_years: float
    stderr: float
    stderr_ols: float
    intercept: float

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "window_years": self.window_years,
                "stderr": self.stderr, "stderr_ols": self.stderr_ols,
                "intercept": self.intercept}


def growth_rate(t_days, y, min_years=50.0, hac_lag_days=DEFAULT_HAC_LAG_DAYS):
    """Annualised OLS slope of ``y`` on time.

    ``stderr`` is the Newey-West (HAC) error with ``hac_lag_days`` lags;
    ``stderr_ols`` the textbook error assuming independent residuals.
    """
    import statsmodels.api as sm

    t = np.asarray(t_days, dtype=np.float64) / DAYS_PER_YEAR
    y = np.asarray(y, dtype=np.float64)
    span = float(t[-1] - t[0]) if t.size else 0.0
    if span < min_years:
        raise ValueError(f"fit window of {span:g} years is shorter than {min_years:g}")
    X = np.column_stack([np.ones_like(t), t - t[0]])
    model = sm.OLS(y, X)
    ols = model.fit()
    lags = min(int(hac_lag_days), y.size - 2)
    hac = model.fit(cov_type="HAC", cov_kwds={"maxlags": lags})
    return GrowthEstimate(lam=float(ols.params[1]), window_years=span,
                          stderr=float(hac.bse[1]), stderr_ols=float(ols.bse[1]),
                          intercept=float(ols.params[0]))


def trajectory_growth(traj, column="y", **kw) -> GrowthEstimate:
    return growth_rate(traj.times, getattr(traj, column), **kw)


@dataclass
class SweepPoint:
    epsilon: float
    estimate: GrowthEstimate | None
    error: str | None = None

    @property
    def lam(self):
        return float("nan") if self.estimate is None else self.estimate.lam

    @property
    def stderr(self):
        return float("nan") if self.estimate is None else self.estimate.stderr


def _sweep_job(args):
    params, eps, years, seed, noise_config, sim_kw = args
    try:
        traj = simulate_output(params.replace(epsilon=eps), years, seed, noise_config,
                               **sim_kw)
        return SweepPoint(eps, trajectory_growth(traj))
    except (ArithmeticError, ValueError) as exc:
        return SweepPoint(eps, None, f"{type(exc).__name__}: {exc}")


def epsilon_sweep(grid, years_per_point=1000, params: Params | None = None, seed=0,
                  noise_config=None, jobs=1, sim_kw=None):
    """Growth rate for each drift value in ``grid``.

    Every point reuses the same noise seed (common random numbers), so
    differences between points reflect the drift rather than the draw. A point
    whose simulation fails is reported with ``error`` set and the sweep goes
    on.
    """
    params = params or Params()
    grid = [float(e) for e in grid]
    for e in grid:
        if not 0.0 <= e <= 0.1:
            raise ConfigError(f"epsilon {e!r} outside [0, 0.1]", key="epsilon")
    args = [(params, e, years_per_point, seed, noise_config, dict(sim_kw or {}))
            for e in grid]
    return _pool_map(_sweep_job, args, jobs)


def monotone_within(points, n_se=2.0):
    """True if each successive lambda drops by less than ``n_se`` joint
    standard errors."""
    ok = [p for p in points if p.estimate is not None]
    for a, b in zip(ok[:-1], ok[1:]):
        joint = math.hypot(a.stderr, b.stderr)
        if b.lam < a.lam - n_se * joint:
            return False
    return True


def write_sweep_csv(path, points):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("epsilon,lambda,stderr\n")
        for p in points:
            fh.write(f"{float(p.epsilon)!r},{float(p.lam)!r},{float(p.stderr)!r}\n")


@dataclass(frozen=True)
class DwellStats:
    expansion_share: float
    contraction_share: float
    mean_expansion_years: float
    mean_contraction_years: float
    lam: float

    def as_dict(self) -> dict:
        return dict(vars(self))


def _run_lengths(mask):
    if mask.size == 0:
        return np.empty(0), np.empty(0)
    change = np.flatnonzero(np.diff(mask.astype(np.int8))) + 1
    bounds = np.concatenate(([0], change, [mask.size]))
    lengths = np.diff(bounds)
    kinds = mask[bounds[:-1]]
    return lengths[kinds], lengths[~kinds]


def dwell_asymmetry(t_days, y, lam=None, smooth_window_years=2.0) -> DwellStats:
    """Share of time in expansion (smoothed growth above trend) and contraction.

    Growth is the daily difference of ``y`` annualised and smoothed with a
    centred average; the trend ``lam`` defaults to the series' own OLS slope.
    """
    t_days = np.asarray(t_days, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lam is None:
        lam = growth_rate(t_days, y, min_years=0.0).lam
    dt_years = np.diff(t_days) / DAYS_PER_YEAR
    g = np.diff(y) / dt_years
    w = window_samples(smooth_window_years)
    g = centered_average(g, w) if g.size >= w else g
    expanding = g > lam
    n = expanding.size
    exp_runs, con_runs = _run_lengths(expanding)
    per_year = DAYS_PER_YEAR
    return DwellStats(
        expansion_share=float(expanding.sum() / n),
        contraction_share=float((~expanding).sum() / n),
        mean_expansion_years=float(exp_runs.mean() / per_year) if exp_runs.size else 0.0,
        mean_contraction_years=float(con_runs.mean() / per_year) if con_runs.size else 0.0,
        lam=float(lam),
    )


def read_series_csv(path, column="y"):
    """Read ``t_days,<column>`` and resample linearly onto a one-day grid."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "t_days" not in reader.fieldnames \
                or column not in reader.fieldnames:
            raise ConfigError(f"{path}: expected columns 't_days,{column}'", key=column)
        rows = [(float(r["t_days"]), float(r[column])) for r in reader]
    if len(rows) < 2:
        raise ConfigError(f"{path}: need at least two rows")
    t, v = np.array(rows).T
    if np.any(np.diff(t) <= 0):
        raise ConfigError(f"{path}: t_days must be strictly increasing", key="t_days")
    grid = np.arange(t[0], t[-1] + 1e-9, 1.0)
    return grid, np.interp(grid, t, v)


def write_json(path, obj):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
