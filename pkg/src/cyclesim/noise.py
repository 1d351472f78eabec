"""Exogenous news noise on the integration grid.

Each business day is split into ``substeps_per_day`` samples. Within a day the
samples follow a stationary AR(1) recursion with positive coefficient, so
news is positively correlated intraday. Every day starts from a fresh
stationary draw, which makes the daily means exactly independent. The path is
scaled so that the daily means have standard deviation ``daily_std``.

Random numbers come from numpy's PCG64 bit generator seeded through
``SeedSequence``; Gaussians use ``Generator.standard_normal`` (ziggurat).
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError

PRNG_ID = "numpy.random.PCG64/SeedSequence"
GAUSSIAN_ID = "numpy.random.Generator.standard_normal/ziggurat"


@dataclass(frozen=True)
class NoiseConfig:
    daily_std: float = 0.4
    substeps_per_day: int = 8
    intraday_ar_coeff: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.daily_std) and self.daily_std >= 0):
            raise ConfigError("daily_std must be >= 0", key="daily_std")
        m = self.substeps_per_day
        if isinstance(m, bool) or int(m) != m or m < 1:
            raise ConfigError("substeps_per_day must be an integer >= 1",
                              key="substeps_per_day")
        object.__setattr__(self, "substeps_per_day", int(m))
        phi = self.intraday_ar_coeff
        if not 0.0 <= phi < 1.0:
            raise ConfigError("intraday_ar_coeff must lie in [0, 1)",
                              key="intraday_ar_coeff")
        if phi ** self.substeps_per_day >= 0.01:
            raise ConfigError(
                "intraday_ar_coeff ** substeps_per_day must be < 0.01 "
                f"(got {phi ** self.substeps_per_day:.4g})", key="intraday_ar_coeff")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer", key="seed")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def dt(self) -> float:
        return 1.0 / self.substeps_per_day

    def as_dict(self) -> dict:
        d = asdict(self)
        d["prng"] = PRNG_ID
        d["gaussian"] = GAUSSIAN_ID
        return d


@dataclass(frozen=True)
class NoisePath:
    values: np.ndarray
    config: NoiseConfig
    seed: int

    @property
    def n_steps(self) -> int:
        return self.values.size

    @property
    def n_days(self) -> int:
        return self.values.size // self.config.substeps_per_day

    def daily_means(self) -> np.ndarray:
        m = self.config.substeps_per_day
        return self.values[: self.n_days * m].reshape(-1, m).mean(axis=1)

    def to_csv(self, path):
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("xi\n")
            for v in self.values:
                fh.write(f"{float(v)!r}\n")

    @classmethod
    def from_csv(cls, path, config: NoiseConfig) -> "NoisePath":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["xi"]:
                raise ConfigError(f"{path}: expected header 'xi', got {header!r}")
            values = np.array([float(row[0]) for row in reader if row], dtype=np.float64)
        return cls(values=values, config=config, seed=config.seed)


def daily_mean_variance_factor(substeps: int, phi: float) -> float:
    """Variance of the mean of ``substeps`` unit-variance AR(1) samples."""
    m = substeps
    lags = np.arange(1, m)
    return float(m + 2.0 * np.sum((m - lags) * phi ** lags)) / m ** 2


def derive_seed(seed: int, index: int) -> int:
    """Child seed number ``index`` of a run seed (stream-splitting rule).

    Uses ``SeedSequence(seed, spawn_key=(index,))``, i.e. the same streams that
    ``SeedSequence(seed).spawn`` hands out.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def sample_path(config: NoiseConfig, n_days: int) -> NoisePath:
    if int(n_days) != n_days or n_days < 1:
        raise ConfigError("n_days must be an integer >= 1", key="n_days")
    n_days = int(n_days)
    m = config.substeps_per_day
    phi = config.intraday_ar_coeff
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    e = rng.standard_normal((n_days, m))
    x = np.empty_like(e)
    x[:, 0] = e[:, 0]
    innov = math.sqrt(1.0 - phi * phi)
    for j in range(1, m):
        x[:, j] = phi * x[:, j - 1] + innov * e[:, j]
    unit = x / math.sqrt(daily_mean_variance_factor(m, phi))
    values = config.daily_std * unit.ravel()
    return NoisePath(values=values, config=config, seed=config.seed)


def _autocorr(x, lag):
    if lag >= x.size:
        return float("nan")
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        return 0.0
    return float(np.dot(xc[:-lag], xc[lag:])) / denom


def path_stats(path: NoisePath) -> dict:
    """Sample statistics of a noise path.

    Keys: ``mean``, ``substep_std``, ``daily_std`` (std of daily means),
    ``acf_substep_lag1``, ``acf_substep_lag_day`` (lag of one day in substeps)
    and ``acf_daily_lag1`` (daily means).
    """
    v = path.values
    if v.size == 0:
        raise ValueError("empty noise path")
    m = path.config.substeps_per_day
    daily = path.daily_means()
    return {
        "mean": float(v.mean()),
        "substep_std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "daily_std": float(daily.std(ddof=1)) if daily.size > 1 else 0.0,
        "acf_substep_lag1": _autocorr(v, 1),
        "acf_substep_lag_day": _autocorr(v, m),
        "acf_daily_lag1": _autocorr(daily, 1),
    }
