"""Model parameters, state types and the right-hand sides of the coupled system.

The coupled economy-market system in log variables::

    tau_y * dy/dt = exp(p - y) - b
    dp/dt         = c1 * ds/dt + c2 * (s - s_star)
    tau_s * ds/dt = -s + tanh(beta1 * s + beta2 * h)
    tau_h * dh/dt = -h + tanh(k1 * dp/dt + k2 * dy/dt + epsilon + xi)

and its bounded form in (h, s, z) with z = p - y. Time is measured in
business days; 250 business days make a year.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels as _k
from .errors import ConfigError, DivergenceError

DAYS_PER_YEAR = 250

PARAM_NAMES = ("tau_h", "tau_s", "tau_y", "beta1", "beta2", "k1", "k2",
               "epsilon", "c1", "c2", "s_star", "b")


@dataclass(frozen=True)
class Params:
    """Macro-level coefficients of the coupled system.

    Defaults are the canonical calibration. ``omega_y`` is derived and always
    equals ``1 / tau_y``.
    """

    tau_h: float = 2.5
    tau_s: float = 25.0
    tau_y: float = 1000.0
    beta1: float = 1.1
    beta2: float = 1.0
    k1: float = 30.0
    k2: float = 175.0
    epsilon: float = 0.03
    c1: float = 1.0
    c2: float = 0.00022
    s_star: float = 0.03
    b: float = 0.5

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name} must be a number, got {value!r}", key=name)
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}", key=name)
            object.__setattr__(self, name, float(value))
        for name in ("tau_h", "tau_s", "tau_y"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0", key=name)
        for name in ("beta1", "beta2", "k1", "k2", "c1", "c2", "b"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0", key=name)

    @property
    def omega_y(self) -> float:
        return 1.0 / self.tau_y

    @classmethod
    def table_i(cls) -> "Params":
        return cls()

    def replace(self, **changes) -> "Params":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def as_array(self) -> np.ndarray:
        """Flat float64 vector in the layout expected by the compiled kernels."""
        return np.array([getattr(self, name) for name in PARAM_NAMES], dtype=np.float64)

    @classmethod
    def from_mapping(cls, values) -> "Params":
        """Build from a mapping of strings or numbers; unknown keys are ignored.

        Missing keys fall back to the canonical values.
        """
        kwargs = {}
        for name in PARAM_NAMES:
            if name in values:
                raw = values[name]
                try:
                    kwargs[name] = float(raw)
                except (TypeError, ValueError):
                    raise ConfigError(f"{name}: cannot parse {raw!r} as a number",
                                      key=name) from None
        return cls(**kwargs)

    @classmethod
    def from_config(cls, path) -> "Params":
        from .config import read_config
        return cls.from_mapping(read_config(path))

    def to_config_text(self) -> str:
        lines = ["# coupled economy-market parameters (time unit: business day)"]
        lines += [f"{name} = {getattr(self, name)!r}" for name in PARAM_NAMES]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MicroParams:
    """Agent-level parameters of the binary-opinion population.

    alpha : float
        Sensitivity of the equilibrium optimist/pessimist ratio to the force.
        Macro couplings equal ``alpha / 2`` times the micro couplings, so the
        default ``alpha = 2`` makes both coincide.
    tau_s_micro : float
        Mean opinion-flip time [business days].
    n_agents : int
    """

    alpha: float = 2.0
    tau_s_micro: float = 25.0
    n_agents: int = 20_000

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0", key="alpha")
        if not self.tau_s_micro > 0:
            raise ConfigError("tau_s_micro must be > 0", key="tau_s_micro")
        if int(self.n_agents) != self.n_agents or self.n_agents < 2:
            raise ConfigError("n_agents must be an integer >= 2", key="n_agents")
        object.__setattr__(self, "n_agents", int(self.n_agents))


def macro_coupling(micro_beta: float, alpha: float) -> float:
    """Macro-level coupling after absorbing ``alpha / 2``."""
    return 0.5 * alpha * micro_beta


def micro_coupling(macro_beta: float, alpha: float) -> float:
    return 2.0 * macro_beta / alpha


@dataclass(frozen=True)
class FullState:
    h: float
    s: float
    p: float
    y: float

    def __post_init__(self):
        _check_unit("h", self.h)
        _check_unit("s", self.s)

    @property
    def z(self) -> float:
        return self.p - self.y

    def as_array(self) -> np.ndarray:
        return np.array([self.h, self.s, self.p, self.y], dtype=np.float64)

    def to_bounded(self) -> "BoundedState":
        return BoundedState(self.h, self.s, self.p - self.y)


@dataclass(frozen=True)
class BoundedState:
    h: float
    s: float
    z: float

    def __post_init__(self):
        _check_unit("h", self.h)
        _check_unit("s", self.s)
        if not math.isfinite(self.z):
            raise ValueError("z must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.h, self.s, self.z], dtype=np.float64)

    def lift(self, p: float = 0.0) -> FullState:
        """Full state with the given log price and y = p - z."""
        return FullState(self.h, self.s, p, p - self.z)


def _check_unit(name, value, tol=1e-9):
    if not abs(value) <= 1.0 + tol:
        raise ValueError(f"|{name}| must be <= 1, got {value!r}")


@dataclass(frozen=True)
class RatePair:
    rate_up: float
    rate_down: float


# ---------------------------------------------------------------------------
# Micro-level relations


def force(s, h, beta1, beta2):
    """Total force on investors from peer sentiment and analyst expectation."""
    return beta1 * s + beta2 * h


def transition_rates(F, micro: MicroParams) -> RatePair:
    """Opinion-flip rates (pessimist->optimist, optimist->pessimist).

    Uses the logistic form, so the rates sum to ``1 / tau_s_micro`` and their
    ratio is ``exp(alpha * F)``. ``expit`` keeps both finite for any ``F``.
    """
    x = micro.alpha * F
    return RatePair(rate_up=float(expit(x)) / micro.tau_s_micro,
                    rate_down=float(expit(-x)) / micro.tau_s_micro)


# ---------------------------------------------------------------------------
# Macro right-hand sides


def sentiment_rhs(state, params: Params) -> float:
    """ds/dt for a ``FullState`` or ``BoundedState`` (anything with ``h``, ``s``)."""
    return _k.sentiment_rate(float(state.s), float(state.h), params.tau_s,
                             params.beta1, params.beta2)


def analyst_rhs(h, pdot, ydot, xi, params: Params) -> float:
    return _k.analyst_rate(float(h), float(pdot), float(ydot), float(xi),
                           params.tau_h, params.k1, params.k2, params.epsilon)


def price_rate(sdot, s, params: Params) -> float:
    return _k.price_rate(float(sdot), float(s), params.c1, params.c2, params.s_star)


def output_rhs(y, p, params: Params, t=None) -> float:
    z = p - y
    if not z <= _k.Z_LIMIT:
        raise DivergenceError(
            f"p - y = {z!r} exceeds {_k.Z_LIMIT} at t={t!r} (p={p!r}, y={y!r})",
            t=t, state=(p, y))
    return _k.output_rate(float(z), params.tau_y, params.b)


def coupled_rhs(state: FullState, xi, params: Params, t=None) -> np.ndarray:
    """Derivatives (dh, ds, dp, dy) of the full system.

    Evaluated as a cascade: dy, then ds, then dp from ds, then dh from dp, dy.
    """
    ydot = output_rhs(state.y, state.p, params, t=t)
    sdot = sentiment_rhs(state, params)
    pdot = price_rate(sdot, state.s, params)
    hdot = analyst_rhs(state.h, pdot, ydot, xi, params)
    return np.array([hdot, sdot, pdot, ydot])


def bounded_rhs(state: BoundedState, xi, params: Params, t=None) -> np.ndarray:
    """Derivatives (dh, ds, dz) of the bounded system."""
    if not state.z <= _k.Z_LIMIT:
        raise DivergenceError(f"z = {state.z!r} exceeds {_k.Z_LIMIT} at t={t!r}",
                              t=t, state=state)
    return np.array(_k.bounded_rhs(state.h, state.s, state.z, float(xi),
                                   params.as_array()))


# ---------------------------------------------------------------------------
# Efficient-market limit


@dataclass
class EfficientPath:
    """Random-walk price path of the non-interacting, instantaneous limit.

    ``increments`` are the daily log-price changes; ``p`` their running sum.
    """

    t_days: np.ndarray
    p: np.ndarray
    s: np.ndarray
    h: np.ndarray
    xi: np.ndarray
    increments: np.ndarray
    drift: float
    meta: dict = field(default_factory=dict)


def efficient_drift(epsilon, params: Params) -> float:
    """Closed-form daily drift ``c2 * beta2 * (epsilon - s_star / beta2)``."""
    return params.c2 * params.beta2 * (epsilon - params.s_star / params.beta2)


def efficient_limit_path(n_days: int, epsilon: float, params: Params, seed: int,
                         daily_std: float = 0.4) -> EfficientPath:
    """Sample the efficient-market random walk on a daily grid.

    With no herding, no price feedback and instantaneous opinion response,
    h = epsilon + xi, s = beta2 * h and dp/dt = c2 * (s - s_star).
    """
    if int(n_days) != n_days or n_days < 1:
        raise ConfigError("n_days must be an integer >= 1", key="n_days")
    n_days = int(n_days)
    from .noise import GAUSSIAN_ID, PRNG_ID
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    xi = daily_std * rng.standard_normal(n_days)
    h = epsilon + xi
    s = params.beta2 * h
    increments = params.c2 * (s - params.s_star)  # dt = 1 day
    p = np.cumsum(increments)
    return EfficientPath(
        t_days=np.arange(1, n_days + 1, dtype=np.float64), p=p, s=s, h=h, xi=xi,
        increments=increments, drift=efficient_drift(epsilon, params),
        meta={"seed": seed, "daily_std": daily_std, "epsilon": epsilon,
              "prng": PRNG_ID, "gaussian": GAUSSIAN_ID})
