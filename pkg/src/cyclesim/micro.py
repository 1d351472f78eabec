"""Agent-level Monte Carlo of the binary-opinion investor population.

Each of N investors is an optimist (+1) or a pessimist (-1). Over a step dt a
pessimist turns optimist with probability ``rate_up * dt`` and an optimist
turns pessimist with probability ``rate_down * dt``, with the logistic rates of
:func:`cyclesim.model.transition_rates` evaluated at the current force.

Agents within a subpopulation are exchangeable and flip independently given
the current (s, h), so the number of flips in each subpopulation is exactly
Binomial(count, probability). Sampling two binomials per step is therefore
statistically identical to looping over agents.

In the large-N limit the mean sentiment obeys
``tau_s * ds/dt = -s + tanh(beta1*s + beta2*h)``, which is what this module
exists to check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError
from .model import MicroParams, force, micro_coupling, transition_rates

MAX_FLIP_PROBABILITY = 0.1
DEFAULT_DT_FRACTION = 0.05


def default_dt(micro: MicroParams) -> float:
    """Micro step, 5% of the mean flip time."""
    return DEFAULT_DT_FRACTION * micro.tau_s_micro


@dataclass(frozen=True)
class Population:
    n_plus: int
    n_minus: int

    def __post_init__(self):
        if self.n_plus < 0 or self.n_minus < 0:
            raise ValueError("agent counts must be non-negative")

    @property
    def n(self) -> int:
        return self.n_plus + self.n_minus

    @property
    def s(self) -> float:
        return (self.n_plus - self.n_minus) / self.n

    @classmethod
    def from_sentiment(cls, n_agents: int, s0: float) -> "Population":
        n_plus = int(round(n_agents * (1.0 + s0) / 2.0))
        return cls(n_plus, n_agents - n_plus)


def micro_step(pop: Population, h, micro: MicroParams, beta1, beta2, dt,
               rng: np.random.Generator) -> Population:
    """Advance the population by one step of length ``dt``.

    ``beta1`` and ``beta2`` are the macro-level couplings; they are converted
    to micro couplings with ``micro.alpha`` before evaluating the force.
    """
    F = force(pop.s, h, micro_coupling(beta1, micro.alpha),
              micro_coupling(beta2, micro.alpha))
    rates = transition_rates(F, micro)
    p_up = rates.rate_up * dt
    p_down = rates.rate_down * dt
    if max(p_up, p_down) > MAX_FLIP_PROBABILITY or dt < 0:
        raise ConfigError(f"dt={dt!r} too large: flip probability "
                          f"{max(p_up, p_down):.3g} > {MAX_FLIP_PROBABILITY}", key="dt")
    up = int(rng.binomial(pop.n_minus, p_up))
    down = int(rng.binomial(pop.n_plus, p_down))
    return Population(pop.n_plus + up - down, pop.n_minus - up + down)


def _h_at(h_series, t):
    if callable(h_series):
        return float(h_series(t))
    arr = np.asarray(h_series)
    return float(arr[min(int(math.floor(t + 1e-9)), arr.size - 1)])


def micro_simulate(n_agents, h_series, micro: MicroParams, beta1, beta2, dt=None,
                   n_days=500, seed=0, s0=0.0):
    """Stochastic path of mean sentiment under exogenous ``h``.

    ``h_series`` is either a callable ``h(t_days)`` or a sequence of daily
    values held constant over each day. Returns ``(t, s)`` including t = 0.
    """
    if n_agents < 100:
        raise ConfigError("n_agents must be >= 100", key="n_agents")
    if dt is None:
        dt = default_dt(micro)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    micro = MicroParams(alpha=micro.alpha, tau_s_micro=micro.tau_s_micro,
                        n_agents=n_agents)
    n_steps = int(round(n_days / dt))
    t = np.arange(n_steps + 1) * dt
    s = np.empty(n_steps + 1)
    pop = Population.from_sentiment(n_agents, s0)
    s[0] = pop.s
    for i in range(n_steps):
        pop = micro_step(pop, _h_at(h_series, t[i]), micro, beta1, beta2, dt, rng)
        s[i + 1] = pop.s
    return t, s


def mean_field_path(h_series, beta1, beta2, tau_s, dt, n_days, s0=0.0):
    """Deterministic mean-field map on the same grid as :func:`micro_simulate`.

    This is the explicit Euler discretisation the micro step reproduces in
    expectation.
    """
    n_steps = int(round(n_days / dt))
    t = np.arange(n_steps + 1) * dt
    s = np.empty(n_steps + 1)
    s[0] = s0
    for i in range(n_steps):
        h = _h_at(h_series, t[i])
        s[i + 1] = s[i] + dt * (-s[i] + math.tanh(beta1 * s[i] + beta2 * h)) / tau_s
    return t, s


def sentiment_ode(h_series, beta1, beta2, tau_s, t_eval, s0=0.0):
    """Accurate solution of the sentiment equation on ``t_eval``.

    Integrates day by day so that piecewise-constant daily ``h`` switches
    exactly at day boundaries.
    """
    t_eval = np.asarray(t_eval, dtype=np.float64)

    def rhs(t, s, h):
        return (-s + math.tanh(beta1 * s[0] + beta2 * h)) / tau_s

    out = np.empty_like(t_eval)
    s = s0
    day_edges = np.arange(0.0, math.ceil(t_eval[-1]) + 1.0)
    for a, b in zip(day_edges[:-1], day_edges[1:]):
        mask = (t_eval >= a) & (t_eval < b) if b < day_edges[-1] else (t_eval >= a) & (t_eval <= b)
        h = _h_at(h_series, a)
        sol = solve_ivp(rhs, (a, b), [s], args=(h,), rtol=1e-10, atol=1e-12,
                        dense_output=True, method="DOP853")
        if mask.any():
            out[mask] = sol.sol(t_eval[mask])[0]
        s = float(sol.y[0, -1])
    return out


def linear_noise_std(h_series, beta1, beta2, tau_s, n_agents, dt, n_days, s0=0.0):
    """Standard deviation of s predicted by the linear-noise approximation.

    Propagates ``dV/dt = 2 J V + D`` along the mean-field path, where ``J`` is
    the local relaxation rate and ``D = 2 (1 - s tanh F) / (N tau_s)`` the
    binomial diffusion. Returns an array on the grid of
    :func:`mean_field_path`.
    """
    t, s = mean_field_path(h_series, beta1, beta2, tau_s, dt, n_days, s0)
    V = np.zeros_like(s)
    for i in range(s.size - 1):
        m = math.tanh(beta1 * s[i] + beta2 * _h_at(h_series, t[i]))
        J = (-1.0 + beta1 * (1.0 - m * m)) / tau_s
        D = 2.0 * (1.0 - s[i] * m) / (n_agents * tau_s)
        V[i + 1] = max(V[i] + dt * (2.0 * J * V[i] + D), 0.0)
    return np.sqrt(V)


def square_wave(amplitude=0.5, period_days=100.0):
    """h(t) = +amplitude for the first half of each period, -amplitude after."""
    def h(t):
        return amplitude if (t % period_days) < 0.5 * period_days else -amplitude
    return h


def sup_deviation(n_agents, h_series, micro: MicroParams, beta1, beta2, dt=None,
                  n_days=500, seed=0, s0=0.0, reference="ode"):
    """Sup-norm distance between a micro path and the mean-field solution.

    ``reference`` is ``"ode"`` (accurate solution) or ``"grid"`` (the Euler
    map on the micro time grid, free of discretisation bias).
    """
    if dt is None:
        dt = default_dt(micro)
    t, s_micro = micro_simulate(n_agents, h_series, micro, beta1, beta2, dt, n_days,
                                seed, s0)
    if reference == "grid":
        _, s_ref = mean_field_path(h_series, beta1, beta2, micro.tau_s_micro, dt,
                                   n_days, s0)
    else:
        s_ref = sentiment_ode(h_series, beta1, beta2, micro.tau_s_micro, t, s0)
    return float(np.max(np.abs(s_micro - s_ref)))


def deviation_scaling(sizes, h_series, micro: MicroParams, beta1, beta2, dt=None,
                      n_days=500, seed=0, replicas=4, s0=0.0):
    """Mean sup deviation (vs the grid mean-field map) for each population size
    and the fitted exponent of deviation ~ N**exponent."""
    means = []
    for i, n in enumerate(sizes):
        devs = [sup_deviation(n, h_series, micro, beta1, beta2, dt, n_days,
                              (seed, i, r), s0, reference="grid")
                for r in range(replicas)]
        means.append(float(np.mean(devs)))
    slope, _ = np.polyfit(np.log(np.asarray(sizes, dtype=float)), np.log(means), 1)
    return {"sizes": [int(n) for n in sizes], "mean_sup_deviation": means,
            "exponent": float(slope)}


def stationary_ratio(F, micro: MicroParams, dt, n_steps, seed, burn_in=None):
    """Long-run optimist/pessimist ratio with the force frozen at ``F``.

    Compare with ``exp(alpha * F)``. Returns ``(ratio, standard_error)``,
    the error from batch means.
    """
    rates = transition_rates(F, micro)
    p_up = rates.rate_up * dt
    p_down = rates.rate_down * dt
    if max(p_up, p_down) > MAX_FLIP_PROBABILITY:
        raise ConfigError("dt too large for the flip probabilities", key="dt")
    if n_steps < 20:
        raise ConfigError("n_steps must be >= 20", key="n_steps")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n = micro.n_agents
    n_plus = n // 2
    if burn_in is None:
        burn_in = int(10 * micro.tau_s_micro / dt)
    frac = np.empty(n_steps)
    for i in range(burn_in + n_steps):
        up = rng.binomial(n - n_plus, p_up)
        down = rng.binomial(n_plus, p_down)
        n_plus += up - down
        if i >= burn_in:
            frac[i - burn_in] = n_plus / n
    batches = frac[: (n_steps // 20) * 20].reshape(20, -1).mean(axis=1)
    f = float(frac.mean())
    ratio = f / (1.0 - f)
    se_f = float(batches.std(ddof=1) / math.sqrt(batches.size))
    return ratio, se_f / (1.0 - f) ** 2


def write_series(path, t, s):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        np.savetxt(fh, np.column_stack([t, s]), fmt="%.17g", delimiter=",",
                   header="t_days,s_micro", comments="")


def check_report(n_agents=20000, beta1=1.1, beta2=1.0, micro: MicroParams | None = None,
                 amplitude=0.5, period_days=100.0, n_days=500, dt=None, seed=0,
                 sizes=(1000, 10000, 100000), replicas=4):
    """Micro versus mean-field comparison under a square-wave ``h``.

    Returns ``(report, t, s_micro)``; ``report`` holds the sup-norm deviation
    from the accurate ODE, the linear-noise prediction of the peak standard
    deviation, and the N-scaling fit.
    """
    micro = micro or MicroParams()
    dt = default_dt(micro) if dt is None else dt
    h = square_wave(amplitude, period_days)
    t, s_micro = micro_simulate(n_agents, h, micro, beta1, beta2, dt, n_days, seed)
    s_ode = sentiment_ode(h, beta1, beta2, micro.tau_s_micro, t)
    _, s_grid = mean_field_path(h, beta1, beta2, micro.tau_s_micro, dt, n_days)
    sigma = linear_noise_std(h, beta1, beta2, micro.tau_s_micro, n_agents, dt, n_days)
    scaling = deviation_scaling(sizes, h, micro, beta1, beta2, dt, n_days, seed, replicas)
    report = {
        "n_agents": int(n_agents), "beta1": beta1, "beta2": beta2,
        "alpha": micro.alpha, "tau_s_micro": micro.tau_s_micro,
        "h_amplitude": amplitude, "h_period_days": period_days,
        "n_days": n_days, "dt": dt, "seed": seed,
        "sup_deviation_ode": float(np.max(np.abs(s_micro - s_ode))),
        "sup_deviation_grid": float(np.max(np.abs(s_micro - s_grid))),
        "grid_discretisation_error": float(np.max(np.abs(s_grid - s_ode))),
        "linear_noise_peak_std": float(sigma.max()),
        "scaling": scaling,
    }
    return report, t, s_micro


def write_report(path, report):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
