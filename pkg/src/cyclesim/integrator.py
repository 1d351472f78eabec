"""Fixed-step integration of the coupled and bounded systems.

The news term enters inside ``tanh`` and is held constant over each substep,
so the system is an ODE with bounded, piecewise-constant forcing rather than an
Ito SDE; ordinary explicit schemes apply without stochastic corrections.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .errors import BoundViolationError, ConfigError, DivergenceError
from .model import BoundedState, FullState, Params
from .noise import NoisePath

SCHEMES = {"euler": _k.EULER, "heun": _k.HEUN}
FULL_COLUMNS = ("h", "s", "p", "y")
BOUNDED_COLUMNS = ("h", "s", "z")


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    dt : step in business days, normally ``1 / substeps_per_day``.
    n_days : recorded span after burn-in.
    record_stride : steps between recorded points; ``None`` means one record
        per day.
    initial_state : ``FullState`` / ``BoundedState``; ``None`` starts at the
        expansion equilibrium with p(0) = 0.
    """

    dt: float = 0.125
    n_days: int = 250
    scheme: str = "heun"
    record_stride: int | None = None
    initial_state: FullState | BoundedState | None = None
    burn_in_days: int = 5000

    def __post_init__(self):
        if not (isinstance(self.dt, (int, float)) and self.dt > 0):
            raise ConfigError("dt must be > 0", key="dt")
        if int(self.n_days) != self.n_days or self.n_days < 1:
            raise ConfigError("n_days must be an integer >= 1", key="n_days")
        object.__setattr__(self, "n_days", int(self.n_days))
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {sorted(SCHEMES)}", key="scheme")
        if int(self.burn_in_days) != self.burn_in_days or self.burn_in_days < 0:
            raise ConfigError("burn_in_days must be an integer >= 0", key="burn_in_days")
        object.__setattr__(self, "burn_in_days", int(self.burn_in_days))
        spd = self.steps_per_day
        if abs(spd * self.dt - 1.0) > 1e-12:
            raise ConfigError("1/dt must be a whole number of steps per day", key="dt")
        stride = spd if self.record_stride is None else self.record_stride
        if int(stride) != stride or stride < 1:
            raise ConfigError("record_stride must be an integer >= 1", key="record_stride")
        object.__setattr__(self, "record_stride", int(stride))

    @property
    def steps_per_day(self) -> int:
        return int(round(1.0 / self.dt))

    @property
    def n_steps(self) -> int:
        return (self.burn_in_days + self.n_days) * self.steps_per_day

    def as_dict(self) -> dict:
        init = self.initial_state
        return {
            "dt": self.dt, "n_days": self.n_days, "scheme": self.scheme,
            "record_stride": self.record_stride, "burn_in_days": self.burn_in_days,
            "initial_state": None if init is None else vars(init),
        }


@dataclass
class Trajectory:
    """Recorded path. ``states`` columns follow ``columns``; times in days
    after burn-in; ``xi`` is the mean forcing over each recorded block."""

    times: np.ndarray
    states: np.ndarray
    columns: tuple
    xi: np.ndarray
    meta: dict = field(default_factory=dict)

    def __getattr__(self, name):
        columns = self.__dict__.get("columns", ())
        if name in columns:
            return self.states[:, columns.index(name)]
        if name == "z" and "p" in columns:
            return self.p - self.y
        raise AttributeError(name)

    @property
    def formulation(self) -> str:
        return "full" if "p" in self.columns else "bounded"

    def to_csv(self, path):
        if self.formulation == "full":
            header = "t_days,h,s,p,y,z,xi"
            data = np.column_stack([self.times, self.states, self.z, self.xi])
        else:
            header = "t_days,h,s,z,xi"
            data = np.column_stack([self.times, self.states, self.xi])
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            np.savetxt(fh, data, fmt="%.17g", delimiter=",", header=header, comments="")

    def write_sidecar(self, path):
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _check_noise(sim: SimConfig, noise: NoisePath):
    if noise.config.substeps_per_day != sim.steps_per_day:
        raise ConfigError("noise substeps_per_day does not match 1/dt", key="dt")
    if noise.n_steps < sim.n_steps:
        raise ConfigError(
            f"noise path has {noise.n_steps} samples, need {sim.n_steps} "
            f"(burn-in {sim.burn_in_days} + {sim.n_days} days)", key="n_days")


def _meta(params, sim, noise, formulation):
    return {
        "formulation": formulation,
        "params": params.as_dict(),
        "noise": noise.config.as_dict(),
        "seed": noise.seed,
        "sim": sim.as_dict(),
        "scheme": sim.scheme,
        "dt": sim.dt,
    }


def _raise_status(status, fail_step, last, sim, names):
    t = fail_step * sim.dt - sim.burn_in_days
    state = dict(zip(names, map(float, last)))
    if status == _k.STATUS_DIVERGED:
        raise DivergenceError(f"z = p - y exceeded {_k.Z_LIMIT} at t={t:g} days; "
                              f"state={state}", t=t, state=state)
    raise BoundViolationError(f"|h| or |s| exceeded 1 + {_k.BOUND_ABORT} at "
                              f"t={t:g} days; state={state}", t=t, state=state)


def default_initial_state(params: Params) -> BoundedState:
    """Expansion (s > 0) stable equilibrium."""
    from .phase import expansion_equilibrium
    return expansion_equilibrium(params).state


def simulate_full(params: Params, sim: SimConfig, noise: NoisePath) -> Trajectory:
    _check_noise(sim, noise)
    init = sim.initial_state
    if init is None:
        init = default_initial_state(params).lift(0.0)
    elif isinstance(init, BoundedState):
        init = init.lift(0.0)
    x0 = init.as_array()
    skip = sim.burn_in_days * sim.steps_per_day
    out, xi_rec, status, fail, last = _k.integrate_full(
        x0, noise.values[: sim.n_steps], sim.dt, SCHEMES[sim.scheme],
        sim.record_stride, skip, params.as_array())
    if status != _k.STATUS_OK:
        _raise_status(status, fail, last, sim, FULL_COLUMNS)
    times = np.arange(1, out.shape[0] + 1) * (sim.record_stride * sim.dt)
    return Trajectory(times, out, FULL_COLUMNS, xi_rec, _meta(params, sim, noise, "full"))


def simulate_bounded(params: Params, sim: SimConfig, noise: NoisePath) -> Trajectory:
    _check_noise(sim, noise)
    init = sim.initial_state
    if init is None:
        init = default_initial_state(params)
    elif isinstance(init, FullState):
        init = init.to_bounded()
    x0 = init.as_array()
    skip = sim.burn_in_days * sim.steps_per_day
    out, xi_rec, status, fail, last = _k.integrate_bounded(
        x0, noise.values[: sim.n_steps], sim.dt, SCHEMES[sim.scheme],
        sim.record_stride, skip, params.as_array())
    if status != _k.STATUS_OK:
        _raise_status(status, fail, last, sim, BOUNDED_COLUMNS)
    times = np.arange(1, out.shape[0] + 1) * (sim.record_stride * sim.dt)
    return Trajectory(times, out, BOUNDED_COLUMNS, xi_rec,
                      _meta(params, sim, noise, "bounded"))


def step(state, xi, params: Params, dt, scheme="heun"):
    """One explicit step from a ``FullState`` or ``BoundedState``."""
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {sorted(SCHEMES)}", key="scheme")
    P = params.as_array()
    code = SCHEMES[scheme]
    if isinstance(state, FullState):
        if not state.z <= _k.Z_LIMIT:
            raise DivergenceError(f"z = {state.z!r} exceeds {_k.Z_LIMIT}", state=state)
        return FullState(*_k.step_full(state.h, state.s, state.p, state.y,
                                       float(xi), float(dt), code, P))
    if not state.z <= _k.Z_LIMIT:
        raise DivergenceError(f"z = {state.z!r} exceeds {_k.Z_LIMIT}", state=state)
    return BoundedState(*_k.step_bounded(state.h, state.s, state.z,
                                         float(xi), float(dt), code, P))
