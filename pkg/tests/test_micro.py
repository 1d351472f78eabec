import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from cyclesim.errors import ConfigError
from cyclesim.micro import (Population, check_report, default_dt, linear_noise_std,
                            mean_field_path, micro_simulate, micro_step,
                            sentiment_ode, square_wave, stationary_ratio,
                            sup_deviation, write_report, write_series)
from cyclesim.model import MicroParams, transition_rates


def gen(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


@given(st.integers(100, 10_000), st.floats(-1, 1), st.floats(-1, 1),
       st.integers(0, 2 ** 32 - 1))
def test_population_conserved(n, s0, h, seed):
    pop = Population.from_sentiment(n, s0)
    rng = gen(seed)
    for _ in range(5):
        pop = micro_step(pop, h, MicroParams(), 1.1, 1.0, 1.25, rng)
        assert pop.n == n
        assert -1.0 <= pop.s <= 1.0


def test_symmetric_step_has_zero_mean():
    rng = gen(1)
    pop = Population(5000, 5000)
    ds = [micro_step(pop, 0.0, MicroParams(), 1.1, 1.0, 1.25, rng).s for _ in range(4000)]
    se = np.std(ds) / math.sqrt(len(ds))
    assert abs(np.mean(ds)) < 4 * se


def test_saturated_force():
    micro = MicroParams(alpha=2000.0)
    r = transition_rates(1.0, micro)
    assert r.rate_up == pytest.approx(1 / 25) and r.rate_down < 1e-300
    rng = gen(2)
    pop = Population(3000, 7000)
    for _ in range(20):
        new = micro_step(pop, 1.0, micro, 1.1, 1.0, 1.25, rng)
        assert new.n_plus >= pop.n_plus
        pop = new


@pytest.mark.parametrize("s0,h", [(0.2, 0.3), (-0.6, 0.1), (0.9, -0.8)])
def test_one_step_mean_matches_master_identity(s0, h):
    micro = MicroParams()
    dt = 1.25
    pop = Population.from_sentiment(20_000, s0)
    s = pop.s
    r = transition_rates(1.1 * s + 1.0 * h, micro)
    expected = dt * ((1 - s) * r.rate_up - (1 + s) * r.rate_down)
    # the same drift written as the relaxation toward tanh of the macro force
    assert expected == pytest.approx(dt * (math.tanh(1.1 * s + h) - s) / 25.0, rel=1e-12)
    rng = gen(3)
    ds = np.array([micro_step(pop, h, micro, 1.1, 1.0, dt, rng).s - s
                   for _ in range(5000)])
    se = ds.std(ddof=1) / math.sqrt(ds.size)
    assert abs(ds.mean() - expected) < 4 * se


def test_alpha_only_rescales_micro_coupling():
    # the macro couplings fix the mean drift whatever alpha is
    for alpha in (0.5, 2.0, 7.0):
        micro = MicroParams(alpha=alpha)
        F = 2.0 * (1.1 * 0.3 + 1.0 * 0.2) / alpha
        r = transition_rates(F, micro)
        drift = (1 - 0.3) * r.rate_up - (1 + 0.3) * r.rate_down
        assert drift == pytest.approx((math.tanh(1.1 * 0.3 + 0.2) - 0.3) / 25, rel=1e-12)


def test_step_rejects_large_dt():
    with pytest.raises(ConfigError) as exc:
        micro_step(Population(50, 50), 0.0, MicroParams(), 1.1, 1.0, 10.0, gen())
    assert exc.value.key == "dt"


def test_simulate_rejects_small_population():
    with pytest.raises(ConfigError):
        micro_simulate(50, lambda t: 0.0, MicroParams(), 1.1, 1.0, n_days=10)


def test_default_dt():
    assert default_dt(MicroParams()) == pytest.approx(1.25)


def test_decay_tracks_ode():
    micro = MicroParams()
    h0 = lambda t: 0.0  # noqa: E731
    t, s = micro_simulate(20_000, h0, micro, 0.5, 1.0, n_days=100, seed=4, s0=0.8)
    ref = sentiment_ode(h0, 0.5, 1.0, 25.0, t, s0=0.8)
    assert s[-1] < 0.3 and ref[-1] < 0.2
    sigma = linear_noise_std(h0, 0.5, 1.0, 25.0, 20_000, 1.25, 100, s0=0.8)
    dev = np.abs(s - ref)
    assert dev.max() <= 4 * sigma.max() + 2e-3
    # the deterministic part: grid map versus accurate solution
    _, grid = mean_field_path(h0, 0.5, 1.0, 25.0, 1.25, 100, s0=0.8)
    assert np.max(np.abs(grid - ref)) < 5e-3


def test_constant_drive_converges_to_root():
    micro = MicroParams()
    root = brentq(lambda x: math.tanh(1.1 * x + 0.5) - x, 0.0, 1.0)
    t, s = micro_simulate(20_000, lambda t: 0.5, micro, 1.1, 1.0, n_days=600, seed=5)
    tail = s[t > 300]
    sigma = linear_noise_std(lambda t: 0.5, 1.1, 1.0, 25.0, 20_000, 1.25, 600)[-1]
    assert abs(tail.mean() - root) < 3 * sigma
    assert tail.std() == pytest.approx(sigma, rel=0.35)


def test_stationary_fluctuations_scale_as_inverse_sqrt_n():
    micro = MicroParams()
    stds = []
    sizes = [100, 100_000]
    for n in sizes:
        t, s = micro_simulate(n, lambda t: 0.5, micro, 0.5, 1.0, n_days=20_000, seed=n)
        stds.append(s[t > 500].std())
    slope = np.polyfit(np.log(sizes), np.log(stds), 1)[0]
    assert -0.6 <= slope <= -0.4


@pytest.mark.parametrize("F", [0.0, 0.3, -0.5])
def test_detailed_balance(F):
    micro = MicroParams(n_agents=5000)
    ratio, se = stationary_ratio(F, micro, dt=1.25, n_steps=40_000, seed=6)
    assert abs(ratio - math.exp(micro.alpha * F)) < 4 * se
    assert se < 0.02 * math.exp(micro.alpha * F)


def test_stationary_ratio_rejects_large_dt():
    with pytest.raises(ConfigError):
        stationary_ratio(0.0, MicroParams(), dt=10.0, n_steps=100, seed=0)


def test_population_invariants():
    with pytest.raises(ValueError):
        Population(-1, 5)
    pop = Population.from_sentiment(1000, 0.3)
    assert pop.n == 1000 and pop.s == pytest.approx(0.3)


def test_square_wave():
    h = square_wave(0.5, 100.0)
    assert h(0) == 0.5 and h(49.9) == 0.5 and h(50) == -0.5 and h(150) == -0.5


def test_array_h_series_held_per_day():
    micro = MicroParams()
    daily = np.where(np.arange(200) < 100, 0.5, -0.5)
    a = micro_simulate(1000, daily, micro, 1.1, 1.0, n_days=200, seed=8)[1]
    b = micro_simulate(1000, square_wave(0.5, 200.0), micro, 1.1, 1.0, n_days=200,
                       seed=8)[1]
    assert np.array_equal(a, b)


def test_determinism():
    a = sup_deviation(2000, square_wave(), MicroParams(), 1.1, 1.0, n_days=200, seed=9)
    b = sup_deviation(2000, square_wave(), MicroParams(), 1.1, 1.0, n_days=200, seed=9)
    assert a == b


def test_report_and_files(tmp_path):
    report, t, s = check_report(n_agents=2000, n_days=100, sizes=(1000, 4000),
                                replicas=1, seed=1)
    assert report["sup_deviation_ode"] >= 0
    assert report["scaling"]["sizes"] == [1000, 4000]
    write_series(tmp_path / "s.csv", t, s)
    write_report(tmp_path / "r.json", report)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t_days,s_micro" and len(lines) == t.size + 1
    assert json.loads((tmp_path / "r.json").read_text())["n_agents"] == 2000
