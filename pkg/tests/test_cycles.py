import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cyclesim.cycles import (CycleStats, GrowthEstimate, centered_average,
                             cycle_histogram, cycle_stats, detrend, dwell_asymmetry,
                             epsilon_sweep, find_troughs, growth_rate, histogram,
                             ma_gain, monotone_within, read_series_csv,
                             simulate_output, trajectory_growth, window_samples,
                             write_sweep_csv)
from cyclesim.errors import ConfigError
from cyclesim.noise import NoiseConfig

YEAR = 250


def test_window_samples_odd():
    assert window_samples(12) == 3001
    assert window_samples(2) == 501
    assert window_samples(1, samples_per_year=4) == 5


def test_detrend_constant_and_line():
    n = 20 * YEAR
    assert not detrend(np.full(n, 3.7)).any() or np.max(np.abs(detrend(np.full(n, 3.7)))) < 1e-12
    t = np.arange(n, dtype=float)
    r = detrend(0.002 * t + 1.0)
    assert r.size == n - window_samples(12) + 1
    assert np.max(np.abs(r)) <= 1e-10


def test_detrend_sinusoid_gain():
    n = 40 * YEAR
    period = 3 * YEAR
    t = np.arange(n)
    r = detrend(np.sin(2 * np.pi * t / period))
    w = window_samples(12)
    offset = w // 2
    expected = np.sin(2 * np.pi * (t[offset: n - offset]) / period) * (1 - ma_gain(period, w))
    assert np.max(np.abs(r - expected)) < 1e-9


def test_ma_gain_matches_direct_average():
    period, w = 700.0, 501
    x = np.cos(2 * np.pi * np.arange(4000) / period)
    avg = centered_average(x, w)
    k = 1000
    assert avg[k] == pytest.approx(ma_gain(period, w) * x[k + w // 2], abs=1e-12)


def test_detrend_too_short():
    with pytest.raises(ValueError):
        detrend(np.zeros(3001))


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 1000))
def test_detrend_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(4000).cumsum()
    y = rng.standard_normal(4000)
    lhs = detrend(a * x + b * y, window_years=4)
    rhs = a * detrend(x, window_years=4) + b * detrend(y, window_years=4)
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + abs(a) + abs(b)) * 100)


def test_no_troughs_in_monotone_series():
    assert find_troughs(np.linspace(0, 1, 5000)).size == 0
    assert find_troughs(-np.linspace(0, 1, 5000) ** 2).size == 0


def test_sinusoid_troughs_spaced_by_period():
    period = 7 * YEAR
    t = np.arange(60 * YEAR)
    idx = find_troughs(np.sin(2 * np.pi * t / period))
    gaps = np.diff(idx)
    assert gaps.size >= 6
    assert np.all(np.abs(gaps - period) <= 1)


def _wiggly_fixture():
    t = np.arange(60 * YEAR)
    base = np.sin(2 * np.pi * t / (8 * YEAR))
    wiggle = 0.05 * np.sin(2 * np.pi * t / (5 * YEAR))
    return base, base + wiggle


def test_prominence_removes_small_wiggles():
    base, wiggly = _wiggly_fixture()
    # a flat stretch with a small bump carries sub-threshold local minima
    flat = np.concatenate([np.zeros(10 * YEAR),
                           0.02 * np.sin(2 * np.pi * np.arange(10 * YEAR) / (5 * YEAR))])
    x = np.concatenate([wiggly, flat, wiggly])
    strict = find_troughs(x, min_prominence=0.2)
    loose = find_troughs(x, min_prominence=1e-4)
    assert loose.size > strict.size
    assert np.array_equal(find_troughs(base, min_prominence=0.2),
                          find_troughs(base, min_prominence=0.5))


@given(st.integers(0, 10_000))
def test_trough_count_stability(seed):
    _, x = _wiggly_fixture()
    prom = 0.2
    rng = np.random.default_rng(seed)
    pert = rng.uniform(-1, 1, x.size) * prom / 10.5
    a = find_troughs(x, min_prominence=prom)
    b = find_troughs(x + pert, min_prominence=prom)
    assert a.size == b.size
    # the 2-year average damps the perturbation; minima stay put within one sample
    # of the unperturbed positions after smoothing of smooth perturbations
    smooth_pert = prom / 10.5 * np.sin(2 * np.pi * np.arange(x.size) / (50 * YEAR) + seed)
    c = find_troughs(x + smooth_pert, min_prominence=prom)
    assert c.size == a.size


def test_histogram_totals_and_floor():
    lengths = np.array([5.1, 6.0, 7.9, 8.0, 9.5, 13.0])
    edges, counts = histogram(lengths)
    assert edges[0] == 0 and np.all(np.diff(edges) == 2)
    assert counts.sum() == lengths.size
    assert counts[3] == 2 and counts[4] == 2
    e2, c2 = histogram(np.array([]))
    assert c2.sum() == 0


@pytest.fixture(scope="module")
def table_run():
    from cyclesim.model import Params
    return simulate_output(Params(), 600, seed=1)


def test_cycle_stats_on_simulation(table_run):
    stats = cycle_stats(table_run.times, table_run.y, seed=1)
    assert stats.counts.sum() == stats.lengths.size
    assert np.all(stats.lengths >= 4.0)
    assert np.all(stats.lengths > 0)
    lo, hi = stats.modal_bin
    assert hi - lo == 2.0
    d = stats.as_dict()
    assert d["n_cycles"] == stats.lengths.size


def test_zero_noise_has_no_cycles(params):
    [stats] = cycle_histogram(300, params, seeds=(0,),
                              noise_config=NoiseConfig(daily_std=0.0))
    assert stats.lengths.size <= 1


def test_doubled_c2_smoke(params):
    [stats] = cycle_histogram(150, params.replace(c2=2 * params.c2), seeds=(2,))
    assert isinstance(stats, CycleStats)
    assert stats.counts.sum() == stats.lengths.size


def test_cycle_histogram_jobs_deterministic(params):
    a = cycle_histogram(120, params, seeds=(4, 5), jobs=1)
    b = cycle_histogram(120, params, seeds=(4, 5), jobs=2)
    for x, y in zip(a, b):
        assert x.seed == y.seed and np.array_equal(x.lengths, y.lengths)


def test_growth_exact_line():
    t = np.arange(60 * YEAR, dtype=float)
    est = growth_rate(t, 1.5 + 0.0001 * t)
    assert est.lam == pytest.approx(0.0001 * YEAR, rel=1e-10)
    assert est.stderr < 1e-10


def test_growth_window_too_short():
    t = np.arange(10 * YEAR, dtype=float)
    with pytest.raises(ValueError):
        growth_rate(t, t)


def test_growth_recovers_trend_with_oscillation():
    t = np.arange(200 * YEAR, dtype=float)
    lam0 = 0.02
    y = lam0 * t / YEAR + 0.1 * np.sin(2 * np.pi * t / (7.3 * YEAR))
    est = growth_rate(t, y)
    assert abs(est.lam - lam0) <= 3 * est.stderr + 1e-12
    assert est.stderr >= est.stderr_ols


def test_p_and_y_grow_together(table_run):
    ly = trajectory_growth(table_run, "y")
    lp = trajectory_growth(table_run, "p")
    assert abs(ly.lam - lp.lam) <= 2 * math.hypot(ly.stderr, lp.stderr)
    assert ly.lam > 0


def test_sweep_single_point_equals_growth(params):
    [pt] = epsilon_sweep([0.03], 60, params, seed=3)
    direct = trajectory_growth(simulate_output(params, 60, seed=3))
    assert pt.estimate == direct


def test_sweep_reports_failures(params):
    pts = epsilon_sweep([0.01, 0.02], 10, params, seed=0)
    assert all(p.error and "shorter" in p.error for p in pts)
    assert all(math.isnan(p.lam) for p in pts)


def test_sweep_grid_validation(params):
    with pytest.raises(ConfigError):
        epsilon_sweep([0.2], 60, params)


def test_monotone_within():
    mk = lambda lam, se: type("P", (), {"estimate": GrowthEstimate(lam, 1, se, se, 0),  # noqa
                                        "lam": lam, "stderr": se})()
    assert monotone_within([mk(0.01, 1e-3), mk(0.009, 1e-3), mk(0.02, 1e-3)])
    assert not monotone_within([mk(0.02, 1e-4), mk(0.01, 1e-4)])


def test_symmetric_configuration_grows_little(params):
    sym = trajectory_growth(simulate_output(params.replace(epsilon=0.0, s_star=0.0), 500,
                                            seed=11))
    base = trajectory_growth(simulate_output(params, 500, seed=11))
    assert abs(sym.lam) < 0.3 * base.lam


def test_dwell_asymmetry_table(table_run):
    d = dwell_asymmetry(table_run.times, table_run.y)
    assert d.expansion_share > d.contraction_share
    assert d.expansion_share + d.contraction_share == pytest.approx(1.0)
    assert d.mean_expansion_years > d.mean_contraction_years


def test_dwell_symmetric_input():
    t = np.arange(400 * YEAR, dtype=float)
    y = 0.01 * t / YEAR + 0.05 * np.sin(2 * np.pi * t / (6 * YEAR))
    d = dwell_asymmetry(t, y)
    assert d.expansion_share == pytest.approx(0.5, abs=0.01)
    assert d.mean_expansion_years == pytest.approx(3.0, rel=0.02)


def test_dwell_all_expansion():
    t = np.arange(20 * YEAR, dtype=float)
    d = dwell_asymmetry(t, 0.03 * t / YEAR, lam=0.0)
    assert d.expansion_share == 1.0 and d.contraction_share == 0.0


def test_csv_io(tmp_path):
    f = tmp_path / "gdp.csv"
    f.write_text("t_days,y\n0,1.0\n250,2.0\n500,2.5\n")
    t, y = read_series_csv(f)
    assert t.size == 501 and y[125] == pytest.approx(1.5) and y[-1] == 2.5
    bad = tmp_path / "bad.csv"
    bad.write_text("time,y\n0,1\n1,2\n")
    with pytest.raises(ConfigError):
        read_series_csv(bad)
    stats = CycleStats(np.array([1.0, 7.0]), np.array([6.0]), *histogram([6.0]))
    stats.to_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "bin_lo,bin_hi,count"


def test_sweep_csv(tmp_path, params):
    pts = epsilon_sweep([0.03], 60, params, seed=3)
    write_sweep_csv(tmp_path / "s.csv", pts)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "epsilon,lambda,stderr" and lines[1].startswith("0.03,")
