"""End-to-end acceptance checks at the stated tolerances.

Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line (visible in ``pytest -v``
output) before asserting.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats as sps

from conftest import SMALL_CLI_RUNS
from cyclesim.cli import main
from cyclesim.cycles import (cycle_histogram, dwell_asymmetry, epsilon_sweep,
                             monotone_within, simulate_output)
from cyclesim.calibration import round_trip
from cyclesim.integrator import SimConfig, simulate_bounded, simulate_full
from cyclesim.micro import check_report
from cyclesim.model import MicroParams, efficient_limit_path
from cyclesim.noise import NoiseConfig, sample_path
from cyclesim.phase import barrier_heights, find_equilibria, sentiment_equilibria


@pytest.fixture
def verdict(capsys):
    def report(n, name, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail
    return report


def test_1_equilibrium_structure(verdict, params):
    t0 = time.perf_counter()
    eqs = find_equilibria(params)
    elapsed = time.perf_counter() - t0
    kinds = [e.classification for e in eqs]
    stable = [e for e in eqs if e.classification == "stable_focus_node"]
    line = max(abs(e.state.z - math.log(params.b + params.tau_y * params.c2
                                         * (e.state.s - params.s_star))) for e in eqs)
    ok = (len(eqs) == 3 and kinds.count("saddle") == 1 and len(stable) == 2
          and min(e.state.s for e in stable) < 0 < max(e.state.s for e in stable)
          and line <= 1e-10 and elapsed < 1.0)
    verdict(1, "equilibrium structure", ok,
            f"kinds={kinds} line_residual={line:.2e} time={elapsed:.3f}s")


def test_2_formulation_equivalence(verdict, params):
    t0 = time.perf_counter()
    n_days = 2500
    sim = SimConfig(n_days=n_days, scheme="heun")
    noise = sample_path(NoiseConfig(seed=2), sim.burn_in_days + n_days)
    full = simulate_full(params, sim, noise)
    bnd = simulate_bounded(params, sim, noise)
    sup = float(np.max(np.abs(bnd.z - (full.p - full.y))))
    elapsed = time.perf_counter() - t0
    verdict(2, "formulation equivalence", sup <= 1e-8 and elapsed < 5.0,
            f"sup|z - (p - y)|={sup:.2e} time={elapsed:.2f}s")


def test_3_micro_macro_oracle(verdict, params):
    t0 = time.perf_counter()
    report, _, _ = check_report(20000, params.beta1, params.beta2, MicroParams(),
                                amplitude=0.5, period_days=100.0, n_days=500, seed=0,
                                sizes=(1000, 10000, 100000), replicas=4)
    elapsed = time.perf_counter() - t0
    sup = report["sup_deviation_ode"]
    expo = report["scaling"]["exponent"]
    ok = sup <= 0.02 and -0.6 <= expo <= -0.4 and elapsed < 60.0
    verdict(3, "micro vs mean-field", ok,
            f"sup_dev={sup:.4f} (bound 0.02; linear-noise peak std "
            f"{report['linear_noise_peak_std']:.4f}) exponent={expo:.3f} "
            f"time={elapsed:.1f}s")


def test_4_cycle_peak(verdict, params):
    t0 = time.perf_counter()
    stats = cycle_histogram(2000, params, seeds=(0, 1, 2), jobs=3)
    elapsed = time.perf_counter() - t0
    modal = [s.modal_bin for s in stats]
    in_range = sum(4.0 <= lo and hi <= 10.0 for lo, hi in modal)
    verdict(4, "business-cycle peak", in_range >= 2 and elapsed < 300.0,
            f"modal bins={modal} in_range={in_range}/3 time={elapsed:.1f}s")


def test_5_growth_and_asymmetry(verdict, params):
    t0 = time.perf_counter()
    grid = [0.01, 0.02, 0.03, 0.04, 0.05]
    points = sorted(epsilon_sweep(grid, 1000, params, seed=0, jobs=5),
                    key=lambda p: p.epsilon)
    lam = {p.epsilon: p.lam for p in points}
    mono = monotone_within(points, n_se=2.0)
    run = simulate_output(params, 1000, seed=0)
    dwell = dwell_asymmetry(run.times, run.y)
    elapsed = time.perf_counter() - t0
    ok = (all(p.error is None for p in points) and lam[0.03] > 0 and mono
          and dwell.expansion_share > dwell.contraction_share and elapsed < 600.0)
    verdict(5, "growth and asymmetry", ok,
            f"lambda={[round(lam[e], 5) for e in grid]} monotone={mono} "
            f"expansion_share={dwell.expansion_share:.3f} time={elapsed:.1f}s")


def test_6_efficient_limit(verdict, params):
    t0 = time.perf_counter()
    checks = []
    for eps in (0.03, 0.08):
        path = efficient_limit_path(1_000_000, eps, params, seed=6)
        inc = path.increments
        se = inc.std(ddof=1) / math.sqrt(inc.size)
        checks.append((eps, path.drift, float(inc.mean()), se,
                       float(sps.skew(inc)), float(sps.kurtosis(inc))))
    elapsed = time.perf_counter() - t0
    ok = elapsed < 10.0
    for eps, drift, mean, se, skew, kurt in checks:
        ok &= abs(mean - drift) <= 3 * se and abs(skew) <= 0.02 and abs(kurt) <= 0.02
    # the canonical parameters give zero theoretical drift
    ok &= checks[0][1] == 0.0 and abs(checks[0][2]) <= 3 * checks[0][3]
    detail = "; ".join(f"eps={e} drift={d:.3e} mean={m:.3e}+-{s:.1e} skew={k:.4f} "
                       f"exkurt={q:.4f}" for e, d, m, s, k, q in checks)
    verdict(6, "efficient-market limit", ok, f"{detail} time={elapsed:.2f}s")


def test_7_pitchfork(verdict):
    t0 = time.perf_counter()
    below = sentiment_equilibria(0.9)
    above = sentiment_equilibria(1.1)
    elapsed = time.perf_counter() - t0
    ok = (len(below) == 1 and below[0][1] and len(above) == 3
          and above[0][1] and above[2][1] and not above[1][1] and elapsed < 1.0)
    verdict(7, "pitchfork", ok,
            f"beta1=0.9: {len(below)} root(s); beta1=1.1: {len(above)} roots, "
            f"stable={[st for _, st in above]} time={elapsed:.3f}s")


def test_8_barrier_monotonicity(verdict, params):
    t0 = time.perf_counter()
    bh = barrier_heights(params, (-0.48, -1.11))
    elapsed = time.perf_counter() - t0
    upper, lower = bh[-0.48], bh[-1.11]
    exp_u, exp_l = upper["expansion"]["h_distance"], lower["expansion"]["h_distance"]
    con_u, con_l = upper["contraction"]["h_distance"], lower["contraction"]["h_distance"]
    ok = exp_l < exp_u and con_u < con_l and elapsed < 30.0
    verdict(8, "barrier monotonicity", ok,
            f"expansion upper={exp_u:.4f}"
            f"{' (window-bounded)' if upper['expansion']['bounded_by_window'] else ''} "
            f"lower={exp_l:.4f}; contraction upper={con_u:.4f} lower={con_l:.4f} "
            f"time={elapsed:.2f}s")


def test_9_calibration_round_trip(verdict):
    t0 = time.perf_counter()
    results = [round_trip(seed, sigma=0.01)[0] for seed in range(20)]
    elapsed = time.perf_counter() - t0
    n_ok = sum(results)
    verdict(9, "calibration round trip", n_ok >= 18 and elapsed < 30.0,
            f"recovered {n_ok}/20 time={elapsed:.2f}s")


def test_10_determinism(verdict, tmp_path):
    differing = []
    for command, args in SMALL_CLI_RUNS.items():
        first, rerun = tmp_path / command / "first", tmp_path / command / "rerun"
        assert main([command, *args, "--out", str(first)]) == 0
        assert main(["replay", str(first / "manifest.json"), "--out", str(rerun)]) == 0
        names = sorted(p.name for p in first.iterdir() if p.name != "manifest.json")
        same = names == sorted(p.name for p in rerun.iterdir()
                               if p.name != "manifest.json") and names
        same = same and all((first / n).read_bytes() == (rerun / n).read_bytes()
                            for n in names)
        if not same:
            differing.append(command)
    verdict(10, "determinism", not differing,
            f"{len(SMALL_CLI_RUNS)} subcommands replayed, differing={differing}")
