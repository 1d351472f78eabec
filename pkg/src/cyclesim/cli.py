"""Command-line interface.

Settings resolve in three layers: built-in defaults, then ``--config FILE``
(flat ``key = value``), then command-line flags. Every flag ``--some-name``
has the config key ``some_name``.

Each run writes ``manifest.json`` into the output directory before any other
file. The manifest records the fully resolved settings, so
``cyclesim replay OUT/manifest.json --out OTHER`` regenerates the same
outputs byte for byte; only the manifest timestamp differs.

Seeds: the run seed drives the first (or only) noise stream. Extra replicas
use ``derive_seed(seed, i)`` for replica ``i >= 1``, i.e. the ``i``-th child
of ``SeedSequence(seed)``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical
divergence or failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import read_config
from .errors import ConfigError, DivergenceError
from .model import DAYS_PER_YEAR, PARAM_NAMES, Params
from .noise import GAUSSIAN_ID, PRNG_ID, NoiseConfig, derive_seed

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

PARAM_HELP = {
    "tau_h": "information relaxation time [business days]",
    "tau_s": "sentiment relaxation time [business days]",
    "tau_y": "output relaxation time [business days]",
    "beta1": "herding coupling [dimensionless]",
    "beta2": "information-to-sentiment coupling [dimensionless]",
    "k1": "price-feedback gain [business days]",
    "k2": "output-feedback gain [business days]",
    "epsilon": "long-run news drift [dimensionless]",
    "c1": "price response to sentiment changes [dimensionless]",
    "c2": "price response to sentiment level [1/business day]",
    "s_star": "sentiment level of zero price drift [dimensionless]",
    "b": "output/capital ratio scale [dimensionless]",
}

# key: (type, default, help). Types: float, int, str, "floats", "ints", "grid".
OPTIONS = {
    "seed": (int, 0, "run seed [integer >= 0]"),
    "jobs": (int, 1, "worker processes [count]"),
    "years": (float, None, "simulated span after burn-in [years of 250 business days]"),
    "days": (int, None, "simulated span [business days]"),
    "burn_in_days": (int, 5000, "discarded transient [business days]"),
    "scheme": (str, "heun", "integration scheme: heun or euler"),
    "formulation": (str, "full", "state variables: full (h,s,p,y) or bounded (h,s,z)"),
    "substeps_per_day": (int, 8, "integration steps per business day [count]"),
    "daily_std": (float, 0.4, "std of daily-mean news [dimensionless]"),
    "intraday_ar_coeff": (float, 0.5, "AR(1) coefficient between substeps [dimensionless]"),
    "planes": ("floats", "-0.48,-1.0,-1.11", "plane constants C in z - c1*s = C, "
               "comma separated [dimensionless]"),
    "fan_density": (int, 10, "trajectory seeds per window edge [count]"),
    "basin_grid": (int, 0, "basin-map cells per axis, 0 skips the map [count]"),
    "replicas": (int, 1, "independent simulations [count]"),
    "input": (str, None, "CSV with columns t_days,y to analyse instead of simulating"),
    "detrend_years": (float, 12.0, "detrending moving-average window [years]"),
    "smooth_years": (float, 2.0, "trough smoothing window [years]"),
    "min_prominence": (float, None, "trough prominence threshold [log-output units]; "
                       "default 0.25 * std of the smoothed residual"),
    "epsilon_grid": ("grid", "0.01:0.05:0.01", "drift values, 'lo:hi:step' or comma "
                     "list [dimensionless]"),
    "h_csv": (str, None, "CSV with columns date,h (ISO dates)"),
    "price_csv": (str, None, "CSV with columns date,log_price (ISO dates)"),
    "s0": (float, 0.0, "initial sentiment [dimensionless]"),
    "synthetic_trials": (int, 0, "synthetic round-trip trials to run [count]"),
    "n_agents": (int, 20000, "agent population size [count]"),
    "alpha": (float, 2.0, "micro force sensitivity [dimensionless]"),
    "tau_s_micro": (float, 25.0, "mean opinion-flip time [business days]"),
    "amplitude": (float, 0.5, "square-wave information amplitude [dimensionless]"),
    "period_days": (float, 100.0, "square-wave period [business days]"),
    "micro_dt": (float, None, "agent update step [business days]; default 0.05*tau_s_micro"),
    "sizes": ("ints", "1000,10000,100000", "population sizes for the scaling fit [count]"),
    "scaling_replicas": (int, 4, "runs per population size [count]"),
}

NOISE_KEYS = ["substeps_per_day", "daily_std", "intraday_ar_coeff"]
SIM_KEYS = ["seed", "burn_in_days", "scheme"] + NOISE_KEYS

COMMANDS = {
    "simulate": ("integrate the coupled system under random news",
                 list(PARAM_NAMES) + SIM_KEYS + ["years", "formulation"],
                 {"years": 100.0}),
    "equilibria": ("fixed points of the noiseless system and their stability",
                   list(PARAM_NAMES), {}),
    "portrait": ("in-plane phase portraits, separatrices and barrier heights",
                 list(PARAM_NAMES) + ["planes", "fan_density", "basin_grid"], {}),
    "cycles": ("trough-to-trough business-cycle lengths of simulated or supplied output",
               list(PARAM_NAMES) + SIM_KEYS + ["years", "replicas", "jobs", "input",
                                               "detrend_years", "smooth_years",
                                               "min_prominence"],
               {"years": 2000.0}),
    "sweep": ("long-run output growth rate across news drift values",
              list(PARAM_NAMES) + SIM_KEYS + ["years", "epsilon_grid", "jobs"],
              {"years": 1000.0}),
    "calibrate": ("fit the sentiment-to-price map to measured series",
                  ["beta1", "beta2", "tau_s", "seed", "h_csv", "price_csv", "s0",
                   "synthetic_trials"], {}),
    "efficient": ("random-walk price path of the efficient-market limit",
                  list(PARAM_NAMES) + ["seed", "days", "daily_std"], {"days": 100000}),
    "micro-check": ("agent Monte Carlo against the mean-field sentiment equation",
                    ["beta1", "beta2", "seed", "n_agents", "alpha", "tau_s_micro",
                     "amplitude", "period_days", "days", "micro_dt", "sizes",
                     "scaling_replicas"], {"days": 500}),
}


def _option(key):
    if key in PARAM_NAMES:
        return float, getattr(Params(), key), PARAM_HELP[key]
    return OPTIONS[key]


def _parse_grid(text):
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("expected lo:hi:step")
        lo, hi, step = map(float, parts)
        if step <= 0 or hi < lo:
            raise ValueError("need step > 0 and hi >= lo")
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + k * step, 12) for k in range(n)]
    return [float(v) for v in text.split(",") if v.strip()]


def _coerce(key, raw):
    kind = _option(key)[0]
    if raw is None:
        return None
    try:
        if kind == "floats":
            return [float(v) for v in str(raw).split(",") if v.strip()]
        if kind == "ints":
            return [int(v) for v in str(raw).split(",") if v.strip()]
        if kind == "grid":
            return _parse_grid(raw)
        if kind is int:
            f = float(raw)
            if f != int(f):
                raise ValueError("not an integer")
            return int(f)
        return kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})", key=key) from None


def resolve_settings(command, config_values, flag_values):
    """Defaults, then config file, then flags. Unknown config keys are errors
    unless they are model parameters (shared config files carry all of them)."""
    _, keys, overrides = COMMANDS[command]
    settings = {}
    for key in keys:
        default = overrides.get(key, _option(key)[1])
        settings[key] = _coerce(key, default) if isinstance(default, str) and \
            _option(key)[0] in ("floats", "ints", "grid") else default
    if command == "sweep":
        config_values = _epsilon_as_grid(config_values)
        flag_values = _epsilon_as_grid(flag_values)
    for key, raw in config_values.items():
        if key in keys:
            settings[key] = _coerce(key, raw)
        elif key not in PARAM_NAMES:
            raise ConfigError(f"unknown config key {key!r} for '{command}'", key=key)
    for key, raw in flag_values.items():
        if raw is not None:
            settings[key] = _coerce(key, raw)
    _validate(command, settings)
    return settings


def _epsilon_as_grid(values):
    """``sweep --epsilon lo:hi:step`` (or a comma list) means the sweep grid."""
    raw = values.get("epsilon")
    if isinstance(raw, str) and (":" in raw or "," in raw):
        values = dict(values)
        values["epsilon_grid"] = values.pop("epsilon")
    return values


def _validate(command, st):
    if "years" in st and st["years"] is not None and not st["years"] > 0:
        raise ConfigError("years must be > 0", key="years")
    if "days" in st and st["days"] is not None and st["days"] < 1:
        raise ConfigError("days must be >= 1", key="days")
    for key in ("jobs", "replicas", "substeps_per_day"):
        if key in st and st[key] < 1:
            raise ConfigError(f"{key} must be >= 1", key=key)
    if "seed" in st and st["seed"] < 0:
        raise ConfigError("seed must be >= 0", key="seed")
    if "scheme" in st and st["scheme"] not in ("heun", "euler"):
        raise ConfigError("scheme must be heun or euler", key="scheme")
    if "formulation" in st and st["formulation"] not in ("full", "bounded"):
        raise ConfigError("formulation must be full or bounded", key="formulation")
    if command == "calibrate" and st["synthetic_trials"] == 0 and \
            (st["h_csv"] is None or st["price_csv"] is None):
        raise ConfigError("calibrate needs h_csv and price_csv, or synthetic_trials > 0",
                          key="h_csv")
    if command == "portrait" and not st["planes"]:
        raise ConfigError("planes must list at least one C", key="planes")
    # build parameter objects early so bad values surface as config errors
    _params(st)
    if any(k in st for k in NOISE_KEYS):
        _noise(st)


def _params(st):
    return Params.from_mapping({k: st[k] for k in PARAM_NAMES if k in st})


def _noise(st, seed=None):
    base = NoiseConfig()
    return NoiseConfig(daily_std=st.get("daily_std", base.daily_std),
                       substeps_per_day=st.get("substeps_per_day", base.substeps_per_day),
                       intraday_ar_coeff=st.get("intraday_ar_coeff", base.intraday_ar_coeff),
                       seed=st.get("seed", 0) if seed is None else seed)


def replica_seeds(seed, n):
    return [seed] + [derive_seed(seed, i) for i in range(1, n)]


# ---------------------------------------------------------------------------
# Output helpers


def _write_json(path, obj):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _write_rows(path, header, rows):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else repr(float(v)) if
                              isinstance(v, (float, np.floating)) else str(v)
                              for v in row) + "\n")


def write_manifest(out_dir, command, settings, config_path):
    manifest = {
        "subcommand": command,
        "config_path": None if config_path is None else str(config_path),
        "settings": settings,
        "seeds": _manifest_seeds(command, settings),
        "out_dir": str(out_dir),
        "tool_version": __version__,
        "prng": PRNG_ID,
        "gaussian": GAUSSIAN_ID,
        "seed_rule": "replica 0 uses seed; replica i >= 1 uses SeedSequence(seed, "
                     "spawn_key=(i,))",
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    _write_json(Path(out_dir) / "manifest.json", manifest)
    return manifest


def _manifest_seeds(command, st):
    if "seed" not in st:
        return []
    return replica_seeds(st["seed"], st.get("replicas", 1))


# ---------------------------------------------------------------------------
# Subcommands; each takes resolved settings and an existing output directory.


def run_simulate(st, out):
    from .integrator import SimConfig, simulate_bounded, simulate_full
    from .noise import sample_path

    params = _params(st)
    ncfg = _noise(st)
    n_days = int(round(st["years"] * DAYS_PER_YEAR))
    if n_days < 1:
        raise ConfigError("years too small for one business day", key="years")
    sim = SimConfig(dt=ncfg.dt, n_days=n_days, scheme=st["scheme"],
                    burn_in_days=st["burn_in_days"])
    noise = sample_path(ncfg, sim.burn_in_days + n_days)
    run = simulate_full if st["formulation"] == "full" else simulate_bounded
    traj = run(params, sim, noise)
    traj.to_csv(out / "trajectory.csv")
    traj.write_sidecar(out / "trajectory.json")


def run_equilibria(st, out):
    from .phase import find_equilibria

    eqs = find_equilibria(_params(st))
    _write_json(out / "equilibria.json", {
        "params": _params(st).as_dict(),
        "equilibria": [e.as_dict() for e in eqs],
    })


def run_portrait(st, out):
    from .phase import basin_map, phase_portrait, plane_for_params

    params = _params(st)
    summary = []
    for i, C in enumerate(st["planes"]):
        plane = plane_for_params(C, params)
        pp = phase_portrait(params, plane, fan_density=st["fan_density"])
        rows = [(k, float(a), float(b)) for k, tr in enumerate(pp.trajectories)
                for a, b in tr]
        _write_rows(out / f"portrait_{i}.csv", "traj_id,s_prime,h", rows)
        _write_rows(out / f"separatrix_{i}.csv", "s_prime,h",
                    zip(pp.separatrix.s_prime, pp.separatrix.h))
        entry = {"C": C, "window": list(pp.window), "barriers": pp.barriers,
                 "attractors": [{"s": a.s, "h": a.h, "s_prime":
                                 float(plane.s_prime_of_plane_s(a.s))}
                                for a in pp.attractors],
                 "saddle": {"s": pp.separatrix.saddle.s, "h": pp.separatrix.saddle.h},
                 "max_out_of_plane_drift": max(pp.out_of_plane_drift),
                 "meta": pp.meta}
        if st["basin_grid"] > 0:
            S, H, labels = basin_map(params, plane, n=st["basin_grid"], window=pp.window)
            _write_rows(out / f"basin_{i}.csv", "s_prime,h,label",
                        zip(plane.s_prime_of_plane_s(S.ravel()), H.ravel(),
                            labels.ravel().tolist()))
        summary.append(entry)
    _write_json(out / "portrait.json", {"planes": summary})


def run_cycles(st, out):
    from .cycles import cycle_histogram, cycle_stats, histogram, read_series_csv

    cycle_kw = {"detrend_years": st["detrend_years"],
                "smooth_window_years": st["smooth_years"],
                "min_prominence": st["min_prominence"]}
    if st["input"]:
        t, y = read_series_csv(st["input"])
        stats = [cycle_stats(t, y, **cycle_kw)]
    else:
        seeds = replica_seeds(st["seed"], st["replicas"])
        stats = cycle_histogram(st["years"], _params(st), seeds, _noise(st),
                                jobs=st["jobs"],
                                sim_kw={"scheme": st["scheme"],
                                        "burn_in_days": st["burn_in_days"]},
                                cycle_kw=cycle_kw)
    lengths = np.concatenate([s.lengths for s in stats])
    edges, counts = histogram(lengths)
    _write_rows(out / "histogram.csv", "bin_lo,bin_hi,count",
                [(f"{lo:g}", f"{hi:g}", int(c))
                 for lo, hi, c in zip(edges[:-1], edges[1:], counts)])
    modal = None
    if counts.sum():
        k = int(np.argmax(counts))
        modal = [float(edges[k]), float(edges[k + 1])]
    _write_json(out / "cycles.json", {"modal_bin": modal, "n_cycles": int(lengths.size),
                                      "replicas": [s.as_dict() for s in stats]})
    print(f"modal bin: {modal} years ({lengths.size} cycles)")


def run_sweep(st, out):
    from .cycles import epsilon_sweep, monotone_within, write_sweep_csv

    points = epsilon_sweep(st["epsilon_grid"], st["years"], _params(st), st["seed"],
                           _noise(st), jobs=st["jobs"],
                           sim_kw={"scheme": st["scheme"],
                                   "burn_in_days": st["burn_in_days"]})
    points = sorted(points, key=lambda p: p.epsilon)
    write_sweep_csv(out / "sweep.csv", points)
    _write_json(out / "sweep.json", {
        "seed_policy": "common random numbers: every point uses the run seed",
        "points": [{"epsilon": p.epsilon,
                    "estimate": None if p.estimate is None else p.estimate.as_dict(),
                    "error": p.error} for p in points],
        "nondecreasing_within_2se": monotone_within(points),
    })
    failed = [p for p in points if p.error]
    if failed and len(failed) == len(points):
        raise DivergenceError("every sweep point failed: " + failed[0].error)


def run_calibrate(st, out):
    from .calibration import (calibrate_files, replication_report, round_trip,
                              write_replication_csv)

    result = {}
    if st["h_csv"] and st["price_csv"]:
        dates, fit, s, p_model, p_target = calibrate_files(
            st["h_csv"], st["price_csv"], st["beta1"], st["beta2"], st["tau_s"], st["s0"])
        write_replication_csv(out / "replication.csv", dates, p_model, p_target)
        result["fit"] = replication_report(fit, s, p_target)
    if st["synthetic_trials"]:
        seeds = replica_seeds(st["seed"], st["synthetic_trials"])
        trials = []
        for sd in seeds:
            ok, fit, truth = round_trip(sd)
            trials.append({"seed": sd, "recovered": ok, "fit": fit.as_dict()})
        result["round_trip"] = {"truth": truth, "trials": trials,
                                "n_recovered": sum(t["recovered"] for t in trials)}
    _write_json(out / "fit.json", result)


def run_efficient(st, out):
    from scipy import stats as sps

    from .model import efficient_limit_path

    params = _params(st)
    path = efficient_limit_path(st["days"], params.epsilon, params, st["seed"],
                                st["daily_std"])
    inc = path.increments
    se = float(inc.std(ddof=1) / np.sqrt(inc.size)) if inc.size > 1 else float("nan")
    _write_rows(out / "efficient.csv", "t_days,p,increment",
                zip(path.t_days, path.p, inc))
    _write_json(out / "efficient.json", {
        "drift_theory": path.drift, "drift_estimate": float(inc.mean()),
        "drift_stderr": se, "skewness": float(sps.skew(inc)),
        "excess_kurtosis": float(sps.kurtosis(inc)), "meta": path.meta,
    })


def run_micro_check(st, out):
    from .micro import check_report, write_report, write_series
    from .model import MicroParams

    micro = MicroParams(alpha=st["alpha"], tau_s_micro=st["tau_s_micro"],
                        n_agents=st["n_agents"])
    report, t, s = check_report(st["n_agents"], st["beta1"], st["beta2"], micro,
                                st["amplitude"], st["period_days"], st["days"],
                                st["micro_dt"], st["seed"], tuple(st["sizes"]),
                                st["scaling_replicas"])
    write_series(out / "micro_series.csv", t, s)
    write_report(out / "micro_report.json", report)


RUNNERS = {
    "simulate": run_simulate, "equilibria": run_equilibria, "portrait": run_portrait,
    "cycles": run_cycles, "sweep": run_sweep, "calibrate": run_calibrate,
    "efficient": run_efficient, "micro-check": run_micro_check,
}


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cyclesim",
        description="Simulate and analyse coupled market-sentiment and output dynamics. "
                    "Time unit: business day (250 per year).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (desc, keys, overrides) in COMMANDS.items():
        p = sub.add_parser(name, help=desc, description=desc)
        p.add_argument("--config", help="flat key = value settings file; flags override it")
        p.add_argument("--out", default="out", help="output directory (created if missing)")
        for key in keys:
            kind, default, text = _option(key)
            default = overrides.get(key, default)
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                           metavar=key.upper(), help=f"{text} (default: {default})")
    rp = sub.add_parser("replay", help="rerun from a manifest",
                        description="Rerun a previous run from its manifest.json.")
    rp.add_argument("manifest", help="path to manifest.json")
    rp.add_argument("--out", required=True, help="output directory for the rerun")
    return parser


def _load_replay(path):
    with open(path, encoding="utf-8") as fh:
        m = json.load(fh)
    command = m.get("subcommand")
    if command not in RUNNERS:
        raise ConfigError(f"{path}: unknown subcommand {command!r}", key="subcommand")
    return command, m.get("settings", {}), m.get("config_path")


def execute(command, settings, out_dir, config_path=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, command, settings, config_path)
    RUNNERS[command](settings, out)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            command, saved, config_path = _load_replay(args.manifest)
            settings = resolve_settings(command, {}, {k: _replay_value(v)
                                                       for k, v in saved.items()})
        else:
            command = args.command
            config = read_config(args.config) if args.config else {}
            flags = {k: getattr(args, k) for k in COMMANDS[command][1]}
            settings = resolve_settings(command, config, flags)
            config_path = args.config
        execute(command, settings, args.out, config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _replay_value(v):
    if isinstance(v, list):
        return ",".join(repr(x) for x in v)
    return v


if __name__ == "__main__":
    sys.exit(main())
