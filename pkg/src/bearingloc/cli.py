"""Command-line front end.

    bearingloc estimate --scenario s.json --out DIR (--synthesize | --measurements m.csv)
    bearingloc mc       --scenario s.json --out DIR [--threads N]
    bearingloc control  --scenario s.json --out DIR

Exit codes: 0 ok, 2 bad input, 3 degenerate geometry, 4 too many failed
Monte Carlo trials, 5 fatal error during a closed-loop run.
"""

import argparse
import csv
import hashlib
import json
import logging
import math
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BearingLocError, ConfigError, DegenerateGeometry
from .estimator import localize
from .sensing import MeasurementSet, NoiseModel, measure_all
from .simulator import BatchFailed, EpisodeError, Scenario, monte_carlo, run_episode

log = logging.getLogger("bearingloc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_MC_FAILED = 4
EXIT_RUN_FAILED = 5

SCENARIO_KEYS = {
    "target", "seekers", "sigma_deg", "sample_period_s", "duration_s",
    "gain", "tolerance_m", "trials", "seed", "max_iterations", "name",
}
REQUIRED_KEYS = ("target", "seekers")


def _vec3(value, field):
    try:
        v = [float(x) for x in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected a list of 3 numbers, got {value!r}") from None
    if len(v) != 3 or not all(math.isfinite(x) for x in v):
        raise ConfigError(f"{field}: expected 3 finite numbers, got {value!r}")
    return v


def scenario_from_dict(doc, seed=None):
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object")
    unknown = set(doc) - SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
    for key in REQUIRED_KEYS:
        if key not in doc:
            raise ConfigError(f"missing required key '{key}'")
    seekers = doc["seekers"]
    if not isinstance(seekers, list):
        raise ConfigError("seekers: expected a list of positions")
    seekers = [_vec3(p, f"seekers[{i}]") for i, p in enumerate(seekers)]
    sigma_deg = doc.get("sigma_deg", 1.0)
    try:
        sigma = np.radians(np.asarray(sigma_deg, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(f"sigma_deg: expected a number or list, got {sigma_deg!r}") from None
    if sigma.ndim > 1 or (sigma.ndim == 1 and sigma.size != len(seekers)):
        raise ConfigError(f"sigma_deg: need a scalar or one value per seeker ({len(seekers)})")

    def num(key, default, kind=float):
        value = doc.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        if kind is int and value != int(value):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return kind(value)

    return Scenario(
        target=_vec3(doc["target"], "target"),
        seeker_init=seekers,
        sigma=sigma,
        sample_period=num("sample_period_s", 0.1),
        duration=num("duration_s", 15.0),
        gain=num("gain", 0.002),
        tolerance=num("tolerance_m", 1e-4),
        trials=num("trials", 1000, int),
        seed=num("seed", 0, int) if seed is None else int(seed),
        max_iterations=num("max_iterations", 50, int),
        name=str(doc.get("name", "")),
    )


def load_scenario(path, seed=None):
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc, seed)


def scenario_to_dict(s):
    sigma_deg = np.degrees(s.sigma).tolist()
    if all(x == sigma_deg[0] for x in sigma_deg):
        sigma_deg = sigma_deg[0]
    return {
        "name": s.name,
        "target": s.target.tolist(),
        "seekers": s.seeker_init.tolist(),
        "sigma_deg": sigma_deg,
        "sample_period_s": s.sample_period,
        "duration_s": s.duration,
        "gain": s.gain,
        "tolerance_m": s.tolerance,
        "trials": s.trials,
        "seed": s.seed,
        "max_iterations": s.max_iterations,
    }


def scenario_digest(s):
    canon = json.dumps(scenario_to_dict(s), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def load_measurements(path):
    """Read ``agent,px,py,pz,bx,by,bz`` rows into a MeasurementSet (rows sorted by agent)."""
    cols = ["agent", "px", "py", "pz", "bx", "by", "bz"]
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            missing = [c for c in cols if c not in (reader.fieldnames or [])]
            if missing:
                raise ConfigError(f"measurement file missing column(s): {', '.join(missing)}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                try:
                    rows.append((int(row["agent"]), [float(row[c]) for c in cols[1:]]))
                except (TypeError, ValueError):
                    raise ConfigError(f"measurement file line {lineno}: bad number") from None
    except OSError as exc:
        raise ConfigError(f"cannot read measurements {path}: {exc}") from exc
    agents = [a for a, _ in rows]
    if len(set(agents)) != len(agents):
        raise ConfigError("measurement file lists an agent more than once")
    rows.sort(key=lambda r: r[0])
    data = np.array([v for _, v in rows], dtype=float).reshape(-1, 6)
    return MeasurementSet(data[:, 3:], data[:, :3])


def fmt(x):
    """Shortest round-trip representation."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _estimate_dict(est):
    return {
        "position": est.position.tolist(),
        "covariance": est.covariance.tolist(),
        "iterations": est.iterations,
        "converged": bool(est.converged),
    }


def _manifest(scenario, argv, started):
    return {
        "tool_version": __version__,
        "scenario_digest": scenario_digest(scenario),
        "scenario": scenario_to_dict(scenario),
        "seed": scenario.seed,
        "wall_time_s": time.perf_counter() - started,
        "command_line": shlex.join(["bearingloc", *argv]),
    }


def cmd_estimate(args, argv, started):
    scenario = load_scenario(args.scenario, args.seed)
    if args.synthesize == bool(args.measurements):
        raise ConfigError("estimate needs exactly one of --synthesize or --measurements")
    if args.synthesize:
        rng = np.random.default_rng(np.random.SeedSequence([scenario.seed]))
        meas = measure_all(scenario.seeker_init, scenario.target, scenario.noise, rng)
        model = scenario.noise
    else:
        meas = load_measurements(args.measurements)
        sigma = scenario.sigma
        if sigma.size != meas.n:
            if np.all(sigma == sigma[0]):
                sigma = np.full(meas.n, sigma[0])
            else:
                raise ConfigError(
                    f"sigma_deg has {sigma.size} entries but measurements have {meas.n} agents"
                )
        model = NoiseModel(sigma)
    est = localize(meas, model, scenario.tolerance, scenario.max_iterations)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "estimate.json", _estimate_dict(est))
    _write_json(out / "manifest.json", _manifest(scenario, argv, started))
    log.info("estimate %s after %d iteration(s)", est.position, est.iterations)
    return EXIT_OK


def cmd_mc(args, argv, started):
    scenario = load_scenario(args.scenario, args.seed)
    if scenario.trials < 2:
        raise ConfigError(f"trials must be >= 2 for mc, got {scenario.trials}")
    summary = monte_carlo(scenario, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, res in summary.trials:
        if res is None:
            rows.append([k, "", "", "", "", "false"])
        else:
            e = res.estimate
            rows.append([k, *e.position, e.iterations, e.converged])
    _write_csv(out / "trials.csv", ["trial", "px", "py", "pz", "iterations", "converged"], rows)
    _write_csv(out / "histogram.csv", ["iterations", "count"], summary.iteration_histogram.items())
    _write_json(out / "summary.json", {
        "empirical_mean": summary.empirical_mean.tolist(),
        "empirical_cov": summary.empirical_cov.tolist(),
        "theoretical_cov": summary.theoretical_cov.tolist(),
        "iteration_histogram": {str(k): v for k, v in summary.iteration_histogram.items()},
        "theta_m": summary.theta_m,
        "reward_value": summary.reward_value,
        "condition_number": summary.condition_number,
        "trials": scenario.trials,
        "failed_trials": {str(k): v for k, v in summary.failures.items()},
    })
    _write_json(out / "manifest.json", _manifest(scenario, argv, started))
    return EXIT_OK


TIMESERIES_HEADER = [
    "t", "agent", "px", "py", "pz", "ux", "uy", "uz",
    "reward_est", "reward_true", "cond_number", "est_x", "est_y", "est_z",
]


def cmd_control(args, argv, started):
    scenario = load_scenario(args.scenario, args.seed)
    if not scenario.duration > 0:
        raise ConfigError("duration_s must be positive for control")
    records = run_episode(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for rec in records:
        for i, (p, u) in enumerate(zip(rec.seekers, rec.velocities)):
            rows.append([
                rec.time, i, *p, *u, rec.reward_est, rec.reward_true,
                rec.condition_number, *rec.estimate.position,
            ])
    _write_csv(out / "timeseries.csv", TIMESERIES_HEADER, rows)
    last = records[-1]
    _write_json(out / "final.json", {
        "time": last.time,
        "seekers": last.seekers.tolist(),
        "estimate": _estimate_dict(last.estimate),
        "reward_est": last.reward_est,
        "reward_true": last.reward_true,
        "cond_number": last.condition_number,
        "cond_number_est": last.condition_number_est,
        "samples": len(records),
    })
    _write_json(out / "manifest.json", _manifest(scenario, argv, started))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="bearingloc", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in (("estimate", cmd_estimate), ("mc", cmd_mc), ("control", cmd_control)):
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--threads", type=int, default=1, help="worker cap for mc")
        p.set_defaults(func=func)
        if name == "estimate":
            p.add_argument("--synthesize", action="store_true", help="simulate the measurements")
            p.add_argument("--measurements", help="CSV with agent,px,py,pz,bx,by,bz")
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    started = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, argv, started)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateGeometry as exc:
        print(f"error: degenerate geometry: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except BatchFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MC_FAILED
    except EpisodeError as exc:
        print(f"error: closed-loop run aborted: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED
    except BearingLocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
