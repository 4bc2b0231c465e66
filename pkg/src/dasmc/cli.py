"""Command-line interface.

Subcommands: ``run`` (one SMC run from a JSON config), ``simstudy`` (the
regression comparison), and ``arfima`` (the Whittle comparison). Exit
codes: 0 on success, 2 on configuration errors, 3 on a degenerate run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments
from .errors import ConfigError, DegeneratePopulationError, SingularCovarianceError
from .models import ArfimaModel, CostAccount, RegressionModel
from .smc import RunConfig, run_smc

THREADS_ENV = "DASMC_THREADS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3


def _default_threads():
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={value!r} is not an integer")
    return 1


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")


def _build_model(spec, wall_clock):
    spec = dict(spec or {})
    kind = spec.pop("kind", "regression")
    costs = CostAccount(
        cost_full=spec.pop("cost_full", 1.0),
        cost_surrogate=spec.pop("cost_surrogate", 0.01),
        wall_mode=wall_clock,
    )
    if kind == "regression":
        data = spec.pop("data", None)
        if data is not None:
            x, y = experiments.load_regression_csv(data)
            return RegressionModel(x, y, costs=costs, **spec)
        sim = spec.pop("simulate", {})
        return RegressionModel.simulate(sim.pop("seed", 0), costs=costs, **sim, **spec)
    if kind == "arfima":
        data = spec.pop("data", None)
        if data is not None:
            series = experiments.load_series(data)
            return ArfimaModel(series, costs=costs, **spec)
        sim = spec.pop("simulate", {})
        return ArfimaModel.simulate(sim.pop("seed", 0), costs=costs, **sim, **spec)
    raise ConfigError(f"unknown model kind {kind!r}")


def _cmd_run(args):
    payload = _load_config(args.config)
    run_spec = dict(payload.get("run", {}))
    model_spec = payload.get("model", {"kind": "regression", "simulate": {"seed": 0}})
    if args.seed is not None:
        run_spec["seed"] = args.seed
    run_spec["threads"] = args.threads
    run_spec["wall_clock"] = args.wall_clock
    init = run_spec.pop("init_particles", None)
    try:
        config = RunConfig(**run_spec)
    except TypeError as exc:
        raise ConfigError(str(exc))
    model = _build_model(model_spec, args.wall_clock)
    init_locations = experiments.load_particles(init) if init else None
    result = run_smc(config, model, init_locations=init_locations)
    truth = getattr(model, "true_params", None)
    result.metrics = experiments.compute_metrics(result, truth, model.costs.rho)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "result.json"), "w") as fh:
        json.dump(result.to_dict(), fh, indent=2)
    experiments.save_particles(
        os.path.join(out_dir, "particles.csv"), result.final_locations
    )
    natural = np.asarray(result.final_natural)
    experiments.save_particles(
        os.path.join(out_dir, "particles_natural.csv"), natural, column_prefix="param"
    )
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump({"run": config.to_dict(), "model": payload.get("model")}, fh, indent=2)
    print(json.dumps(result.metrics, indent=2))
    return EXIT_OK


def _cmd_simstudy(args):
    payload = _load_config(args.config)
    if args.seed is not None:
        payload["seed"] = args.seed
    payload["threads"] = args.threads
    for key in ("likelihoods", "rhos", "algorithms", "grid"):
        if key in payload:
            payload[key] = tuple(payload[key])
    try:
        config = experiments.StudyConfig(**payload)
    except TypeError as exc:
        raise ConfigError(str(exc))
    out_dir = args.out or "simstudy_out"
    _, summary = experiments.run_simulation_study(config, out_dir)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cmd_arfima(args):
    payload = _load_config(args.config)
    if args.seed is not None:
        payload["seed"] = args.seed
    payload["threads"] = args.threads
    for key in ("ar", "ma", "grid", "surrogate_terminals"):
        if key in payload:
            payload[key] = tuple(payload[key])
    try:
        config = experiments.ArfimaExperimentConfig(**payload)
    except TypeError as exc:
        raise ConfigError(str(exc))
    out_dir = args.out or "arfima_out"
    _, summary = experiments.run_arfima_experiment(config, out_dir)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dasmc",
        description="Delayed-acceptance SMC with surrogate calibration",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", _cmd_run), ("simstudy", _cmd_simstudy),
                     ("arfima", _cmd_arfima)):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--wall-clock", action="store_true", dest="wall_clock")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is None:
            args.threads = _default_threads()
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegeneratePopulationError, SingularCovarianceError) as exc:
        print(f"degenerate run: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except RuntimeError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
