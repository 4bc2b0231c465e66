"""Experiment drivers and result serialisation.

Two studies: the artificial-delay regression comparison across SMC
algorithm variants, and the ARFIMA comparison where the Whittle
approximation screens an O(n^2) exact Gaussian likelihood. Results are
emitted as long-format CSV plus a relative-efficiency summary against
the plain MH baseline on paired seeds.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .models import ArfimaModel, CostAccount, RegressionModel
from .rng import _tag_value
from .smc import PAPER_GRID, RunConfig, RunResult, run_smc

CSV_COLUMNS = (
    "algorithm", "method", "likelihood", "rho", "replicate", "seed", "se", "sle",
    "virtual_time", "wall_time_s", "full_evals", "surrogate_evals", "iterations",
    "log_evidence",
)


def compute_metrics(result: RunResult, truth, rho) -> dict:
    """Accuracy and cost metrics for one run; SE fields null without truth."""
    sle = result.full_evals + result.surrogate_evals / rho
    out = {
        "se": None,
        "sle": sle,
        "virtual_time": result.virtual_time,
        "wall_time_s": result.wall_time_s,
        "full_evals": result.full_evals,
        "surrogate_evals": result.surrogate_evals,
        "iterations": len(result.iterations),
        "log_evidence": result.log_evidence,
        "se_sle": None,
        "se_time": None,
    }
    if truth is not None:
        se = float(np.sum((np.asarray(result.posterior_mean) - np.asarray(truth)) ** 2))
        out["se"] = se
        out["se_sle"] = se * sle
        out["se_time"] = se * result.virtual_time
    return out


# ---------------------------------------------------------------------------
# file formats


def save_particles(path, locations, column_prefix="theta"):
    """Particle locations as CSV with full float precision (lossless)."""
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{column_prefix}_{j}" for j in range(locations.shape[1])])
        for row in locations:
            writer.writerow([repr(float(v)) for v in row])


def load_particles(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    return np.asarray(rows, dtype=float)


def save_series(path, series):
    np.savetxt(path, np.asarray(series, dtype=float), fmt="%.17g")


def load_series(path):
    return np.loadtxt(path, dtype=float, ndmin=1)


def load_regression_csv(path):
    """Regression data with header y, x1..xp; returns (x, y)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if not header or header[0].strip().lower() != "y":
        raise ValueError("regression CSV must start with a 'y' column")
    return data[:, 1:], data[:, 0]


def write_rows_csv(path, rows, columns=CSV_COLUMNS):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([
                "" if row.get(c) is None else repr(row[c]) if isinstance(row[c], float)
                else row[c]
                for c in columns
            ])


def read_rows_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, value in raw.items():
                if value == "" or value is None:
                    row[key] = None
                else:
                    try:
                        row[key] = int(value)
                    except ValueError:
                        try:
                            row[key] = float(value)
                        except ValueError:
                            row[key] = value
            rows.append(row)
        return rows


def _dump_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=str)


def _replicate_seed(master, *tags):
    # stable across processes and independent of iteration order
    out = int(master) & 0xFFFFFFFF
    for tag in tags:
        out = (out * 1000003 + _tag_value(tag) % 1000033 + 17) & 0xFFFFFFFF
    return out


# ---------------------------------------------------------------------------
# regression simulation study


@dataclass
class StudyConfig:
    likelihoods: tuple = ("normal", "student")
    rhos: tuple = (100.0,)
    algorithms: tuple = ("mh", "sfa", "da", "da+t", "da+t+sfa")
    method: str = "median"
    baseline: str = "mh"
    n_particles: int = 500
    replicates: int = 10
    seed: int = 1
    n_obs: int = 100
    dim: int = 5
    lam: float = 0.1
    bypass: float = 0.05
    grid: tuple = PAPER_GRID
    max_cycles: int = 100
    threads: int = 1
    include_fixed: bool = False

    def run_config(self, algorithm, seed, rho, **overrides):
        return RunConfig(
            algorithm=algorithm,
            method=self.method,
            n_particles=self.n_particles,
            seed=seed,
            grid=self.grid,
            lam=self.lam,
            bypass=self.bypass,
            max_cycles=self.max_cycles,
            threads=self.threads,
            **overrides,
        )


def _fixed_steps(grid, h_mean):
    grid = sorted(grid)
    smaller = [h for h in grid if h <= h_mean]
    larger = [h for h in grid if h > h_mean]
    h_minus = smaller[-1] if smaller else grid[0]
    h_plus = larger[0] if larger else grid[-1]
    return h_minus, h_plus


def run_simulation_study(config: StudyConfig, out_dir=None):
    """Paired-seed comparison of SMC variants on the regression models.

    Every (likelihood, rho, replicate) cell shares one simulated dataset and
    one run seed across algorithms. Returns (rows, summary); when ``out_dir``
    is given, writes results.csv, summary.csv, and the resolved config.
    """
    rows = []
    for likelihood in config.likelihoods:
        for rho in config.rhos:
            for rep in range(config.replicates):
                seed = _replicate_seed(config.seed, likelihood, rho, rep)
                algorithms = list(config.algorithms)
                h_mean = None
                for algorithm in algorithms:
                    result, model = _run_study_cell(config, likelihood, rho, seed,
                                                    algorithm)
                    rows.append(_study_row(config, likelihood, rho, rep, seed,
                                           algorithm, result, model))
                    if algorithm == "mh":
                        h_mean = float(np.mean(
                            [it["selected_step"] for it in result.iterations]
                        ))
                if config.include_fixed and h_mean is not None:
                    h_minus, h_plus = _fixed_steps(config.grid, h_mean)
                    for tag, h in (("mh-fixed-", h_minus), ("mh-fixed+", h_plus)):
                        result, model = _run_study_cell(
                            config, likelihood, rho, seed, "mh-fixed", fixed_step=h
                        )
                        rows.append(_study_row(config, likelihood, rho, rep, seed,
                                               tag, result, model))
    summary = summarize_relative_efficiency(rows, baseline=config.baseline)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_rows_csv(os.path.join(out_dir, "results.csv"), rows)
        _write_summary_csv(os.path.join(out_dir, "summary.csv"), summary)
        _dump_json(os.path.join(out_dir, "config.json"), config.__dict__)
    return rows, summary


def _run_study_cell(config, likelihood, rho, seed, algorithm, **overrides):
    model = RegressionModel.simulate(
        seed, likelihood=likelihood, n=config.n_obs, dim=config.dim,
        costs=CostAccount(cost_full=1.0, cost_surrogate=1.0 / rho),
    )
    run_cfg = config.run_config(algorithm, seed, rho, **overrides)
    try:
        result = run_smc(run_cfg, model)
    except Exception as exc:                        # cell failure is recorded, not fatal
        return exc, model
    result.metrics = compute_metrics(result, model.true_params, rho)
    return result, model


def _study_row(config, likelihood, rho, rep, seed, algorithm, result, model):
    row = {
        "algorithm": algorithm,
        "method": config.method,
        "likelihood": likelihood,
        "rho": float(rho),
        "replicate": rep,
        "seed": seed,
    }
    if isinstance(result, Exception):
        row.update({c: None for c in CSV_COLUMNS if c not in row})
        row["error"] = repr(result)
        return row
    m = result.metrics
    row.update({
        "se": m["se"], "sle": m["sle"], "virtual_time": m["virtual_time"],
        "wall_time_s": m["wall_time_s"], "full_evals": m["full_evals"],
        "surrogate_evals": m["surrogate_evals"], "iterations": m["iterations"],
        "log_evidence": m["log_evidence"],
    })
    return row


def relative_efficiency(baseline_value, value):
    if baseline_value is None or value is None or value == 0:
        return None
    return baseline_value / value


def summarize_relative_efficiency(rows, baseline="mh",
                                  metrics=("se_sle", "se_time")):
    """Median and 10th/90th quantiles of paired relative efficiency.

    Efficiency of an algorithm on a replicate is the baseline's metric over
    the algorithm's metric for the same (likelihood, rho, replicate) cell;
    values above one favour the algorithm. ``se_time`` uses virtual time.
    """
    def metric_value(row, metric):
        if row.get("se") is None:
            return None
        if metric == "se_sle":
            return row["se"] * row["sle"]
        return row["se"] * row["virtual_time"]

    cells = {}
    for row in rows:
        key = (row["likelihood"], row["rho"], row["replicate"])
        cells.setdefault(key, {})[row["algorithm"]] = row
    algorithms = sorted({row["algorithm"] for row in rows if row["algorithm"] != baseline})
    summary = []
    for likelihood in sorted({k[0] for k in cells}):
        for rho in sorted({k[1] for k in cells if k[0] == likelihood}):
            for algorithm in algorithms:
                entry = {"likelihood": likelihood, "rho": rho, "algorithm": algorithm}
                for metric in metrics:
                    ratios = []
                    for key, per_alg in cells.items():
                        if key[0] != likelihood or key[1] != rho:
                            continue
                        if baseline not in per_alg or algorithm not in per_alg:
                            continue
                        ratio = relative_efficiency(
                            metric_value(per_alg[baseline], metric),
                            metric_value(per_alg[algorithm], metric),
                        )
                        if ratio is not None:
                            ratios.append(ratio)
                    if ratios:
                        entry[f"{metric}_median"] = float(np.median(ratios))
                        entry[f"{metric}_q10"] = float(np.quantile(ratios, 0.10))
                        entry[f"{metric}_q90"] = float(np.quantile(ratios, 0.90))
                    else:
                        entry[f"{metric}_median"] = None
                        entry[f"{metric}_q10"] = None
                        entry[f"{metric}_q90"] = None
                summary.append(entry)
    return summary


def _write_summary_csv(path, summary):
    if not summary:
        return
    columns = list(summary[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for entry in summary:
            writer.writerow([
                "" if entry[c] is None else repr(entry[c]) if isinstance(entry[c], float)
                else entry[c]
                for c in columns
            ])


# ---------------------------------------------------------------------------
# ARFIMA experiment


ARFIMA_PARAM_NAMES = ("phi1", "phi2", "theta1", "d", "sigma2")


@dataclass
class ArfimaExperimentConfig:
    length: int = 2048
    n_particles: int = 1000
    replicates: int = 3
    seed: int = 1
    ar: tuple = (0.45, 0.1)
    ma: tuple = (-0.4,)
    d_frac: float = 0.4
    sigma2: float = 1.0
    lam: float = 0.01
    d_threshold: float = 3.0
    rho: float = 10 ** 2.75
    method: str = "median"
    grid: tuple = PAPER_GRID
    max_cycles: int = 100
    threads: int = 1
    surrogate_terminals: tuple = (0.01, 1.0)
    handoff_terminal: float = 0.01

    def base_run_config(self, algorithm, seed, **overrides):
        return RunConfig(
            algorithm=algorithm,
            method=self.method,
            n_particles=self.n_particles,
            seed=seed,
            grid=self.grid,
            d=self.d_threshold,
            lam=self.lam,
            max_cycles=self.max_cycles,
            threads=self.threads,
            mode_demeaned_cov=True,
            cal_shift=False,
            **overrides,
        )


def run_arfima_experiment(config: ArfimaExperimentConfig, out_dir=None):
    """MH-SMC, DA+T+SFA, and surrogate-only runs on simulated ARFIMA data.

    The surrogate-only run annealed to the handoff terminal writes its
    particles to CSV; the DA+T+SFA run reads them back as its initial
    population (its initial distribution is the correspondingly tempered
    surrogate posterior). The surrogate is calibrated without a shift and
    the proposal covariance is mode-demeaned.
    """
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    rows = []
    truth = np.concatenate([config.ar, config.ma, [config.d_frac, config.sigma2]])

    def fresh_model(seed):
        return ArfimaModel.simulate(
            seed, n=config.length, ar=config.ar, ma=config.ma, d=config.d_frac,
            sigma2=config.sigma2,
            costs=CostAccount(cost_full=1.0, cost_surrogate=1.0 / config.rho),
        )

    for rep in range(config.replicates):
        seed = _replicate_seed(config.seed, "arfima", rep)
        handoff_particles = None
        for terminal in config.surrogate_terminals:
            model = fresh_model(seed)
            cfg = config.base_run_config("surrogate-only", seed,
                                         surrogate_terminal=terminal)
            result = run_smc(cfg, model)
            result.metrics = compute_metrics(result, truth, config.rho)
            label = f"surrogate-only-{terminal:g}"
            rows.append(_arfima_row(config, rep, seed, label, result))
            if out_dir is not None:
                _write_arfima_outputs(out_dir, rep, label, model, result)
            if terminal == config.handoff_terminal:
                if out_dir is not None:
                    handoff_path = os.path.join(
                        out_dir, f"rep{rep}_handoff_particles.csv"
                    )
                    save_particles(handoff_path, result.final_locations)
                    handoff_particles = load_particles(handoff_path)
                else:
                    handoff_particles = result.final_locations.copy()

        model = fresh_model(seed)
        result = run_smc(config.base_run_config("mh", seed), model)
        result.metrics = compute_metrics(result, truth, config.rho)
        rows.append(_arfima_row(config, rep, seed, "mh", result))
        if out_dir is not None:
            _write_arfima_outputs(out_dir, rep, "mh", model, result)

        model = fresh_model(seed)
        cfg = config.base_run_config(
            "da+t+sfa", seed, init_surrogate_power=config.handoff_terminal
        )
        result = run_smc(cfg, model, init_locations=handoff_particles)
        result.metrics = compute_metrics(result, truth, config.rho)
        rows.append(_arfima_row(config, rep, seed, "da+t+sfa", result))
        if out_dir is not None:
            _write_arfima_outputs(out_dir, rep, "da+t+sfa", model, result)

    summary = _arfima_summary(rows)
    if out_dir is not None:
        write_rows_csv(os.path.join(out_dir, "results.csv"), rows)
        _dump_json(os.path.join(out_dir, "summary.json"), summary)
        _dump_json(os.path.join(out_dir, "config.json"), config.__dict__)
    return rows, summary


def _arfima_row(config, rep, seed, algorithm, result):
    m = result.metrics
    return {
        "algorithm": algorithm,
        "method": config.method,
        "likelihood": "arfima",
        "rho": float(config.rho),
        "replicate": rep,
        "seed": seed,
        "se": m["se"],
        "sle": m["sle"],
        "virtual_time": m["virtual_time"],
        "wall_time_s": m["wall_time_s"],
        "full_evals": m["full_evals"],
        "surrogate_evals": m["surrogate_evals"],
        "iterations": m["iterations"],
        "log_evidence": m["log_evidence"],
    }


def _write_arfima_outputs(out_dir, rep, label, model, result):
    natural = result.final_natural
    for j, name in enumerate(ARFIMA_PARAM_NAMES[: natural.shape[1]]):
        path = os.path.join(out_dir, f"rep{rep}_{label}_{name}.csv")
        save_particles(path, natural[:, j][:, None], column_prefix=name)


def _arfima_summary(rows):
    by_rep = {}
    for row in rows:
        by_rep.setdefault(row["replicate"], {})[row["algorithm"]] = row
    eval_ratios = []
    time_ratios = []
    for per_alg in by_rep.values():
        if "mh" in per_alg and "da+t+sfa" in per_alg:
            da = per_alg["da+t+sfa"]
            mh = per_alg["mh"]
            if da["full_evals"]:
                eval_ratios.append(mh["full_evals"] / da["full_evals"])
            if da["virtual_time"]:
                time_ratios.append(mh["virtual_time"] / da["virtual_time"])
    return {
        "full_eval_ratio_mh_over_da": eval_ratios,
        "full_eval_ratio_median": float(np.median(eval_ratios)) if eval_ratios else None,
        "virtual_time_ratio_mh_over_da": time_ratios,
        "virtual_time_ratio_median": float(np.median(time_ratios)) if time_ratios else None,
    }
