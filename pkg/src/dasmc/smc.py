"""Adaptive resample-move SMC with tuned MH or delayed-acceptance mutation.

One iteration: pick the next temperature by bisecting the ESS, reweight,
resample, estimate the proposal covariance from the weighted particles,
calibrate the surrogate (delayed acceptance with tuning enabled), run a
pilot mutation cycle across a step-size grid, select the cost-minimal
step size, then keep cycling the kernel until the empirical
diversification criterion is met.

Every random draw comes from a substream keyed by (seed, purpose,
iteration[, particle]), so runs are bit-identical across thread counts.
"""

from __future__ import annotations

import hashlib
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics, particles
from .calibration import Calibration, CalibrationConfig, apply_weights, calibrate
from .errors import ConfigError, SingularCovarianceError
from .kernels import mutate_adaptive
from .paths import surrogate_first, surrogate_tempering, tempering
from .rng import substream
from .tuning import (
    CycleRecords,
    DiversificationConfig,
    TuningGrid,
    allocate_pilot,
    conditional_esjd,
    estimate_likelihood_costs,
    k_star_bootstrap,
    k_star_gamma,
    k_star_median,
    one_move_k,
    overall_alpha,
    predict_overall_alpha,
    select_phi,
)

PAPER_GRID = (0.1, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.25)

ALGORITHMS = (
    "mh", "mh-fixed", "sfa", "da", "da+t", "da+sfa", "da+t+sfa", "surrogate-only",
)


@dataclass
class RunConfig:
    algorithm: str = "mh"
    method: str = "median"
    n_particles: int = 2000
    seed: int = 0
    grid: tuple = PAPER_GRID
    d: object = "chi2:0.8"
    p_min: float = 0.5
    lam: float = 0.1
    bypass: float = 0.05
    target_ess_fraction: float = 0.5
    max_cycles: int = 100
    n_strata: int = 10
    fixed_step: float | None = None
    surrogate_terminal: float = 1.0
    mode_demeaned_cov: bool = False
    cal_shift: bool = True
    cal_weights: bool = True
    folds: int = 5
    n_boot: int = 2000
    threads: int = 1
    wall_clock: bool = False
    init_surrogate_power: float = 0.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.method not in ("median", "gamma", "bootstrap", "one-move"):
            raise ConfigError(f"unknown tuning method {self.method!r}")
        if self.algorithm == "mh-fixed" and self.fixed_step is None:
            raise ConfigError("mh-fixed needs an explicit fixed_step")
        if self.n_particles < 2:
            raise ConfigError("need at least two particles")
        if not 0.0 < self.target_ess_fraction < 1.0:
            raise ConfigError("target_ess_fraction must lie in (0, 1)")

    @property
    def uses_da(self):
        return self.algorithm in ("da", "da+t", "da+sfa", "da+t+sfa")

    @property
    def uses_calibration(self):
        return "+t" in self.algorithm

    @property
    def uses_sfa(self):
        return self.algorithm.endswith("sfa")

    def effective_grid(self):
        if self.algorithm == "mh-fixed":
            return (float(self.fixed_step),)
        return tuple(float(v) for v in self.grid)

    def build_path(self):
        if self.uses_sfa:
            return surrogate_first(self.lam, init_surrogate_power=self.init_surrogate_power)
        if self.algorithm == "surrogate-only":
            return surrogate_tempering(self.surrogate_terminal)
        return tempering(1.0, init_surrogate_power=self.init_surrogate_power)

    def resolve_d(self, dim):
        if isinstance(self.d, str):
            tag, _, value = self.d.partition(":")
            if tag != "chi2":
                raise ConfigError(f"unknown diversification spec {self.d!r}")
            return numerics.chi_square_upper_quantile(float(value), dim)
        return float(self.d)

    def to_dict(self):
        out = dict(self.__dict__)
        out["grid"] = list(self.effective_grid())
        return out


@dataclass
class RunResult:
    config: dict
    iterations: list
    full_evals: int
    surrogate_evals: int
    virtual_time: float
    wall_time_s: float
    posterior_mean: np.ndarray
    posterior_cov: np.ndarray
    log_evidence: float
    final_locations: np.ndarray
    final_natural: np.ndarray
    metrics: dict = field(default_factory=dict)

    def particles_digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.final_locations).tobytes()).hexdigest()

    def to_dict(self, include_wall=True):
        out = {
            "config": self.config,
            "iterations": self.iterations,
            "full_evals": self.full_evals,
            "surrogate_evals": self.surrogate_evals,
            "virtual_time": self.virtual_time,
            "posterior_mean": [float(v) for v in self.posterior_mean],
            "posterior_cov": [[float(v) for v in row] for row in self.posterior_cov],
            "log_evidence": self.log_evidence,
            "particles_sha256": self.particles_digest(),
            "metrics": self.metrics,
        }
        if include_wall:
            out["wall_time_s"] = self.wall_time_s
        return out


class _Mutator:
    """Batched kernel cycles for one SMC iteration at a fixed temperature.

    Maintains per-particle caches of the mutation target (and, for delayed
    acceptance, the stage-one screen target built by substituting the
    calibrated surrogate for the full likelihood factor). Per-particle
    Philox streams are consumed in the same order as the single-particle
    kernel steps: proposal normals, bypass uniform (only when the bypass
    probability is positive), first accept uniform, then a stage-two
    uniform only when that stage is reached with log r2 < 0.
    """

    def __init__(self, system, path, model, cal: Calibration, chol, kernel,
                 bypass, seed, iteration):
        self.system = system
        self.path = path
        self.model = model
        self.cal = cal
        self.chol = chol
        self.gamma = system.gamma
        _, c_surr, c_full = path.coefficients(self.gamma)
        self.c_full = c_full
        # no full-likelihood factor means the screen would equal the target;
        # fall back to plain MH so no full evaluation can be triggered
        self.kernel = "da" if (kernel == "da" and c_full != 0.0) else "mh"
        self.bypass = float(bypass) if self.kernel == "da" else 0.0
        self.use_shift = self.kernel == "da" and bool(np.any(cal.shift))
        self.need_raw = c_surr != 0.0 or (self.kernel == "da" and not self.use_shift)
        self.gens = [substream(seed, "mutate", iteration, i) for i in range(system.n)]
        self.alpha2_sum = 0.0
        self.alpha2_count = 0

        if self.need_raw and system.surr_comps is None:
            system.surr_comps = model.surrogate_components_batch(system.locations)
        if c_full != 0.0 and system.log_full is None:
            system.log_full = model.full_loglike_batch(system.locations)
        self.f_cur = np.asarray(path.log_target(
            self.gamma, system.log_prior, system.log_full, system.surr_sum()
        ), dtype=float)
        if self.kernel == "da":
            cal_cur = self._calibrated(system.locations, system.surr_comps)
            self.s1_cur = np.asarray(path.log_target(
                self.gamma, system.log_prior, cal_cur, system.surr_sum()
            ), dtype=float)
        else:
            self.s1_cur = None

    def _calibrated(self, locations, comps):
        if self.use_shift:
            shifted = self.model.surrogate_components_batch(locations - self.cal.shift)
            return apply_weights(shifted, self.cal.weights)
        return apply_weights(comps, self.cal.weights)

    def cycle(self, h_arr) -> CycleRecords:
        sys = self.system
        n, p = sys.locations.shape
        h_arr = np.broadcast_to(np.asarray(h_arr, dtype=float), (n,))
        z = np.empty((n, p))
        for i, g in enumerate(self.gens):
            z[i] = g.standard_normal(p)
        proposals = sys.locations + h_arr[:, None] * (z @ self.chol.T)
        jumps = h_arr**2 * np.einsum("ij,ij->i", z, z)
        lp_star = self.model.log_prior_batch(proposals)
        comps_star = (
            self.model.surrogate_components_batch(proposals) if self.need_raw else None
        )
        ls_star = None if comps_star is None else comps_star.sum(axis=1)
        if self.kernel == "mh":
            return self._cycle_mh(h_arr, proposals, jumps, lp_star, comps_star, ls_star)
        return self._cycle_da(h_arr, proposals, jumps, lp_star, comps_star, ls_star)

    def _cycle_mh(self, h_arr, proposals, jumps, lp_star, comps_star, ls_star):
        n = proposals.shape[0]
        lf_star = (
            self.model.full_loglike_batch(proposals) if self.c_full != 0.0 else None
        )
        with np.errstate(invalid="ignore"):
            f_star = np.asarray(self.path.log_target(
                self.gamma, lp_star, lf_star, ls_star
            ), dtype=float)
        f_star = np.where(np.isnan(f_star), -np.inf, f_star)
        log_r = f_star - self.f_cur
        u = np.array([g.random() for g in self.gens])
        accepted = np.log(u) < log_r
        self._apply(accepted, proposals, lp_star, lf_star, comps_star, f_star, None)
        return CycleRecords(
            h=np.array(h_arr), jump=jumps, log_r1=np.full(n, np.nan), log_r=log_r,
            stage1_accepted=accepted.copy(), accepted=accepted, bypassed=np.zeros(n, bool),
            kernel="mh",
        )

    def _cycle_da(self, h_arr, proposals, jumps, lp_star, comps_star, ls_star):
        n = proposals.shape[0]
        if self.use_shift:
            cal_star = apply_weights(
                self.model.surrogate_components_batch(proposals - self.cal.shift),
                self.cal.weights,
            )
        else:
            cal_star = apply_weights(comps_star, self.cal.weights)
        with np.errstate(invalid="ignore"):
            s1_star = np.asarray(self.path.log_target(
                self.gamma, lp_star, cal_star, ls_star
            ), dtype=float)
        s1_star = np.where(np.isnan(s1_star), -np.inf, s1_star)
        log_r1 = s1_star - self.s1_cur

        if self.bypass > 0.0:
            u_b = np.array([g.random() for g in self.gens])
            bypassed = u_b < self.bypass
        else:
            bypassed = np.zeros(n, dtype=bool)
        u_first = np.array([g.random() for g in self.gens])
        with np.errstate(invalid="ignore"):
            stage1 = ~bypassed & (np.log(u_first) < log_r1)

        need_full = np.flatnonzero(stage1 | bypassed)
        log_r = np.full(n, np.nan)
        lf_star = np.full(n, np.nan)
        f_star = np.full(n, np.nan)
        accepted = np.zeros(n, dtype=bool)
        if need_full.size:
            lf_sub = self.model.full_loglike_batch(proposals[need_full])
            lf_star[need_full] = lf_sub
            ls_sub = None if ls_star is None else ls_star[need_full]
            with np.errstate(invalid="ignore"):
                f_sub = np.asarray(self.path.log_target(
                    self.gamma, lp_star[need_full], lf_sub, ls_sub
                ), dtype=float)
            f_sub = np.where(np.isnan(f_sub), -np.inf, f_sub)
            f_star[need_full] = f_sub
            log_r[need_full] = f_sub - self.f_cur[need_full]
            for i in need_full:
                if bypassed[i]:
                    accepted[i] = math.log(u_first[i]) < log_r[i]
                else:
                    lr2 = log_r[i] - log_r1[i]
                    accepted[i] = lr2 >= 0.0 or math.log(self.gens[i].random()) < lr2
                    self.alpha2_sum += min(1.0, math.exp(min(lr2, 0.0)))
                    self.alpha2_count += 1
        self._apply(accepted, proposals, lp_star, lf_star, comps_star, f_star,
                    (s1_star, cal_star))
        return CycleRecords(
            h=np.array(h_arr), jump=jumps, log_r1=log_r1, log_r=log_r,
            stage1_accepted=stage1, accepted=accepted, bypassed=bypassed, kernel="da",
        )

    def _apply(self, accepted, proposals, lp_star, lf_star, comps_star, f_star, s1_info):
        sys = self.system
        if not np.any(accepted):
            return
        sys.locations[accepted] = proposals[accepted]
        sys.log_prior[accepted] = lp_star[accepted]
        if sys.log_full is not None and lf_star is not None:
            sys.log_full[accepted] = lf_star[accepted]
        if sys.surr_comps is not None and comps_star is not None:
            sys.surr_comps[accepted] = comps_star[accepted]
        self.f_cur[accepted] = f_star[accepted]
        if s1_info is not None:
            s1_star, _ = s1_info
            self.s1_cur[accepted] = s1_star[accepted]

    def mean_alpha2(self):
        return self.alpha2_sum / self.alpha2_count if self.alpha2_count else None


def _estimate_covariance(system, weights, config, seed, iteration):
    if config.mode_demeaned_cov:
        return numerics.mode_demeaned_covariance(
            system.locations, weights, substream(seed, "kmeans", iteration)
        )
    try:
        return particles.weighted_covariance(system.locations, weights)
    except SingularCovarianceError:
        warnings.warn("singular weighted covariance; falling back to mode demeaning")
        return numerics.mode_demeaned_covariance(
            system.locations, weights, substream(seed, "kmeans", iteration)
        )


def _ensure_caches(system, model, path, gammas):
    need_surr = False
    need_full = False
    for g in gammas:
        _, c_surr, c_full = path.coefficients(g)
        need_surr |= c_surr != 0.0
        need_full |= c_full != 0.0
    if need_surr and system.surr_comps is None:
        system.surr_comps = model.surrogate_components_batch(system.locations)
    if need_full and system.log_full is None:
        system.log_full = model.full_loglike_batch(system.locations)


def _group_alpha1(records, groups):
    if records.kernel == "da":
        base = records.log_r1
    else:
        base = records.log_r
    probs = np.minimum(np.exp(np.minimum(base, 0.0)), 1.0)
    return np.array([float(np.mean(probs[idx])) for idx in groups])


def _cycle_counts(method, groups, esjd, alphas, d, p_min, max_cycles, seed, iteration):
    k_int = np.empty(len(groups))
    for g, idx in enumerate(groups):
        samples = esjd[idx]
        if method == "median":
            k_int[g] = k_star_median(samples, d, max_cycles)
        elif method == "gamma":
            try:
                k_int[g] = k_star_gamma(samples, d, p_min, max_cycles)
            except ValueError:
                warnings.warn("too few positive ESJD samples; median fallback")
                k_int[g] = k_star_median(samples, d, max_cycles)
        elif method == "bootstrap":
            k_int[g] = k_star_bootstrap(
                samples, d, p_min, substream(seed, "boot", iteration, g),
                max_cycles=max_cycles,
            )
        else:
            k_int[g] = one_move_k(float(np.mean(alphas[idx])), p_min, max_cycles)
    return k_int


def run_smc(config: RunConfig, model, init_locations=None) -> RunResult:
    """Run the annealing SMC sampler to the terminal temperature."""
    t_start = time.perf_counter()
    if hasattr(model, "threads"):
        model.threads = config.threads
    model.costs.wall_mode = config.wall_clock
    path = config.build_path()
    dim = model.dim
    d_val = config.resolve_d(dim)
    diversify = DiversificationConfig(d=d_val, p_min=config.p_min, method=config.method)
    grid = TuningGrid(config.effective_grid())
    n = config.n_particles
    target_ess = config.target_ess_fraction * n

    if init_locations is None:
        locations = model.sample_prior(n, substream(config.seed, "init"))
    else:
        locations = np.array(init_locations, dtype=float)
        if locations.shape != (n, dim):
            raise ConfigError(
                f"initial particles have shape {locations.shape}, expected {(n, dim)}"
            )
    system = particles.ParticleSystem(
        locations=locations,
        log_weights=np.full(n, -math.log(n)),
        gamma=0.0,
        log_prior=np.asarray(model.log_prior_batch(locations), dtype=float),
        costs=model.costs,
    )

    kernel = "da" if config.uses_da else "mh"
    cal_cfg = CalibrationConfig(
        enabled=config.uses_calibration, shift=config.cal_shift,
        weights=config.cal_weights, folds=config.folds,
    )
    iterations = []
    prev_costs = None
    t = 0
    while system.gamma < path.gamma_terminal - 1e-12:
        t += 1
        if t > 1000:
            raise RuntimeError("annealing failed to reach the terminal temperature")
        phase_end = path.next_phase_end(system.gamma)
        _ensure_caches(system, model, path,
                       (0.5 * (system.gamma + phase_end), phase_end))
        gamma_new = particles.find_next_temperature(system, path, target_ess, phase_end)
        increment = particles.reweight(system, path, gamma_new)
        weights = system.normalized_weights()
        ess_val = particles.ess(weights)
        sigma = _estimate_covariance(system, weights, config, config.seed, t)
        chol = numerics.cholesky_spd(sigma, pivot_tol=1e-12)
        system = particles.stratified_resample(
            system, substream(config.seed, "resample", t), config.n_strata
        )

        if kernel == "da" and cal_cfg.enabled:
            cal, cal_diag = calibrate(
                system.locations, system.log_full, model, cal_cfg,
                substream(config.seed, "cal", t),
            )
        else:
            cal = Calibration.identity(dim, model.n_components,
                                       cal_cfg.shift, cal_cfg.weights)
            cal_diag = {"active": False}

        mut = _Mutator(system, path, model, cal, chol, kernel, config.bypass,
                       config.seed, t)
        groups = allocate_pilot(n, grid, substream(config.seed, "pilot", t))
        h_arr = np.empty(n)
        for g, idx in enumerate(groups):
            h_arr[idx] = grid.values[g]
        before = model.costs.snapshot()
        pilot = mut.cycle(h_arr)
        cost_s, cost_f = estimate_likelihood_costs(
            *model.costs.pilot_costs(before), previous=prev_costs,
            nominal=(model.costs.cost_surrogate, model.costs.cost_full),
        )
        prev_costs = (cost_s, cost_f)

        alphas, alpha_model = predict_overall_alpha(pilot)
        esjd = conditional_esjd(pilot.jump, alphas)
        moved = pilot.accepted.copy()
        medians = np.array([float(np.median(esjd[idx])) for idx in groups])
        alpha1_hat = _group_alpha1(pilot, groups)
        k_int = _cycle_counts(config.method, groups, esjd, alphas, d_val,
                              config.p_min, config.max_cycles, config.seed, t)
        if mut.kernel == "mh" and config.method == "median":
            with np.errstate(divide="ignore"):
                k_sel = np.where(medians > 0, d_val / medians, np.inf)
            selected, costs = select_phi(k_sel, None, cost_s, cost_f, "mh",
                                         medians=medians)
        else:
            selected, costs = select_phi(k_int, alpha1_hat, cost_s, cost_f, mut.kernel)
        phi_star = grid.values[selected]

        def one_cycle():
            rec = mut.cycle(phi_star)
            a = overall_alpha(rec, alpha_model)
            return conditional_esjd(rec.jump, a), rec.accepted

        extra, hit_max, j_cum = mutate_adaptive(one_cycle, esjd, moved, diversify,
                                                config.max_cycles)
        snapshot = model.costs.snapshot()
        iterations.append({
            "t": t,
            "gamma": float(system.gamma),
            "ess": float(ess_val),
            "log_evidence_increment": float(increment),
            "kernel": mut.kernel,
            "selected_step": float(phi_star),
            "cycles": int(1 + extra),
            "hit_max_cycles": bool(hit_max),
            "alpha1_selected": float(alpha1_hat[selected]),
            "mean_alpha2": mut.mean_alpha2(),
            "esjd_median": float(np.median(j_cum)),
            "cost_full": float(cost_f),
            "cost_surrogate": float(cost_s),
            "tuning": {
                "grid": [float(v) for v in grid.values],
                "median_esjd": [float(v) for v in medians],
                "alpha1": [float(v) for v in alpha1_hat],
                "k_star": [float(v) for v in k_int],
                "cost": [float(v) for v in costs],
                "alpha_model": (
                    None if alpha_model is None else
                    {"kind": alpha_model.kind,
                     "coef": None if alpha_model.coef is None
                     else [float(c) for c in alpha_model.coef],
                     "alpha2_bar": float(alpha_model.alpha2_bar)}
                ),
            },
            "calibration": cal_diag,
            "evals": snapshot,
        })

    natural = model.to_natural(system.locations) if hasattr(model, "to_natural") \
        else system.locations
    wall = time.perf_counter() - t_start
    return RunResult(
        config=config.to_dict(),
        iterations=iterations,
        full_evals=model.costs.full_evals,
        surrogate_evals=model.costs.surrogate_evals,
        virtual_time=model.costs.virtual_time,
        wall_time_s=wall,
        posterior_mean=np.mean(natural, axis=0),
        posterior_cov=np.atleast_2d(np.cov(natural.T)),
        log_evidence=float(system.log_evidence),
        final_locations=system.locations.copy(),
        final_natural=np.asarray(natural),
        metrics={},
    )
