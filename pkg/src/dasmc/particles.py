"""Particle population: weights, ESS, adaptive temperature, resampling.

All weight arithmetic is carried out on log weights; raw probabilities
are never summed directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import (
    ConfigError,
    DegeneratePopulationError,
    EvaluationError,
    InvalidWeightsError,
    TemperatureOrderError,
)

def logsumexp(a):
    a = np.asarray(a, dtype=float)
    m = np.max(a)
    if not np.isfinite(m):
        return m
    return float(m + np.log(np.sum(np.exp(a - m))))


def normalized_log_weights(log_weights):
    return log_weights - logsumexp(log_weights)


@dataclass
class ParticleSystem:
    """Weighted particles with cached log-density components.

    ``log_full`` and ``surr_comps`` are filled lazily: a tempering run
    never touches the surrogate cache and a surrogate-first run leaves
    ``log_full`` empty until the annealing path requires it.
    """

    locations: np.ndarray           # (N, p)
    log_weights: np.ndarray         # (N,) unnormalised
    gamma: float
    log_prior: np.ndarray           # (N,)
    log_full: np.ndarray | None = None       # (N,)
    surr_comps: np.ndarray | None = None     # (N, q)
    log_evidence: float = 0.0
    costs: object = None
    stage1_cache: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def normalized_weights(self) -> np.ndarray:
        return np.exp(normalized_log_weights(self.log_weights))

    def surr_sum(self):
        return None if self.surr_comps is None else self.surr_comps.sum(axis=1)


def ess(weights) -> float:
    """Effective sample size 1 / sum(W_i^2) of normalised weights."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or not np.all(np.isfinite(w)):
        raise InvalidWeightsError("weights must be finite")
    if np.any(w < 0) or not np.any(w > 0):
        raise InvalidWeightsError("weights must be nonnegative with positive mass")
    if abs(w.sum() - 1.0) > 1e-8:
        raise InvalidWeightsError(f"weights sum to {w.sum()!r}, expected 1")
    return float(1.0 / np.sum(w * w))


def _ess_from_log(logw) -> float:
    lw = normalized_log_weights(logw)
    return float(np.exp(-logsumexp(2.0 * lw)))


def _log_target_arrays(path, gamma, system):
    return path.log_target(gamma, system.log_prior, system.log_full, system.surr_sum())


def reweight(system: ParticleSystem, path, gamma_new: float) -> float:
    """Advance the annealing temperature, updating weights and evidence.

    Returns the log-evidence increment. Locations are unchanged.
    """
    if gamma_new <= system.gamma:
        raise TemperatureOrderError(f"gamma_new {gamma_new} <= current {system.gamma}")
    delta = path.log_target(gamma_new, system.log_prior, system.log_full, system.surr_sum())
    delta = delta - _log_target_arrays(path, system.gamma, system)
    base = normalized_log_weights(system.log_weights)
    updated = base + delta
    increment = logsumexp(updated)
    if not np.isfinite(increment):
        raise DegeneratePopulationError("all reweighted particles underflowed")
    system.log_weights = updated
    system.gamma = float(gamma_new)
    system.log_evidence += increment
    return increment


def find_next_temperature(system: ParticleSystem, path, target_ess: float,
                          phase_end: float) -> float:
    """Largest temperature in (gamma, phase_end] keeping ESS near target.

    Returns phase_end when feasible there; otherwise bisects
    ESS(gamma) = target_ess to a bracket of 1e-8 or |ESS - target| <= 1,
    whichever happens first. No state is mutated.
    """
    n = system.n
    if not 1.0 < target_ess < n:
        raise ConfigError(f"target_ess must lie in (1, {n})")
    if phase_end <= system.gamma:
        raise ConfigError("phase_end must exceed the current temperature")
    base = normalized_log_weights(system.log_weights)
    ref = _log_target_arrays(path, system.gamma, system)

    def ess_at(gamma):
        delta = path.log_target(gamma, system.log_prior, system.log_full,
                                system.surr_sum()) - ref
        lw = base + delta
        if np.any(np.isnan(lw)) or np.all(np.isinf(lw)):
            raise EvaluationError(f"ESS not computable at gamma={gamma}")
        return _ess_from_log(lw)

    if ess_at(phase_end) >= target_ess:
        return float(phase_end)
    lo, hi = system.gamma, float(phase_end)
    while hi - lo > 1e-8:
        mid = 0.5 * (lo + hi)
        e = ess_at(mid)
        if abs(e - target_ess) <= 1.0:
            return mid
        if e >= target_ess:
            lo = mid
        else:
            hi = mid
    return lo if lo > system.gamma else hi


def stratified_resample(system: ParticleSystem, rng, n_strata: int = 10) -> ParticleSystem:
    """Resample by stratified inversion of the weight CDF.

    [0, 1) is split into ``n_strata`` equal strata and N/n_strata
    sub-stratified uniforms are drawn per stratum, so every particle's
    offspring count stays within the stratified support bound. Weights
    reset to 1/N; caches follow their particles; counters are shared.
    """
    if n_strata < 1:
        raise ConfigError("n_strata must be >= 1")
    n = system.n
    if n % n_strata != 0:
        warnings.warn(f"N={n} not divisible by n_strata={n_strata}; using {n} strata")
        n_strata = n
    w = system.normalized_weights()
    positions = (np.arange(n) + rng.random(n)) / n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    idx = np.minimum(np.searchsorted(cdf, positions, side="right"), n - 1)
    return ParticleSystem(
        locations=system.locations[idx].copy(),
        log_weights=np.full(n, -np.log(n)),
        gamma=system.gamma,
        log_prior=system.log_prior[idx].copy(),
        log_full=None if system.log_full is None else system.log_full[idx].copy(),
        surr_comps=None if system.surr_comps is None else system.surr_comps[idx].copy(),
        log_evidence=system.log_evidence,
        costs=system.costs,
        stage1_cache=None if system.stage1_cache is None else system.stage1_cache[idx].copy(),
    )


def weighted_covariance(locations, weights):
    """Weighted sample covariance; singular matrices raise.

    Callers hitting the singular case may retry with
    numerics.mode_demeaned_covariance.
    """
    return numerics.weighted_covariance_checked(locations, weights, pivot_tol=1e-10)
