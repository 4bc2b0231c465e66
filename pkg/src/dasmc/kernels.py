"""MVN random-walk Metropolis-Hastings and two-stage delayed-acceptance.

The delayed-acceptance kernel is the b-mixture of a plain MH step on the
full target (the robust bypass) and the two-stage screen: provisional
acceptance on the cheap surrogate target first, then a correcting second
stage that consults the full target. A mixture of invariant kernels is
invariant, so the bypass keeps the kernel exact while protecting against
light surrogate tails.

Stream discipline (relied on by the engine and by the equivalence test
between da_step with an exact surrogate and mh_step): every step draws the
proposal normals first, then one uniform for the bypass decision only when
the bypass probability is positive, then exactly one uniform for the first
accept decision; the stage-two uniform is drawn only when that stage is
reached with log r2 < 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import EvaluationError


@dataclass(frozen=True)
class ProposalConfig:
    """Random-walk proposal N(theta, h^2 Sigma) with precomputed Cholesky."""

    step_size: float
    covariance: np.ndarray
    chol: np.ndarray

    @classmethod
    def create(cls, step_size, covariance):
        covariance = np.asarray(covariance, dtype=float)
        chol = numerics.cholesky_spd(covariance, pivot_tol=1e-12)
        return cls(step_size=float(step_size), covariance=covariance, chol=chol)

    def with_step(self, step_size):
        return ProposalConfig(float(step_size), self.covariance, self.chol)


@dataclass
class DaConfig:
    bypass_probability: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.bypass_probability < 0.5:
            raise ValueError("bypass probability must lie in [0, 0.5)")


@dataclass
class MutationRecord:
    """Outcome of one kernel cycle on one particle.

    ``jump`` is the squared Mahalanobis distance of the proposal under the
    proposal covariance. ``log_r1`` is the surrogate-stage log ratio
    (present for every DA cycle, None for plain MH); ``log_r`` is the full
    log ratio, present exactly when the full target was evaluated at the
    proposal (stage two or bypass).
    """

    proposal: np.ndarray
    jump: float
    log_r1: float | None
    log_r: float | None
    stage1_accepted: bool
    accepted: bool
    bypassed: bool
    full_evals: int
    surrogate_evals: int

    def __post_init__(self):
        if self.accepted and not (self.stage1_accepted or self.bypassed):
            raise ValueError("accepted implies stage-1 acceptance or bypass")
        if self.full_evals != (0 if self.log_r is None else 1):
            raise ValueError("full_evals must equal 1 exactly when log_r is present")


def propose(theta, config: ProposalConfig, rng):
    """theta + h L z with z standard normal."""
    theta_star, _ = _propose(theta, config, rng)
    return theta_star


def _propose(theta, config, rng):
    z = rng.standard_normal(theta.shape[0])
    theta_star = theta + config.step_size * (config.chol @ z)
    jump = config.step_size ** 2 * float(z @ z)
    return theta_star, jump


def _finite_or_neginf(value):
    value = float(value)
    return value if not math.isnan(value) else -math.inf


def mh_step(theta, target, config: ProposalConfig, rng, current=None):
    """One symmetric random-walk MH step on ``target``.

    A non-finite target at the proposal is a certain rejection, never an
    exception. Draws one uniform for the accept decision regardless of the
    ratio, keeping stream consumption decision-independent.
    """
    if current is None:
        current = target(theta)
    if not np.isfinite(current):
        raise EvaluationError("target must be finite at the current point")
    theta_star, jump = _propose(theta, config, rng)
    log_r = _finite_or_neginf(target(theta_star)) - current
    accepted = math.log(rng.random()) < log_r
    record = MutationRecord(
        proposal=theta_star,
        jump=jump,
        log_r1=None,
        log_r=log_r,
        stage1_accepted=accepted,
        accepted=accepted,
        bypassed=False,
        full_evals=1,
        surrogate_evals=0,
    )
    return (theta_star if accepted else theta), record


def da_step(theta, target_full, target_surrogate, config: ProposalConfig,
            da: DaConfig, rng, current_full=None, current_surr=None):
    """One two-stage delayed-acceptance step with robust bypass.

    Stage one accepts provisionally with probability min{1, r1} computed on
    the surrogate target; stage two corrects with min{1, r2} where
    r2 = r / r1. With probability b the surrogate screen is bypassed and a
    plain MH step on the full target is taken (the surrogate ratio is still
    recorded for tuning). The full target is evaluated at the proposal only
    in stage two or under bypass.
    """
    if current_surr is None:
        current_surr = target_surrogate(theta)
    if not np.isfinite(current_surr):
        raise EvaluationError("surrogate target must be finite at the current point")
    theta_star, jump = _propose(theta, config, rng)
    b = da.bypass_probability
    bypassed = b > 0.0 and rng.random() < b
    s_star = _finite_or_neginf(target_surrogate(theta_star))
    log_r1 = s_star - current_surr

    if bypassed:
        if current_full is None:
            current_full = target_full(theta)
        if not np.isfinite(current_full):
            raise EvaluationError("full target must be finite at the current point")
        log_r = _finite_or_neginf(target_full(theta_star)) - current_full
        accepted = math.log(rng.random()) < log_r
        record = MutationRecord(theta_star, jump, log_r1, log_r, False, accepted,
                                True, 1, 1)
        return (theta_star if accepted else theta), record

    stage1 = math.log(rng.random()) < log_r1
    if not stage1:
        record = MutationRecord(theta_star, jump, log_r1, None, False, False,
                                False, 0, 1)
        return theta, record

    if current_full is None:
        current_full = target_full(theta)
    if not np.isfinite(current_full):
        raise EvaluationError("full target must be finite at the current point")
    log_r = _finite_or_neginf(target_full(theta_star)) - current_full
    log_r2 = log_r - log_r1
    accepted = log_r2 >= 0.0 or math.log(rng.random()) < log_r2
    record = MutationRecord(theta_star, jump, log_r1, log_r, True, accepted,
                            False, 1, 1)
    return (theta_star if accepted else theta), record


def mutate_adaptive(cycle_fn, pilot_esjd, pilot_moved, diversify, max_cycles):
    """Run mutation cycles until the empirical diversification criterion holds.

    ``cycle_fn()`` performs one kernel cycle across all particles (mutating
    engine state) and returns per-particle (esjd, moved) arrays. The pilot
    cycle's contribution seeds the accumulators. Under ESJD methods the
    criterion is median accumulated ESJD >= d; under one-move it is a moved
    fraction >= p_min. Returns (extra_cycles, hit_max, accumulated_esjd).
    """
    j_cum = np.asarray(pilot_esjd, dtype=float).copy()
    moved = np.asarray(pilot_moved, dtype=bool).copy()

    def satisfied():
        if diversify.method == "one-move":
            return float(np.mean(moved)) >= diversify.p_min
        return float(np.median(j_cum)) >= diversify.d

    s = 0
    hit_max = False
    while not satisfied():
        if s >= max_cycles:
            hit_max = True
            break
        esjd, mv = cycle_fn()
        j_cum += esjd
        moved |= mv
        s += 1
    return s, hit_max, j_cum
