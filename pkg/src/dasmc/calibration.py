"""Surrogate calibration from cached full-likelihood values.

The surrogate is adjusted in two conditional stages against the history
of full log-likelihood values at the current particle locations: a
translation of the parameters fitted by derivative-free least squares,
then per-component annealing powers fitted by a lasso shrunk toward the
unit vector with cross-validated penalty. Neither stage evaluates the
full likelihood; the nuisance intercepts absorb scale differences and are
never applied to the surrogate, since a constant cannot change an MH
ratio.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import ConfigError


@dataclass
class Calibration:
    shift: np.ndarray                 # xi, length p
    weights: np.ndarray               # zeta, length q
    mu1: float = 0.0
    mu2: float = 0.0
    penalty: float = 0.0
    shift_enabled: bool = True
    weights_enabled: bool = True

    @classmethod
    def identity(cls, dim, n_components, shift_enabled=True, weights_enabled=True):
        return cls(np.zeros(dim), np.ones(n_components),
                   shift_enabled=shift_enabled, weights_enabled=weights_enabled)

    @property
    def is_identity(self):
        return not np.any(self.shift) and np.all(self.weights == 1.0)


@dataclass
class CalibrationConfig:
    enabled: bool = True
    shift: bool = True
    weights: bool = True
    folds: int = 5
    shift_budget_per_dim: int = 200


def calibrated_surrogate_loglike(model, theta, cal: Calibration):
    """sum_j zeta_j log L~_j(y | theta - xi); one surrogate evaluation."""
    comps = model.surrogate_components(theta - cal.shift if np.any(cal.shift) else theta)
    if comps.shape[0] != cal.weights.shape[0]:
        raise ConfigError(
            f"calibration has {cal.weights.shape[0]} weights for {comps.shape[0]} components"
        )
    if np.all(cal.weights == 1.0):
        return float(np.sum(comps))
    return float(cal.weights @ comps)


def calibrated_surrogate_batch(model, thetas, cal: Calibration):
    comps = model.surrogate_components_batch(
        thetas - cal.shift if np.any(cal.shift) else thetas
    )
    return apply_weights(comps, cal.weights)


def apply_weights(comps, zeta):
    """zeta-weighted component sum; the identity weights reduce to a plain sum."""
    if np.all(zeta == 1.0):
        return comps.sum(axis=-1)
    return comps @ zeta


def discrepancy(full_ll, surr_ll):
    """In-sample squared log-likelihood mismatch with the free intercept profiled out."""
    resid = np.asarray(full_ll) - np.asarray(surr_ll)
    return float(np.sum((resid - resid.mean()) ** 2))


def optimize_shift(locations, full_ll, model, budget_per_dim=200):
    """Translation xi minimising the intercept-profiled discrepancy.

    Derivative-free simplex search restarted at zero, so the reported
    optimum can never be worse than no shift. Only the cheap surrogate is
    evaluated.
    """
    locations = np.asarray(locations, dtype=float)
    p = locations.shape[1]

    def objective(xi):
        surr = model.surrogate_components_batch(locations - xi).sum(axis=1)
        return discrepancy(full_ll, surr)

    scale = 0.25 * locations.std(axis=0) + 1e-3
    result = numerics.simplex_minimize(
        objective, np.zeros(p), scale=scale, max_evals=budget_per_dim * p
    )
    if not result.converged:
        warnings.warn("shift optimisation hit its evaluation budget")
    surr = model.surrogate_components_batch(locations - result.x).sum(axis=1)
    mu1 = float(np.mean(full_ll - surr))
    return result.x, mu1, result.fx


def optimize_weights(locations, full_ll, model, xi, folds, rng):
    """Component powers zeta by lasso shrunk toward one.

    The change of variables zeta' = zeta - 1 turns the fit into a standard
    lasso with response full minus shifted-surrogate log-likelihood and the
    component log-likelihoods as columns; the penalty is chosen by K-fold
    cross-validation. Constant columns keep their unit power.
    """
    if folds < 2:
        raise ConfigError("weight calibration needs folds >= 2")
    design = model.surrogate_components_batch(
        np.asarray(locations, dtype=float) - xi
    )
    response = np.asarray(full_ll, dtype=float) - design.sum(axis=1)
    constant = design.std(axis=0) == 0.0
    if np.any(constant):
        warnings.warn(f"{int(constant.sum())} constant surrogate components kept at power 1")
    zeta_prime, mu2, lam = numerics.lasso_cv(design, response, folds, rng)
    return 1.0 + zeta_prime, mu2, lam


def calibrate(locations, full_ll, model, config: CalibrationConfig, rng):
    """Fit (xi, zeta) on the current particle history; Algorithm steps (d1).

    ``full_ll`` holds cached full log-likelihoods at ``locations``; when it
    is None (surrogate-first annealing before the full phase) the identity
    calibration is returned. Duplicate locations are collapsed so resampled
    copies do not weight the fit. No full-likelihood evaluations occur.
    """
    p, q = model.dim, model.n_components
    identity = Calibration.identity(p, q, config.shift, config.weights)
    if full_ll is None or not config.enabled:
        return identity, {"active": False}
    with model.costs.tuning_context():
        return _calibrate_inner(locations, full_ll, model, config, rng, identity)


def _calibrate_inner(locations, full_ll, model, config, rng, identity):
    p, q = model.dim, model.n_components
    locations = np.asarray(locations, dtype=float)
    _, unique_idx = np.unique(locations, axis=0, return_index=True)
    locations = locations[unique_idx]
    full_ll = np.asarray(full_ll, dtype=float)[unique_idx]
    keep = np.isfinite(full_ll)
    locations, full_ll = locations[keep], full_ll[keep]
    if locations.shape[0] < 3:
        warnings.warn("too few history points for calibration")
        return identity, {"active": False}

    surr0 = model.surrogate_components_batch(locations).sum(axis=1)
    obj_identity = discrepancy(full_ll, surr0)
    diag = {"active": True, "n_history": int(locations.shape[0]),
            "objective_identity": obj_identity}

    xi = np.zeros(p)
    mu1 = 0.0
    obj_shift = obj_identity
    if config.shift and locations.shape[0] >= p + 2:
        xi, mu1, obj_shift = optimize_shift(
            locations, full_ll, model, config.shift_budget_per_dim
        )
    elif config.shift:
        warnings.warn("too few unique history points for shift calibration")
    diag["objective_shift"] = obj_shift

    zeta = np.ones(q)
    mu2, lam = 0.0, 0.0
    if config.weights:
        zeta, mu2, lam = optimize_weights(locations, full_ll, model, xi, config.folds, rng)
    surr_final = apply_weights(
        model.surrogate_components_batch(locations - xi if np.any(xi) else locations), zeta
    )
    obj_final = discrepancy(full_ll, surr_final)
    if obj_final > obj_shift:
        # coordinate-descent tolerance can leave a hair above the zeta = 1
        # objective; the unit vector is always feasible, so keep it instead
        zeta = np.ones(q)
        mu2, lam = 0.0, 0.0
        obj_final = obj_shift
    cal = Calibration(xi, zeta, mu1, mu2, lam, config.shift, config.weights)
    diag["objective_final"] = obj_final
    diag["penalty"] = lam
    diag["shift_norm"] = float(np.linalg.norm(xi))
    diag["zeta_l1"] = float(np.sum(np.abs(zeta - 1.0)))
    return cal, diag
