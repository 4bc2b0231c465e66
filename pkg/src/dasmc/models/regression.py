"""Linear regression with artificially expensive likelihoods.

Full likelihood: normal (sigma = 0.5) or location-scale student-t
(nu = 3, s = 1) around X beta. Surrogate: unit-variance normal around
X (a beta + b 1) with a = e^0.1 and b = 0.25, decomposed into one
component per datum. Evaluation costs are charged to a virtual clock.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .cost import CostAccount

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

DEFAULT_BETA = (0.0, 0.5, -1.5, 1.5, 3.0)


class RegressionModel:
    def __init__(self, x, y, likelihood="normal", sigma=0.5, nu=3.0, t_scale=1.0,
                 prior_sd=2.0, bias_scale=math.exp(0.1), bias_offset=0.25,
                 beta_true=None, costs: CostAccount | None = None):
        if likelihood not in ("normal", "student"):
            raise ValueError(f"unknown likelihood {likelihood!r}")
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.likelihood = likelihood
        self.sigma = sigma
        self.nu = nu
        self.t_scale = t_scale
        self.prior_sd = prior_sd
        self.bias_scale = bias_scale
        self.bias_offset = bias_offset
        self.beta_true = None if beta_true is None else np.asarray(beta_true, dtype=float)
        self.costs = costs if costs is not None else CostAccount()
        self._row_sums = self.x.sum(axis=1)
        self._t_const = (
            math.lgamma((nu + 1.0) / 2.0)
            - math.lgamma(nu / 2.0)
            - 0.5 * math.log(nu * math.pi * t_scale**2)
        )

    # -- construction --------------------------------------------------------

    @classmethod
    def simulate(cls, seed, likelihood="normal", n=100, dim=5, beta=DEFAULT_BETA,
                 costs=None, **kwargs):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xDA7A)))
        beta = np.asarray(beta, dtype=float)[:dim]
        x = rng.standard_normal((n, dim))
        mean = x @ beta
        if likelihood == "normal":
            y = mean + kwargs.get("sigma", 0.5) * rng.standard_normal(n)
        else:
            y = mean + kwargs.get("t_scale", 1.0) * rng.standard_t(kwargs.get("nu", 3.0), n)
        return cls(x, y, likelihood=likelihood, beta_true=beta, costs=costs, **kwargs)

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def n_components(self):
        return self.x.shape[0]

    @property
    def true_params(self):
        return self.beta_true

    def to_natural(self, thetas):
        return np.asarray(thetas, dtype=float)

    # -- prior ---------------------------------------------------------------

    def sample_prior(self, n_particles, rng):
        return self.prior_sd * rng.standard_normal((n_particles, self.dim))

    def log_prior(self, theta):
        return float(self.log_prior_batch(theta[None, :])[0])

    def log_prior_batch(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        return (
            -0.5 * np.sum(thetas**2, axis=1) / self.prior_sd**2
            - self.dim * (_HALF_LOG_2PI + math.log(self.prior_sd))
        )

    # -- full likelihood -----------------------------------------------------

    def full_loglike(self, theta):
        return float(self.full_loglike_batch(np.asarray(theta)[None, :])[0])

    def full_loglike_batch(self, thetas):
        start = time.perf_counter() if self.costs.wall_mode else None
        thetas = np.asarray(thetas, dtype=float)
        resid = self.y[:, None] - self.x @ thetas.T      # (n, N)
        if self.likelihood == "normal":
            out = (
                -0.5 * np.sum(resid**2, axis=0) / self.sigma**2
                - self.n_components * (_HALF_LOG_2PI + math.log(self.sigma))
            )
        else:
            scaled = resid / self.t_scale
            out = self.n_components * self._t_const - 0.5 * (self.nu + 1.0) * np.sum(
                np.log1p(scaled**2 / self.nu), axis=0
            )
        measured = time.perf_counter() - start if start is not None else None
        self.costs.account("full", thetas.shape[0], measured)
        return out

    # -- surrogate -----------------------------------------------------------

    def surrogate_components(self, theta):
        return self.surrogate_components_batch(np.asarray(theta)[None, :])[0]

    def surrogate_components_batch(self, thetas):
        start = time.perf_counter() if self.costs.wall_mode else None
        thetas = np.asarray(thetas, dtype=float)
        mean = self.bias_scale * (self.x @ thetas.T) + self.bias_offset * self._row_sums[:, None]
        resid = self.y[:, None] - mean                    # (n, N)
        out = (-0.5 * resid**2 - _HALF_LOG_2PI).T         # (N, n)
        measured = time.perf_counter() - start if start is not None else None
        self.costs.account("surrogate", thetas.shape[0], measured)
        return out

    def surrogate_loglike(self, theta):
        return float(np.sum(self.surrogate_components(theta)))
