"""Annealing paths: unnormalised log target as a function of temperature.

Three path kinds:

* ``tempering``            p0^(1-g) * (L pi)^g, terminal temperature 1
* ``surrogate-tempering``  p0^(1-g) * (L~ pi)^g, used by surrogate-only runs
* ``surrogate-first``      p0^max(1-g,0) * (L~ pi)^(lam min(g, 2-g))
                           * (L pi)^max(0, g-1), over g in [0, 2]

The initial distribution p0 is the prior, optionally sharpened by a
surrogate power ``init_surrogate_power`` when a run is seeded from the
output of a previous surrogate-only run.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CacheMissError

PRIOR, SURROGATE, FULL = "prior", "surrogate", "full"


@dataclass(frozen=True)
class AnnealingPath:
    kind: str
    lam: float = 1.0
    gamma_terminal: float = 1.0
    phase_boundaries: tuple = ()
    init_surrogate_power: float = 0.0

    def __post_init__(self):
        if self.kind not in ("tempering", "surrogate-tempering", "surrogate-first"):
            raise ValueError(f"unknown path kind {self.kind!r}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")
        if self.kind == "surrogate-first" and self.lam > 0.5:
            warnings.warn(f"surrogate power lam={self.lam} above the recommended 0.5")

    # -- factor exponents (p0, surrogate posterior, full posterior) ---------

    def exponents(self, gamma):
        """Factor exponents (p0, surrogate posterior, full posterior).

        Tempering keeps the textbook (1-g, 0, g) form; a surrogate-only run
        stopped early (gamma_terminal < 1) therefore ends on p0^(1-g) (L~ pi)^g.
        """
        if gamma < -1e-12 or gamma > self.gamma_terminal + 1e-12:
            raise ValueError(f"gamma={gamma} outside [0, {self.gamma_terminal}]")
        if self.kind == "tempering":
            return 1.0 - gamma, 0.0, gamma
        if self.kind == "surrogate-tempering":
            return 1.0 - gamma, gamma, 0.0
        return (
            max(1.0 - gamma, 0.0),
            self.lam * min(gamma, 2.0 - gamma),
            max(0.0, gamma - 1.0),
        )

    def required_caches(self, gamma):
        e0, es, ef = self.exponents(gamma)
        out = set()
        if e0 != 0.0:
            out.add(PRIOR)
        if es != 0.0:
            out.add(SURROGATE)
        if ef != 0.0:
            out.add(FULL)
        return out

    # -- log target ----------------------------------------------------------

    def coefficients(self, gamma):
        """Coefficients (c_prior, c_surr, c_full) on the cached log values."""
        e0, es, ef = self.exponents(gamma)
        c_prior = e0 + es + ef
        c_surr = e0 * self.init_surrogate_power + es
        c_full = ef
        return c_prior, c_surr, c_full

    def log_target(self, gamma, log_prior, log_like_full, log_like_surr):
        """Unnormalised log target at ``gamma`` from cached log values.

        Accepts scalars or aligned arrays. Raises CacheMissError when a
        value with nonzero coefficient is absent.
        """
        c_prior, c_surr, c_full = self.coefficients(gamma)
        value = c_prior * np.asarray(log_prior, dtype=float)
        if c_surr != 0.0:
            if log_like_surr is None:
                raise CacheMissError(f"surrogate log-likelihood needed at gamma={gamma}")
            value = value + c_surr * np.asarray(log_like_surr, dtype=float)
        if c_full != 0.0:
            if log_like_full is None:
                raise CacheMissError(f"full log-likelihood needed at gamma={gamma}")
            value = value + c_full * np.asarray(log_like_full, dtype=float)
        return value

    def next_phase_end(self, gamma):
        for b in self.phase_boundaries:
            if gamma < b:
                return b
        return self.gamma_terminal


def tempering(gamma_terminal=1.0, init_surrogate_power=0.0) -> AnnealingPath:
    return AnnealingPath("tempering", gamma_terminal=gamma_terminal,
                         init_surrogate_power=init_surrogate_power)


def surrogate_tempering(gamma_terminal=1.0) -> AnnealingPath:
    return AnnealingPath("surrogate-tempering", gamma_terminal=gamma_terminal)


def surrogate_first(lam, init_surrogate_power=0.0) -> AnnealingPath:
    return AnnealingPath(
        "surrogate-first",
        lam=lam,
        gamma_terminal=2.0,
        phase_boundaries=(1.0,),
        init_surrogate_power=init_surrogate_power,
    )
