"""Likelihood cost accounting: evaluation counters plus a virtual clock.

In virtual mode every full evaluation advances the clock by the
configured per-evaluation cost and every surrogate evaluation by its
(much smaller) cost, mirroring an artificial delay without sleeping.
Wall mode records measured durations instead; callers time the
evaluation and pass the duration in.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass


@dataclass
class CostAccount:
    cost_full: float = 1.0
    cost_surrogate: float = 0.01
    wall_mode: bool = False
    full_evals: int = 0
    surrogate_evals: int = 0
    virtual_time: float = 0.0
    measured_full: float = 0.0
    measured_surrogate: float = 0.0
    tuning_surrogate_evals: int = 0
    _exempt: bool = False

    def account(self, kind: str, n: int = 1, measured: float | None = None):
        """Charge ``n`` evaluations of the given kind to the clock."""
        if kind == "full":
            if self._exempt:
                raise RuntimeError("full likelihood evaluated inside a tuning context")
            self.full_evals += n
            if self.wall_mode:
                self.measured_full += measured or 0.0
                self.virtual_time += measured or 0.0
            else:
                self.virtual_time += n * self.cost_full
        elif kind == "surrogate":
            if self._exempt:
                self.tuning_surrogate_evals += n
                return
            self.surrogate_evals += n
            if self.wall_mode:
                self.measured_surrogate += measured or 0.0
                self.virtual_time += measured or 0.0
            else:
                self.virtual_time += n * self.cost_surrogate
        else:
            raise ValueError(f"unknown evaluation kind {kind!r}")

    @contextmanager
    def tuning_context(self):
        """Surrogate queries made by tuning optimisers are tracked separately.

        The virtual clock models the cost of likelihood evaluations demanded
        by the sampler itself (mutation, reweighting, cache fills); the
        calibration optimiser's internal surrogate queries are tuning
        machinery, like the lasso arithmetic, and only bump a side counter.
        Full evaluations are forbidden here outright.
        """
        self._exempt = True
        try:
            yield self
        finally:
            self._exempt = False

    @property
    def rho(self) -> float:
        return self.cost_full / self.cost_surrogate

    def scaled_evals(self) -> float:
        """Hardware-independent cost: full evals plus surrogate evals / rho."""
        return self.full_evals + self.surrogate_evals / self.rho

    def snapshot(self) -> dict:
        return {
            "full_evals": self.full_evals,
            "surrogate_evals": self.surrogate_evals,
            "virtual_time": self.virtual_time,
            "measured_full": self.measured_full,
            "measured_surrogate": self.measured_surrogate,
        }

    def delta(self, before: dict) -> dict:
        now = self.snapshot()
        return {k: now[k] - before[k] for k in now}

    def pilot_costs(self, before: dict):
        """(full_time, full_count, surr_time, surr_count) since ``before``."""
        d = self.delta(before)
        if self.wall_mode:
            return d["measured_full"], d["full_evals"], d["measured_surrogate"], d["surrogate_evals"]
        return (
            d["full_evals"] * self.cost_full,
            d["full_evals"],
            d["surrogate_evals"] * self.cost_surrogate,
            d["surrogate_evals"],
        )
