"""Kernel tuning from pilot mutation runs.

A pilot cycle allocates candidate step sizes across the particles, one
group per grid value. From its records we estimate, per grid value, the
first-stage acceptance rate, the distribution of expected squared jumping
distances, and the number of kernel cycles needed to reach the
diversification threshold; the step size minimising predicted cost wins.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import ConfigError


@dataclass(frozen=True)
class TuningGrid:
    values: tuple

    def __post_init__(self):
        if len(self.values) < 1:
            raise ConfigError("tuning grid must contain at least one value")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class DiversificationConfig:
    d: float
    p_min: float = 0.5
    method: str = "median"

    def __post_init__(self):
        if self.d < 0:
            raise ConfigError("diversification threshold must be nonnegative")
        if not 0.0 < self.p_min < 1.0:
            raise ConfigError("p_min must lie in (0, 1)")
        if self.method not in ("median", "gamma", "bootstrap", "one-move"):
            raise ConfigError(f"unknown tuning method {self.method!r}")
        if self.method == "median":
            assert self.p_min == 0.5, "the median method is the p_min = 0.5 quantile"


@dataclass
class CycleRecords:
    """Per-particle outcome arrays of one batched kernel cycle."""

    h: np.ndarray
    jump: np.ndarray
    log_r1: np.ndarray        # nan for plain MH records
    log_r: np.ndarray         # nan where the full target was not evaluated
    stage1_accepted: np.ndarray
    accepted: np.ndarray
    bypassed: np.ndarray
    kernel: str               # "mh" | "da"

    @property
    def observed(self):
        return ~np.isnan(self.log_r)


@dataclass
class TuningReport:
    grid: TuningGrid
    esjd_samples: list = field(default_factory=list)
    medians: np.ndarray | None = None
    alpha1_hat: np.ndarray | None = None
    k_star: np.ndarray | None = None
    costs: np.ndarray | None = None
    selected_index: int = 0
    alpha_coefficients: tuple | None = None
    cost_full: float = 1.0
    cost_surrogate: float = 1.0

    @property
    def selected_value(self):
        return self.grid.values[self.selected_index]

    def summary(self):
        return {
            "grid": list(self.grid.values),
            "median_esjd": None if self.medians is None else [float(v) for v in self.medians],
            "alpha1_hat": None if self.alpha1_hat is None else [float(v) for v in self.alpha1_hat],
            "k_star": None if self.k_star is None else [float(v) for v in self.k_star],
            "cost": None if self.costs is None else [float(v) for v in self.costs],
            "selected": float(self.selected_value),
            "alpha_coefficients": self.alpha_coefficients,
            "cost_full": self.cost_full,
            "cost_surrogate": self.cost_surrogate,
        }


def allocate_pilot(n, grid: TuningGrid, rng):
    """Random partition of particles into one group per grid value.

    Group sizes differ by at most one, and the remainder groups are chosen
    at random so each particle lands in each group with probability 1/G.
    """
    g = len(grid)
    if n < g:
        raise ConfigError(f"need at least {g} particles for a {g}-point grid")
    if g > n / 20:
        warnings.warn(f"grid of {g} leaves groups below 20 particles (N={n})")
    base, rem = divmod(n, g)
    sizes = np.full(g, base)
    sizes[rng.permutation(g)[:rem]] += 1
    perm = rng.permutation(n)
    out, start = [], 0
    for size in sizes:
        out.append(np.sort(perm[start : start + size]))
        start += size
    return out


def conditional_esjd(jump, alpha):
    """Expected squared jump of a proposal: Mahalanobis jump times accept prob."""
    jump = getattr(jump, "jump", jump)
    return jump * alpha


# ---------------------------------------------------------------------------
# overall acceptance prediction (delayed acceptance)


@dataclass
class AlphaModel:
    """Predicts overall DA acceptance for stage-1-rejected proposals."""

    kind: str                  # "regression" | "fallback"
    coef: np.ndarray | None    # intercept, slope on log r1, slope on h
    alpha2_bar: float = 1.0

    def predict(self, log_r1, h):
        log_r1 = np.asarray(log_r1, dtype=float)
        h = np.broadcast_to(np.asarray(h, dtype=float), log_r1.shape)
        if self.kind == "regression":
            pred = self.coef[0] + self.coef[1] * log_r1 + self.coef[2] * h
            with np.errstate(over="ignore"):
                alpha = np.minimum(np.exp(pred), 1.0)
            return np.where(np.isneginf(log_r1), 0.0, alpha)
        alpha1 = np.minimum(np.exp(np.minimum(log_r1, 0.0)), 1.0)
        return alpha1 * self.alpha2_bar


def fit_overall_alpha(records: CycleRecords) -> AlphaModel:
    """OLS of observed log r on [1, log r1, h]; mean-alpha2 fallback.

    Bypass records carry both ratios and enter as observed rows. Rows with
    an infinite ratio are certain decisions and are excluded from the fit.
    """
    observed = records.observed
    usable = observed & np.isfinite(records.log_r) & np.isfinite(records.log_r1)
    lr2 = records.log_r[usable] - records.log_r1[usable]
    alpha2_bar = float(np.mean(np.minimum(np.exp(np.minimum(lr2, 0.0)), 1.0))) if usable.any() else 1.0
    x = np.column_stack(
        [np.ones(usable.sum()), records.log_r1[usable], records.h[usable]]
    )
    if usable.sum() < 3 or np.linalg.matrix_rank(x) < 3:
        warnings.warn("alpha regression rank-deficient; using mean-alpha2 fallback")
        return AlphaModel("fallback", None, alpha2_bar)
    coef = numerics.ols(x, records.log_r[usable])
    return AlphaModel("regression", coef, alpha2_bar)


def overall_alpha(records: CycleRecords, model: AlphaModel | None = None):
    """Per-record overall acceptance probabilities.

    MH records use min{1, r}. DA records with an observed full ratio use
    min{1, r1} min{1, r2}; the rest use the fitted prediction.
    """
    if records.kernel == "mh":
        return np.minimum(np.exp(np.minimum(records.log_r, 0.0)), 1.0)
    if model is None:
        model = fit_overall_alpha(records)
    alpha = np.empty(records.jump.shape[0])
    obs = records.observed
    with np.errstate(invalid="ignore"):
        a1 = np.minimum(np.exp(np.minimum(records.log_r1[obs], 0.0)), 1.0)
        lr2 = records.log_r[obs] - records.log_r1[obs]
        a2 = np.minimum(np.exp(np.minimum(lr2, 0.0)), 1.0)
    alpha[obs] = a1 * a2
    alpha[~obs] = model.predict(records.log_r1[~obs], records.h[~obs])
    return alpha


def predict_overall_alpha(records: CycleRecords):
    """Fit the acceptance regression and return per-record alpha estimates."""
    model = fit_overall_alpha(records) if records.kernel == "da" else None
    return overall_alpha(records, model), model


# ---------------------------------------------------------------------------
# minimum cycle counts


def k_star_median(esjd_samples, d, max_cycles=100):
    """ceil(d / median): cycles needed if the first jump is representative."""
    samples = np.asarray(esjd_samples, dtype=float)
    if samples.size == 0 or d <= 0:
        raise ValueError("need nonempty samples and d > 0")
    med = float(np.median(samples))
    if med <= 0.0:
        warnings.warn("median ESJD is zero; assuming the cycle cap")
        return max_cycles
    return max(1, math.ceil(d / med))


def _smallest_k(prob_at_k, p_min, max_cycles):
    # prob_at_k is nondecreasing in k; doubling line search past k = 64
    k = 1
    while k <= min(64, max_cycles):
        if prob_at_k(k) >= p_min:
            return k
        k += 1
    if k > max_cycles:
        return max_cycles
    lo, hi = 64, 128
    while hi < max_cycles and prob_at_k(hi) < p_min:
        lo, hi = hi, hi * 2
    hi = min(hi, max_cycles)
    if prob_at_k(hi) < p_min:
        return max_cycles
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if prob_at_k(mid) >= p_min:
            hi = mid
        else:
            lo = mid
    return hi


def k_star_gamma(esjd_samples, d, p_min, max_cycles=100):
    """Smallest k with P(Gamma(k a, b) >= d) >= p_min under fitted (a, b)."""
    samples = np.asarray(esjd_samples, dtype=float)
    samples = samples[samples > 0]
    if samples.size < 5:
        raise ValueError("gamma method needs >= 5 strictly positive samples")
    if d <= 0:
        return 1
    shape, rate = numerics.gamma_mle(samples)
    return _smallest_k(lambda k: numerics.gamma_ccdf(d, k * shape, rate), p_min, max_cycles)


def k_star_bootstrap(esjd_samples, d, p_min, rng, n_boot=2000, max_cycles=100):
    """Nonparametric bootstrap of partial sums of the pilot ESJD values."""
    samples = np.asarray(esjd_samples, dtype=float)
    if samples.size == 0:
        raise ValueError("need nonempty samples")
    if n_boot < 1000:
        raise ValueError("n_boot must be >= 1000")
    sums = np.zeros(n_boot)
    for k in range(1, max_cycles + 1):
        sums += samples[rng.integers(0, samples.size, n_boot)]
        if float(np.mean(sums >= d)) >= p_min:
            return k
    return max_cycles


def one_move_k(alpha_hat, p_min, max_cycles=100):
    """Cycles so each particle moves at least once with probability p_min."""
    if alpha_hat >= 1.0:
        return 1
    if alpha_hat <= 0.0:
        warnings.warn("nonpositive acceptance estimate; assuming the cycle cap")
        return max_cycles
    k = math.ceil(math.log(1.0 - p_min) / math.log(1.0 - alpha_hat))
    return min(max(1, k), max_cycles)


# ---------------------------------------------------------------------------
# step-size selection


def select_phi(k_star, alpha1_hat, cost_surrogate, cost_full, kernel, medians=None):
    """Index of the cost-minimal grid value.

    DA cost is k (L_S + alpha1 L_F); MH cost is k L_F. Under the median
    method the caller passes the continuous relaxation k = d / median for
    MH, for which the minimiser provably coincides with the median-ESJD
    maximiser; both are computed and checked against each other. Ties break
    toward smaller k, then the smaller grid value.
    """
    k_star = np.asarray(k_star, dtype=float)
    if k_star.size == 0:
        raise ConfigError("empty tuning grid")
    if kernel == "da":
        alpha1_hat = np.asarray(alpha1_hat, dtype=float)
        costs = k_star * (cost_surrogate + alpha1_hat * cost_full)
    else:
        costs = k_star * cost_full
    order = np.lexsort((np.arange(k_star.size), k_star, costs))
    best = int(order[0])
    if kernel == "mh" and medians is not None:
        shortcut = int(np.argmax(np.asarray(medians, dtype=float)))
        assert shortcut == best, "median-ESJD shortcut disagrees with cost minimiser"
    return best, costs


def estimate_likelihood_costs(full_time, full_count, surr_time, surr_count,
                              previous=None, nominal=(0.01, 1.0)):
    """Mean per-evaluation costs (L_S, L_F) from pilot accounting deltas.

    Falls back to the previous iteration's estimate, then to the configured
    nominal values, for any evaluation kind absent from the pilot.
    """
    prev_s, prev_f = previous if previous is not None else (None, None)
    if surr_count > 0:
        cost_s = surr_time / surr_count
    elif prev_s is not None:
        cost_s = prev_s
    else:
        cost_s = nominal[0]
    if full_count > 0:
        cost_f = full_time / full_count
    elif prev_f is not None:
        cost_f = prev_f
    else:
        warnings.warn("no full evaluations in pilot and no previous estimate")
        cost_f = nominal[1]
    return cost_s, cost_f
