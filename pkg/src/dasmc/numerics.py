"""Self-contained numerical kernels shared across the package.

Everything here is implemented in-repo to double precision on top of
numpy array primitives: Cholesky, incomplete-gamma functions and gamma
MLE, chi-square quantiles, least squares, lasso with cross-validation,
Nelder-Mead, DFT (radix-2 plus Bluestein for arbitrary lengths), k-means
with cluster-count selection, and mode-demeaned covariance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .accel import lasso_cd_gram, lasso_cd_path
from .errors import SingularCovarianceError

_EPS = 1e-16
_MAX_ITER_GAMMA = 500


# ---------------------------------------------------------------------------
# linear algebra


def cholesky_spd(a, pivot_tol=1e-12):
    """Lower Cholesky factor of an SPD matrix.

    Raises SingularCovarianceError when a pivot falls below
    ``pivot_tol`` times the largest diagonal entry.
    """
    a = np.asarray(a, dtype=float)
    p = a.shape[0]
    scale = max(np.max(np.abs(np.diag(a))), _EPS)
    low = np.zeros_like(a)
    for j in range(p):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if d <= pivot_tol * scale:
            raise SingularCovarianceError(
                f"pivot {d:.3e} at column {j} below tolerance {pivot_tol:.1e}"
            )
        low[j, j] = math.sqrt(d)
        if j + 1 < p:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def solve_cholesky(low, b):
    y = np.zeros_like(b, dtype=float)
    p = low.shape[0]
    for i in range(p):
        y[i] = (b[i] - low[i, :i] @ y[:i]) / low[i, i]
    x = np.zeros_like(y)
    for i in range(p - 1, -1, -1):
        x[i] = (y[i] - low[i + 1 :, i] @ x[i + 1 :]) / low[i, i]
    return x


def ols(x, y):
    """Least-squares coefficients; normal equations, QR fallback."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    try:
        low = cholesky_spd(x.T @ x, pivot_tol=1e-12)
        return solve_cholesky(low, x.T @ y)
    except SingularCovarianceError:
        q, r = np.linalg.qr(x)
        try:
            return np.linalg.solve(r, q.T @ y)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(x, y, rcond=None)[0]


# ---------------------------------------------------------------------------
# gamma special functions


def _gamma_p_series(a, z):
    # lower regularised P(a, z); valid for z < a + 1
    term = 1.0 / a
    total = term
    for k in range(1, _MAX_ITER_GAMMA):
        term *= z / (a + k)
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-z + a * math.log(z) - math.lgamma(a))

def _gamma_q_contfrac(a, z):
    # upper regularised Q(a, z) via modified Lentz; valid for z >= a + 1
    tiny = 1e-300
    b = z + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER_GAMMA):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-z + a * math.log(z) - math.lgamma(a)) * h


def gamma_ccdf(x, shape, rate):
    """Upper tail P(X > x) for X ~ Gamma(shape, rate)."""
    if shape <= 0 or rate <= 0:
        raise ValueError("gamma_ccdf requires shape > 0 and rate > 0")
    if x < 0:
        raise ValueError("gamma_ccdf requires x >= 0")
    if x == 0:
        return 1.0
    z = rate * x
    if z < shape + 1.0:
        return 1.0 - _gamma_p_series(shape, z)
    return _gamma_q_contfrac(shape, z)


def digamma(x):
    result = 0.0
    while x < 10.0:
        result -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    result += (
        math.log(x)
        - 0.5 * inv
        - inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (
            1.0 / 252 - inv2 * (1.0 / 240 - inv2 / 132))))
    )
    return result


def trigamma(x):
    result = 0.0
    while x < 10.0:
        result += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    result += inv * (
        1.0 + inv * (0.5 + inv * (1.0 / 6 - inv2 * (
            1.0 / 30 - inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * 5.0 / 66)))))
    )
    return result


def gamma_mle(samples, tol=1e-10, max_iter=50):
    """(shape, rate) by maximum likelihood; method-of-moments fallback.

    Newton iterations on the shape profile log-likelihood, started at the
    method-of-moments estimate.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2 or np.any(samples <= 0):
        raise ValueError("gamma_mle requires >= 2 strictly positive samples")
    mean = float(np.mean(samples))
    var = float(np.var(samples))
    mom_shape = mean * mean / var if var > 0 else 1e6
    s = math.log(mean) - float(np.mean(np.log(samples)))
    if s <= 0:
        warnings.warn("degenerate log-moment gap; using method of moments")
        return mom_shape, mom_shape / mean
    a = mom_shape if mom_shape > 0 else 1.0
    for _ in range(max_iter):
        g = math.log(a) - digamma(a) - s
        gprime = 1.0 / a - trigamma(a)
        step = g / gprime
        a_new = a - step
        while a_new <= 0:
            step *= 0.5
            a_new = a - step
        if abs(a_new - a) <= tol * max(1.0, a):
            return a_new, a_new / mean
        a = a_new
    warnings.warn("gamma MLE did not converge; using method of moments")
    return mom_shape, mom_shape / mean


def chi_square_upper_quantile(p_tail, dof):
    """d such that P(X > d) = p_tail for X ~ chi-square(dof)."""
    if not 0.0 < p_tail < 1.0:
        raise ValueError("p_tail must be in (0, 1)")
    hi = 1.0
    while gamma_ccdf(hi, dof / 2.0, 0.5) > p_tail:
        hi *= 2.0
    lo = 0.0
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if gamma_ccdf(mid, dof / 2.0, 0.5) > p_tail:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# lasso


def lasso_path(x, y, lams, tol=1e-8, max_sweeps=1000):
    """Coordinate-descent lasso on standardised columns.

    Minimises sum((y - mu - X w)^2) + lam * ||w_std||_1 for each lam
    (decreasing); returns coefficients on the original column scale,
    shape (len(lams), q). Zero-variance columns get coefficient zero.
    The response is scaled to unit spread internally so the tolerance is
    effectively relative; penalties stay on the caller's scale.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lams = np.asarray(lams, dtype=float)
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    sd = xc.std(axis=0)
    active = sd > 0
    xs = np.zeros_like(xc)
    xs[:, active] = xc[:, active] / sd[active]
    y_scale = yc.std()
    if y_scale <= 0:
        y_scale = 1.0
    ys = np.ascontiguousarray(yc / y_scale)
    scaled_lams = lams / y_scale
    if xs.shape[1] <= xs.shape[0]:
        # covariance updates beat residual updates when columns are scarce
        gram = np.ascontiguousarray(xs.T @ xs)
        coefs_std = lasso_cd_gram(gram, xs.T @ ys, scaled_lams, tol, max_sweeps)
    else:
        coefs_std = lasso_cd_path(np.ascontiguousarray(xs), ys, scaled_lams,
                                  tol, max_sweeps)
    coefs = np.zeros_like(coefs_std)
    coefs[:, active] = y_scale * coefs_std[:, active] / sd[active]
    return coefs


def lasso_lambda_max(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean(axis=0)
    sd = xc.std(axis=0)
    active = sd > 0
    xs = xc[:, active] / sd[active]
    yc = y - y.mean()
    if not np.any(active):
        return 1.0
    return 2.0 * float(np.max(np.abs(xs.T @ yc)))


def lasso_cv(x, y, folds, rng, n_lams=50, min_ratio=1e-4, tol=1e-8):
    """K-fold cross-validated lasso.

    Returns (coef, intercept, lam_star). The penalty grid is log-spaced
    from the smallest lambda zeroing all coefficients down to
    min_ratio times that value; lam_star minimises mean held-out MSE.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = x.shape[0]
    if folds < 2:
        raise ValueError("cross-validation needs folds >= 2")
    lam_max = lasso_lambda_max(x, y)
    if lam_max <= 0:
        lam_max = 1.0
    lams = np.geomspace(lam_max, lam_max * min_ratio, n_lams)
    perm = rng.permutation(m)
    bounds = np.linspace(0, m, folds + 1).astype(int)
    mse = np.zeros((folds, n_lams))
    for f in range(folds):
        test_idx = perm[bounds[f] : bounds[f + 1]]
        train_idx = np.setdiff1d(perm, test_idx)
        coefs = lasso_path(x[train_idx], y[train_idx], lams, tol=tol)
        mu = y[train_idx].mean() + (x[test_idx] - x[train_idx].mean(axis=0)) @ coefs.T
        mse[f] = np.mean((y[test_idx, None] - mu) ** 2, axis=0)
    lam_star = float(lams[int(np.argmin(mse.mean(axis=0)))])
    coef = lasso_path(x, y, np.array([lam_star]), tol=tol)[0]
    intercept = float(y.mean() - x.mean(axis=0) @ coef)
    return coef, intercept, lam_star


# ---------------------------------------------------------------------------
# Nelder-Mead simplex


@dataclass
class SimplexResult:
    x: np.ndarray
    fx: float
    n_evals: int
    converged: bool


def simplex_minimize(f, x0, scale=0.25, max_evals=None, ftol=1e-10, xtol=1e-10):
    """Nelder-Mead with reflection 1, expansion 2, contraction 0.5, shrink 0.5."""
    x0 = np.asarray(x0, dtype=float)
    p = x0.size
    if max_evals is None:
        max_evals = 200 * p
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (p,))
    verts = [x0.copy()]
    for i in range(p):
        v = x0.copy()
        v[i] += scale[i] if scale[i] != 0 else 0.25
        verts.append(v)
    verts = np.array(verts)
    fvals = np.array([f(v) for v in verts])
    n_evals = p + 1
    converged = False
    while n_evals < max_evals:
        order = np.argsort(fvals)
        verts, fvals = verts[order], fvals[order]
        if fvals[-1] - fvals[0] <= ftol * (abs(fvals[0]) + ftol) and np.max(
            np.abs(verts[-1] - verts[0])
        ) <= xtol * (1.0 + np.max(np.abs(verts[0]))):
            converged = True
            break
        centroid = verts[:-1].mean(axis=0)
        xr = centroid + (centroid - verts[-1])
        fr = f(xr)
        n_evals += 1
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - verts[-1])
            fe = f(xe)
            n_evals += 1
            if fe < fr:
                verts[-1], fvals[-1] = xe, fe
            else:
                verts[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            verts[-1], fvals[-1] = xr, fr
        else:
            xc = centroid + 0.5 * (verts[-1] - centroid)
            fc = f(xc)
            n_evals += 1
            if fc < fvals[-1]:
                verts[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, p + 1):
                    verts[i] = verts[0] + 0.5 * (verts[i] - verts[0])
                    fvals[i] = f(verts[i])
                n_evals += p
    best = int(np.argmin(fvals))
    return SimplexResult(verts[best].copy(), float(fvals[best]), n_evals, converged)


# ---------------------------------------------------------------------------
# discrete Fourier transform


def _bitrev_indices(n):
    levels = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for i in range(levels):
        rev = (rev << 1) | ((idx >> i) & 1)
    return rev


def _fft_pow2(x):
    n = x.shape[0]
    out = x[_bitrev_indices(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size >> 1
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(-1, size)
        t = blocks[:, half:] * tw
        u = blocks[:, :half].copy()
        blocks[:, :half] = u + t
        blocks[:, half:] = u - t
        size <<= 1
    return out


def _bluestein(x):
    n = x.shape[0]
    ks = np.arange(n, dtype=np.int64)
    # angles reduced mod 2n: exp(-i pi k^2 / n) has period 2n in k^2
    w = np.exp(-1j * np.pi * ((ks * ks) % (2 * n)) / n)
    m = 1 << (2 * n - 1).bit_length()
    a = np.zeros(m, dtype=np.complex128)
    a[:n] = x * w
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(w)
    b[m - n + 1 :] = np.conj(w[1:][::-1])
    fa = _fft_pow2(a)
    fb = _fft_pow2(b)
    conv = np.conj(_fft_pow2(np.conj(fa * fb))) / m
    return w * conv[:n]


def dft(x):
    """X_k = sum_t x_t exp(-2 pi i k t / n); any length n >= 1."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[0]
    if n < 1:
        raise ValueError("dft needs at least one sample")
    if n == 1:
        return x.copy()
    if n & (n - 1) == 0:
        return _fft_pow2(x)
    return _bluestein(x)


def idft(x):
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(dft(np.conj(x))) / x.shape[0]


# ---------------------------------------------------------------------------
# k-means with cluster-count selection


@dataclass
class ClusterModel:
    k: int
    centers: np.ndarray
    assignments: np.ndarray
    within_ss: float
    between_ss: float


def _kmeanspp_init(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
            continue
        centers[j] = x[np.searchsorted(np.cumsum(d2 / total), rng.random())]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(x, k, rng, max_iter=100):
    n = x.shape[0]
    centers = _kmeanspp_init(x, k, rng)
    assign = np.full(n, -1)
    prev_wss = np.inf
    for _ in range(max_iter):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        for j in range(k):
            mask = new_assign == j
            if not np.any(mask):
                far = int(np.argmax(d2[np.arange(n), new_assign]))
                centers[j] = x[far]
                new_assign[far] = j
                mask = new_assign == j
            centers[j] = x[mask].mean(axis=0)
        wss = float(np.sum((x - centers[new_assign]) ** 2))
        assert wss <= prev_wss + 1e-9 * (1.0 + abs(prev_wss)), "Lloyd objective increased"
        if np.array_equal(new_assign, assign):
            break
        assign, prev_wss = new_assign, wss
    wss = float(np.sum((x - centers[assign]) ** 2))
    return centers, assign, wss


def kmeans_ch(locations, k_max, rng, n_restarts=10, split_gain=0.40):
    """k-means with k chosen by within-SS gain at k=2 then Calinski-Harabasz.

    A split to k >= 2 is accepted only when it removes more than
    ``split_gain`` of the total within-cluster sum of squares; beyond that,
    k in {2, .., k_max} maximises the CH index.
    """
    x = np.asarray(locations, dtype=float)
    n = x.shape[0]
    if not n > k_max or k_max < 1:
        raise ValueError("need n > k_max >= 1")
    grand = x.mean(axis=0)
    total_ss = float(np.sum((x - grand) ** 2))
    one = ClusterModel(1, grand[None, :], np.zeros(n, dtype=int), total_ss, 0.0)
    if k_max == 1 or total_ss == 0:
        return one

    def best_of(k):
        best = None
        for _ in range(n_restarts):
            centers, assign, wss = _lloyd(x, k, rng)
            if best is None or wss < best[2]:
                best = (centers, assign, wss)
        return best

    centers2, assign2, wss2 = best_of(2)
    if total_ss == 0 or (total_ss - wss2) / total_ss <= split_gain:
        return one
    candidates = {2: (centers2, assign2, wss2)}
    for k in range(3, k_max + 1):
        candidates[k] = best_of(k)
    best_k, best_ch, best_fit = 2, -np.inf, candidates[2]
    for k, fit in candidates.items():
        wss = fit[2]
        ch = ((total_ss - wss) / (k - 1)) / (wss / (n - k)) if wss > 0 else np.inf
        if ch > best_ch:
            best_k, best_ch, best_fit = k, ch, fit
    centers, assign, wss = best_fit
    return ClusterModel(best_k, centers, assign, wss, total_ss - wss)


# ---------------------------------------------------------------------------
# covariance helpers


def weighted_covariance_checked(locations, weights, pivot_tol=1e-10):
    """Weighted covariance; raises SingularCovarianceError when rank deficient.

    The raised error carries the computed matrix as ``.covariance`` so a
    caller can still inspect it (for instance to retry with mode demeaning).
    """
    locations = np.asarray(locations, dtype=float)
    weights = np.asarray(weights, dtype=float)
    mu = weights @ locations
    centered = locations - mu
    cov = (centered * weights[:, None]).T @ centered
    cov = 0.5 * (cov + cov.T)
    try:
        cholesky_spd(cov, pivot_tol=pivot_tol)
    except SingularCovarianceError as exc:
        exc.covariance = cov
        raise
    return cov


def mode_demeaned_covariance(locations, weights, rng, k_max=6):
    """Weighted covariance of particle residuals about their k-means mode.

    Falls back to the plain weighted covariance when a single cluster is
    selected. Rank deficiency propagates as SingularCovarianceError.
    """
    locations = np.asarray(locations, dtype=float)
    model = kmeans_ch(locations, min(k_max, locations.shape[0] - 1), rng)
    if model.k == 1:
        return weighted_covariance_checked(locations, weights)
    residuals = locations - model.centers[model.assignments]
    return weighted_covariance_checked(residuals, weights)
