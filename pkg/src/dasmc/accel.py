"""Hot numeric kernels: numba-compiled with a pure-numpy fallback.

The numba path is used whenever numba imports cleanly, unless the
environment variable ``DASMC_DISABLE_NUMBA`` is set to a non-empty value.
``USE_NUMBA`` records which path is active; ``benchmarks/bench_accel.py``
compares the two.

Kernels here are the inner loops that dominate runtime:

* ``lasso_cd_path``    coordinate-descent lasso along a penalty path
* ``dl_loglike``       Gaussian log-likelihood via Durbin-Levinson innovations
* ``dl_simulate``      exact stationary Gaussian draw via the same recursion
* ``arma_fi_grid``     ARMA x fractional spectral factor on a frequency grid

Both paths produce the same values up to floating-point reassociation;
tests compare them at 1e-10 relative tolerance.
"""

from __future__ import annotations

import os

import numpy as np

DISABLE_ENV = "DASMC_DISABLE_NUMBA"

try:
    if os.environ.get(DISABLE_ENV):
        raise ImportError(f"numba disabled via {DISABLE_ENV}")
    from numba import njit

    USE_NUMBA = True
except ImportError:
    USE_NUMBA = False

_LOG_2PI = 1.8378770664093453


# ---------------------------------------------------------------------------
# lasso coordinate descent
#
# Minimises  sum((y - X w)^2) + lam * sum(|w|)  for each lam in `lams`,
# warm-starting along the path.  Columns are used as given; standardisation
# is the caller's concern.  `lams` must be sorted decreasing.


def _lasso_cd_path_np(X, y, lams, tol, max_sweeps):
    m, q = X.shape
    col_norm2 = np.einsum("ij,ij->j", X, X)
    coefs = np.zeros((lams.shape[0], q))
    w = np.zeros(q)
    resid = y.copy()
    active = np.zeros(q, dtype=bool)
    for li in range(lams.shape[0]):
        half = 0.5 * lams[li]

        def sweep(cols):
            max_delta = 0.0
            w_scale = 1.0
            for j in cols:
                nj = col_norm2[j]
                if nj <= 0.0:
                    continue
                wj = w[j]
                cj = X[:, j] @ resid + nj * wj
                if cj > half:
                    wj_new = (cj - half) / nj
                elif cj < -half:
                    wj_new = (cj + half) / nj
                else:
                    wj_new = 0.0
                d = wj_new - wj
                if d != 0.0:
                    np.subtract(resid, d * X[:, j], out=resid)
                    w[j] = wj_new
                    max_delta = max(max_delta, abs(d))
                active[j] = w[j] != 0.0
                w_scale = max(w_scale, abs(w[j]))
            return max_delta, w_scale

        sweeps = 0
        while sweeps < max_sweeps:
            max_delta, w_scale = sweep(range(q))
            sweeps += 1
            if max_delta < tol * w_scale:
                break
            while sweeps < max_sweeps:
                max_delta, w_scale = sweep(np.flatnonzero(active))
                sweeps += 1
                if max_delta < tol * w_scale:
                    break
        coefs[li] = w
    return coefs


def _lasso_cd_path_impl(X, y, lams, tol, max_sweeps):
    m, q = X.shape
    col_norm2 = np.zeros(q)
    for j in range(q):
        s = 0.0
        for i in range(m):
            s += X[i, j] * X[i, j]
        col_norm2[j] = s
    coefs = np.zeros((lams.shape[0], q))
    w = np.zeros(q)
    resid = y.copy()
    active = np.zeros(q, dtype=np.bool_)
    for li in range(lams.shape[0]):
        half = 0.5 * lams[li]
        sweeps = 0
        while sweeps < max_sweeps:
            # full pass over every column, refreshing the active set
            max_delta = 0.0
            w_scale = 1.0
            for j in range(q):
                nj = col_norm2[j]
                if nj <= 0.0:
                    continue
                wj = w[j]
                cj = nj * wj
                for i in range(m):
                    cj += X[i, j] * resid[i]
                if cj > half:
                    wj_new = (cj - half) / nj
                elif cj < -half:
                    wj_new = (cj + half) / nj
                else:
                    wj_new = 0.0
                d = wj_new - wj
                if d != 0.0:
                    for i in range(m):
                        resid[i] -= d * X[i, j]
                    w[j] = wj_new
                    ad = abs(d)
                    if ad > max_delta:
                        max_delta = ad
                active[j] = w[j] != 0.0
                aw = abs(w[j])
                if aw > w_scale:
                    w_scale = aw
            sweeps += 1
            if max_delta < tol * w_scale:
                break
            # iterate the active set to convergence before the next full pass
            while sweeps < max_sweeps:
                max_delta = 0.0
                w_scale = 1.0
                for j in range(q):
                    if not active[j]:
                        continue
                    nj = col_norm2[j]
                    wj = w[j]
                    cj = nj * wj
                    for i in range(m):
                        cj += X[i, j] * resid[i]
                    if cj > half:
                        wj_new = (cj - half) / nj
                    elif cj < -half:
                        wj_new = (cj + half) / nj
                    else:
                        wj_new = 0.0
                    d = wj_new - wj
                    if d != 0.0:
                        for i in range(m):
                            resid[i] -= d * X[i, j]
                        w[j] = wj_new
                        ad = abs(d)
                        if ad > max_delta:
                            max_delta = ad
                    aw = abs(w[j])
                    if aw > w_scale:
                        w_scale = aw
                sweeps += 1
                if max_delta < tol * w_scale:
                    break
        coefs[li] = w
    return coefs


def _lasso_cd_gram_np(gram, xty, lams, tol, max_sweeps):
    q = xty.shape[0]
    coefs = np.zeros((lams.shape[0], q))
    w = np.zeros(q)
    grad = xty.copy()                 # X^T (y - X w)
    active = np.zeros(q, dtype=bool)
    diag = np.diag(gram).copy()
    for li in range(lams.shape[0]):
        half = 0.5 * lams[li]

        def sweep(cols):
            max_delta = 0.0
            w_scale = 1.0
            for j in cols:
                nj = diag[j]
                if nj <= 0.0:
                    continue
                cj = grad[j] + nj * w[j]
                if cj > half:
                    wj_new = (cj - half) / nj
                elif cj < -half:
                    wj_new = (cj + half) / nj
                else:
                    wj_new = 0.0
                d = wj_new - w[j]
                if d != 0.0:
                    np.subtract(grad, d * gram[:, j], out=grad)
                    w[j] = wj_new
                    max_delta = max(max_delta, abs(d))
                active[j] = w[j] != 0.0
                w_scale = max(w_scale, abs(w[j]))
            return max_delta, w_scale

        sweeps = 0
        while sweeps < max_sweeps:
            max_delta, w_scale = sweep(range(q))
            sweeps += 1
            if max_delta < tol * w_scale:
                break
            while sweeps < max_sweeps:
                max_delta, w_scale = sweep(np.flatnonzero(active))
                sweeps += 1
                if max_delta < tol * w_scale:
                    break
        coefs[li] = w
    return coefs


def _lasso_cd_gram_impl(gram, xty, lams, tol, max_sweeps):
    q = xty.shape[0]
    coefs = np.zeros((lams.shape[0], q))
    w = np.zeros(q)
    grad = xty.copy()
    active = np.zeros(q, dtype=np.bool_)
    for li in range(lams.shape[0]):
        half = 0.5 * lams[li]
        sweeps = 0
        while sweeps < max_sweeps:
            max_delta = 0.0
            w_scale = 1.0
            for j in range(q):
                nj = gram[j, j]
                if nj <= 0.0:
                    continue
                cj = grad[j] + nj * w[j]
                if cj > half:
                    wj_new = (cj - half) / nj
                elif cj < -half:
                    wj_new = (cj + half) / nj
                else:
                    wj_new = 0.0
                d = wj_new - w[j]
                if d != 0.0:
                    for k in range(q):
                        grad[k] -= d * gram[k, j]
                    w[j] = wj_new
                    ad = abs(d)
                    if ad > max_delta:
                        max_delta = ad
                active[j] = w[j] != 0.0
                aw = abs(w[j])
                if aw > w_scale:
                    w_scale = aw
            sweeps += 1
            if max_delta < tol * w_scale:
                break
            while sweeps < max_sweeps:
                max_delta = 0.0
                w_scale = 1.0
                for j in range(q):
                    if not active[j]:
                        continue
                    nj = gram[j, j]
                    if nj <= 0.0:
                        continue
                    cj = grad[j] + nj * w[j]
                    if cj > half:
                        wj_new = (cj - half) / nj
                    elif cj < -half:
                        wj_new = (cj + half) / nj
                    else:
                        wj_new = 0.0
                    d = wj_new - w[j]
                    if d != 0.0:
                        for k in range(q):
                            grad[k] -= d * gram[k, j]
                        w[j] = wj_new
                        ad = abs(d)
                        if ad > max_delta:
                            max_delta = ad
                    aw = abs(w[j])
                    if aw > w_scale:
                        w_scale = aw
                sweeps += 1
                if max_delta < tol * w_scale:
                    break
        coefs[li] = w
    return coefs


# ---------------------------------------------------------------------------
# Durbin-Levinson innovations
#
# `acov` holds autocovariances kappa(0..n-1) of a zero-mean stationary
# Gaussian series.  The recursion carries the order-t prediction
# coefficients and their reversal so every inner loop runs forward over
# contiguous memory.


def _dl_loglike_impl(acov, x):
    n = x.shape[0]
    v = acov[0]
    ll = -0.5 * (_LOG_2PI + np.log(v) + x[0] * x[0] / v)
    if n == 1:
        return ll
    phi = np.zeros(n)
    rev = np.zeros(n)
    nphi = np.zeros(n)
    nrev = np.zeros(n)
    num = acov[1]
    for t in range(1, n):
        k = num / v
        v = v * (1.0 - k * k)
        if v <= 0.0:
            return -np.inf
        nphi[t - 1] = k
        nrev[0] = k
        for i in range(t - 1):
            nphi[i] = phi[i] - k * rev[i]
            nrev[i + 1] = rev[i] - k * phi[i]
        pred = 0.0
        num = 0.0
        for i in range(t):
            pred += nrev[i] * x[i]
            num += nrev[i] * acov[i + 1]
        if t + 1 < n:
            num = acov[t + 1] - num
        e = x[t] - pred
        ll += -0.5 * (_LOG_2PI + np.log(v) + e * e / v)
        phi, nphi = nphi, phi
        rev, nrev = nrev, rev
    return ll


def _dl_loglike_np(acov, x):
    n = x.shape[0]
    v = acov[0]
    ll = -0.5 * (_LOG_2PI + np.log(v) + x[0] * x[0] / v)
    if n == 1:
        return float(ll)
    rev = np.zeros(n)
    num = acov[1]
    for t in range(1, n):
        k = num / v
        v = v * (1.0 - k * k)
        if v <= 0.0:
            return -np.inf
        # order-t reversed coefficients: nrev[0] = k, nrev[1:t] update
        nrev = np.empty(t)
        nrev[0] = k
        if t > 1:
            nrev[1:] = rev[: t - 1] - k * rev[: t - 1][::-1]
        pred = nrev @ x[:t]
        if t + 1 < n:
            num = acov[t + 1] - nrev @ acov[1 : t + 1]
        e = x[t] - pred
        ll += -0.5 * (_LOG_2PI + np.log(v) + e * e / v)
        rev[:t] = nrev
    return float(ll)


def _dl_simulate_impl(acov, z):
    n = z.shape[0]
    x = np.zeros(n)
    v = acov[0]
    x[0] = np.sqrt(v) * z[0]
    if n == 1:
        return x
    phi = np.zeros(n)
    rev = np.zeros(n)
    nphi = np.zeros(n)
    nrev = np.zeros(n)
    num = acov[1]
    for t in range(1, n):
        k = num / v
        v = v * (1.0 - k * k)
        nphi[t - 1] = k
        nrev[0] = k
        for i in range(t - 1):
            nphi[i] = phi[i] - k * rev[i]
            nrev[i + 1] = rev[i] - k * phi[i]
        pred = 0.0
        num = 0.0
        for i in range(t):
            pred += nrev[i] * x[i]
            num += nrev[i] * acov[i + 1]
        if t + 1 < n:
            num = acov[t + 1] - num
        x[t] = pred + np.sqrt(v) * z[t]
        phi, nphi = nphi, phi
        rev, nrev = nrev, rev
    return x


def _dl_simulate_np(acov, z):
    n = z.shape[0]
    x = np.zeros(n)
    v = acov[0]
    x[0] = np.sqrt(v) * z[0]
    if n == 1:
        return x
    rev = np.zeros(n)
    num = acov[1]
    for t in range(1, n):
        k = num / v
        v = v * (1.0 - k * k)
        nrev = np.empty(t)
        nrev[0] = k
        if t > 1:
            nrev[1:] = rev[: t - 1] - k * rev[: t - 1][::-1]
        pred = nrev @ x[:t]
        if t + 1 < n:
            num = acov[t + 1] - nrev @ acov[1 : t + 1]
        x[t] = pred + np.sqrt(v) * z[t]
        rev[:t] = nrev
    return x


# ---------------------------------------------------------------------------
# ARMA x fractional-integration spectral factor on a regular grid
#
# Returns (g0, h) where g(w) = (sig2/2pi) |theta(e^-iw)|^2 / |phi(e^-iw)|^2,
# g0 = g(0), and h(w_m) = (g(w_m) - g0) * (2 sin(w_m/2))^(-2d) with h[0] = 0.
# Subtracting g0 removes the fractional pole at w = 0 so the grid transform
# of h converges; the g0 part is added back in closed form by the caller.


def _arma_fi_grid_impl(M, sig2, d, ar, ma):
    two_pi = 2.0 * np.pi
    p = ar.shape[0]
    q = ma.shape[0]
    out = np.empty(M)
    # g(0): polynomials at z = 1
    tn = 1.0
    for j in range(q):
        tn += ma[j]
    td = 1.0
    for j in range(p):
        td -= ar[j]
    g0 = sig2 / two_pi * (tn * tn) / (td * td)
    out[0] = 0.0
    for m in range(1, M):
        w = two_pi * m / M
        c = np.cos(w)
        s = np.sin(w)
        # accumulate theta(e^-iw) and phi(e^-iw) via angle recurrences
        re_n = 1.0
        im_n = 0.0
        cj = 1.0
        sj = 0.0
        for j in range(q):
            cj, sj = cj * c + sj * s, sj * c - cj * s
            re_n += ma[j] * cj
            im_n += ma[j] * sj
        re_d = 1.0
        im_d = 0.0
        cj = 1.0
        sj = 0.0
        for j in range(p):
            cj, sj = cj * c + sj * s, sj * c - cj * s
            re_d -= ar[j] * cj
            im_d -= ar[j] * sj
        g = sig2 / two_pi * (re_n * re_n + im_n * im_n) / (re_d * re_d + im_d * im_d)
        out[m] = (g - g0) * (2.0 * np.sin(0.5 * w)) ** (-2.0 * d)
    return g0, out


def _arma_fi_grid_np(M, sig2, d, ar, ma):
    two_pi = 2.0 * np.pi
    w = two_pi * np.arange(M) / M
    z = np.exp(-1j * w)
    num = np.ones(M, dtype=np.complex128)
    zp = np.ones(M, dtype=np.complex128)
    for j in range(ma.shape[0]):
        zp = zp * z
        num += ma[j] * zp
    den = np.ones(M, dtype=np.complex128)
    zp = np.ones(M, dtype=np.complex128)
    for j in range(ar.shape[0]):
        zp = zp * z
        den -= ar[j] * zp
    g = sig2 / two_pi * np.abs(num) ** 2 / np.abs(den) ** 2
    g0 = float(g[0])
    out = np.zeros(M)
    out[1:] = (g[1:] - g0) * (2.0 * np.sin(0.5 * w[1:])) ** (-2.0 * d)
    return g0, out


if USE_NUMBA:
    _sig_opts = dict(cache=True, nogil=True)
    lasso_cd_path = njit(**_sig_opts)(_lasso_cd_path_impl)
    lasso_cd_gram = njit(**_sig_opts)(_lasso_cd_gram_impl)
    dl_loglike = njit(fastmath=True, **_sig_opts)(_dl_loglike_impl)
    dl_simulate = njit(fastmath=True, **_sig_opts)(_dl_simulate_impl)
    arma_fi_grid = njit(**_sig_opts)(_arma_fi_grid_impl)
else:
    lasso_cd_path = _lasso_cd_path_np
    lasso_cd_gram = _lasso_cd_gram_np
    dl_loglike = _dl_loglike_np
    dl_simulate = _dl_simulate_np
    arma_fi_grid = _arma_fi_grid_np

# Twins exported for the benchmark and for cross-path tests.
PAIRS = {
    "lasso_cd_path": (_lasso_cd_path_impl, _lasso_cd_path_np),
    "lasso_cd_gram": (_lasso_cd_gram_impl, _lasso_cd_gram_np),
    "dl_loglike": (_dl_loglike_impl, _dl_loglike_np),
    "dl_simulate": (_dl_simulate_impl, _dl_simulate_np),
    "arma_fi_grid": (_arma_fi_grid_impl, _arma_fi_grid_np),
}
