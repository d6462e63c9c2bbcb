"""Goodness of fit through the time-rescaling theorem."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaincc

from . import _jit
from .errors import DomainError, InsufficientDataError
from .kernels import APPROX_POWER_LAW, CUTOFF_POWER_LAW, EXPONENTIAL, OMORI, omori_soe
from .series import BackgroundProfile

__all__ = [
    "ResidualReport",
    "residual_transform",
    "uniformize",
    "ks_uniform_test",
    "kolmogorov_sf",
    "ljung_box_test",
    "default_lags",
    "residual_report",
]

OMORI_DIRECT_MAX_N = 2000


@dataclass
class ResidualReport:
    xi: np.ndarray
    u: np.ndarray
    ks_stat: float
    ks_pvalue: float
    lb_stat: float
    lb_pvalue: float
    lb_lags: int

    def passes(self, alpha=0.05):
        return self.ks_pvalue >= alpha and self.lb_pvalue >= alpha

    def summary(self):
        d = asdict(self)
        d.pop("xi")
        d.pop("u")
        d["n_residuals"] = int(self.xi.size)
        return d


def _compensator(times, kernel):
    """Per event, sum over strictly earlier events of the kernel mass on (t_j, t_i]."""
    if kernel.code in (EXPONENTIAL, APPROX_POWER_LAW):
        return _jit.soe_compensator(times, *kernel.soe())
    if kernel.code == OMORI:
        if times.size > OMORI_DIRECT_MAX_N:
            w, sc = omori_soe(kernel.c, kernel.theta, float(times[-1] - times[0]))
            return _jit.soe_compensator(times, w, sc)
        return _jit.direct_compensator_omori(times, kernel.c, kernel.theta)
    if kernel.code == CUTOFF_POWER_LAW:
        return _jit.direct_compensator_cutoff(times, kernel.tau0, kernel.epsilon)
    raise DomainError(f"unsupported kernel {kernel!r}")


def residual_transform(series, params):
    """Compensator at each event: background mass since the window start plus ``n`` times the kernel masses."""
    t = np.ascontiguousarray(series.times, dtype=float)
    mu = params.mu
    if isinstance(mu, BackgroundProfile):
        base = mu.cumulative(t) - mu.cumulative(series.window_start)
    else:
        base = mu * (t - series.window_start)
    if params.n == 0 or t.size == 0:
        return base
    return base + params.n * _compensator(t, params.kernel)


def uniformize(xi):
    """``U_i = 1 - exp(-(xi_i - xi_{i-1}))``; one fewer value than ``xi``."""
    xi = np.asarray(xi, dtype=float)
    gaps = np.diff(xi)
    if np.any(gaps < 0):
        raise DomainError("residuals must be nondecreasing")
    return -np.expm1(-gaps)


def kolmogorov_sf(lam, terms=100):
    """Survival function of the Kolmogorov distribution, ``2 sum (-1)^(k-1) exp(-2 k^2 lam^2)``."""
    if lam <= 0:
        return 1.0
    if lam < 0.2:
        # the alternating series converges slowly here and the value is 1 to double precision
        return 1.0
    k = np.arange(1, terms + 1)
    s = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * lam * lam))
    return float(min(max(s, 0.0), 1.0))


def ks_uniform_test(u):
    """One-sample KS test against Uniform[0, 1] with the asymptotic p-value."""
    u = np.sort(np.asarray(u, dtype=float))
    n = u.size
    if n < 10:
        raise InsufficientDataError(f"KS test needs at least 10 values, got {n}")
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - u)), float(np.max(u - (i - 1) / n)))
    sq = math.sqrt(n)
    return d, kolmogorov_sf(d * (sq + 0.12 + 0.11 / sq))


def default_lags(n_u):
    return max(1, min(20, n_u // 10))


def ljung_box_test(u, lags=None):
    """Ljung-Box portmanteau statistic on ``u`` with its chi-squared p-value."""
    u = np.asarray(u, dtype=float)
    n = u.size
    if lags is None:
        lags = default_lags(n)
    if not 1 <= lags < n:
        raise InsufficientDataError(f"need 1 <= lags < n, got lags={lags}, n={n}")
    x = u - u.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        raise DomainError("zero variance: autocorrelations are undefined")
    k = np.arange(1, lags + 1)
    rho = np.array([np.dot(x[j:], x[:-j]) for j in k]) / denom
    q = float(n * (n + 2) * np.sum(rho**2 / (n - k)))
    return q, float(gammaincc(lags / 2.0, q / 2.0))


def residual_report(series, params, lags=None):
    xi = residual_transform(series, params)
    u = uniformize(xi)
    ks, ksp = ks_uniform_test(u)
    if lags is None:
        lags = default_lags(u.size)
    lb, lbp = ljung_box_test(u, lags)
    return ResidualReport(xi, u, ks, ksp, lb, lbp, lags)
