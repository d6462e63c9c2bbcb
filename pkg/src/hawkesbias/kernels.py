"""Normalized memory kernels h(t) of the Hawkes process.

Four families are provided: exponential, Omori (modified Omori-Utsu law),
power law with a sharp cutoff, and the sum-of-exponentials approximation of
the cutoff power law.  Every kernel integrates to one on [0, inf) and is zero
for negative arguments.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import ClassVar, NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError, ParameterDomainError

__all__ = [
    "Kernel",
    "Exponential",
    "Omori",
    "CutoffPowerLaw",
    "ApproxPowerLaw",
    "ApproxPLConstants",
    "derive_constants",
    "evaluate",
    "integral",
    "characteristic_time",
    "kernel_from_dict",
    "family_class",
    "omori_soe",
    "FAMILY_ALIASES",
]

EXPONENTIAL, OMORI, CUTOFF_POWER_LAW, APPROX_POWER_LAW = 0, 1, 2, 3

FAMILY_ALIASES = {
    "exponential": "exponential",
    "exp": "exponential",
    "omori": "omori",
    "power_law": "omori",
    "cutoff_power_law": "cutoff_power_law",
    "cutoff_pl": "cutoff_power_law",
    "approx_power_law": "approx_power_law",
    "approx_pl": "approx_power_law",
}


def _positive(name, value):
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ParameterDomainError(f"{name} must be positive and finite, got {value!r}")
    return value


class ApproxPLConstants(NamedTuple):
    S: float
    Z: float
    xi: np.ndarray  # xi[0] is the short cutoff scale, xi[1:] are the M power-law scales


def derive_constants(tau0, epsilon, M=15, m=5.0):
    """Constants S, Z and time-scales of the sum-of-exponentials kernel.

    ``S`` cancels the kernel at the origin and ``Z`` normalizes it to unit
    mass.  ``xi`` holds ``tau0 * m**i`` for ``i = -1 .. M-1``.
    """
    tau0 = _positive("tau0", tau0)
    epsilon = _positive("epsilon", epsilon)
    if int(M) != M or M < 2:
        raise ParameterDomainError(f"M must be an integer >= 2, got {M!r}")
    m = float(m)
    if not (m > 1 and math.isfinite(m)):
        raise ParameterDomainError(f"m must be > 1, got {m!r}")
    M = int(M)
    log_xi = math.log(tau0) + np.arange(-1, M) * math.log(m)
    xi = np.exp(log_xi)
    S = float(np.exp(logsumexp(-(1 + epsilon) * log_xi[1:])))
    Z = float(np.sum(np.exp(-epsilon * log_xi[1:])) - S * xi[0])
    if not Z > 0:
        raise ParameterDomainError(f"normalization Z={Z!r} is not positive")
    return ApproxPLConstants(S, Z, xi)


@dataclass(frozen=True)
class Kernel:
    family: ClassVar[str]
    code: ClassVar[int]
    # parameters that are calibrated, and the subset carrying units of time
    fit_params: ClassVar[tuple[str, ...]]
    time_params: ClassVar[tuple[str, ...]]

    def evaluate(self, t):
        raise NotImplementedError

    def integral(self, t):
        raise NotImplementedError

    def tail(self, t):
        """Mass beyond ``t``, i.e. ``1 - integral(t)`` without cancellation."""
        raise NotImplementedError

    def characteristic_time(self, q):
        raise NotImplementedError

    def sample_delays(self, rng, size):
        """Draw ``size`` i.i.d. offspring delays with density h."""
        raise NotImplementedError

    @property
    def min_time_scale(self):
        return min(getattr(self, p) for p in self.time_params)

    def params(self):
        return {k: v for k, v in asdict(self).items() if not k.startswith("_")}

    def to_dict(self):
        return {"family": self.family, **self.params()}

    def with_params(self, **kw):
        return replace(self, **kw)

    def jit_args(self):
        """``(code, p, scales, logw)`` consumed by the compiled helpers."""
        empty = np.empty(0)
        return self.code, np.array([getattr(self, k) for k in self.fit_params], float), empty, empty

    def soe(self):
        """Exact sum-of-exponentials form ``(weights, scales)``, or None."""
        return None

    def _check_q(self, q):
        q = float(q)
        if not 0 < q < 1:
            raise DomainError(f"q must lie in (0, 1), got {q!r}")
        return q


def _as_array(t):
    return np.asarray(t, dtype=float)


def _check_nonnegative(t):
    t = _as_array(t)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError("integral requires t >= 0")
    return t


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


@dataclass(frozen=True)
class Exponential(Kernel):
    tau: float
    family: ClassVar[str] = "exponential"
    code: ClassVar[int] = EXPONENTIAL
    fit_params: ClassVar[tuple[str, ...]] = ("tau",)
    time_params: ClassVar[tuple[str, ...]] = ("tau",)

    def __post_init__(self):
        object.__setattr__(self, "tau", _positive("tau", self.tau))

    def evaluate(self, t):
        x = _as_array(t)
        out = np.where(x >= 0, np.exp(-np.maximum(x, 0) / self.tau) / self.tau, 0.0)
        return _out(out, t)

    def integral(self, t):
        x = _check_nonnegative(t)
        return _out(-np.expm1(-x / self.tau), t)

    def tail(self, t):
        x = _check_nonnegative(t)
        return _out(np.exp(-x / self.tau), t)

    def characteristic_time(self, q):
        return -self.tau * math.log1p(-self._check_q(q))

    def sample_delays(self, rng, size):
        return rng.exponential(self.tau, size)

    def soe(self):
        return np.array([1.0 / self.tau]), np.array([self.tau])


@dataclass(frozen=True)
class Omori(Kernel):
    c: float
    theta: float
    family: ClassVar[str] = "omori"
    code: ClassVar[int] = OMORI
    fit_params: ClassVar[tuple[str, ...]] = ("c", "theta")
    time_params: ClassVar[tuple[str, ...]] = ("c",)

    def __post_init__(self):
        object.__setattr__(self, "c", _positive("c", self.c))
        object.__setattr__(self, "theta", _positive("theta", self.theta))

    def _log_survival(self, x):
        return -self.theta * np.log1p(x / self.c)

    def evaluate(self, t):
        x = _as_array(t)
        xp = np.maximum(x, 0)
        val = self.theta / self.c * np.exp(-(1 + self.theta) * np.log1p(xp / self.c))
        return _out(np.where(x >= 0, val, 0.0), t)

    def integral(self, t):
        x = _check_nonnegative(t)
        return _out(-np.expm1(self._log_survival(x)), t)

    def tail(self, t):
        x = _check_nonnegative(t)
        return _out(np.exp(self._log_survival(x)), t)

    def characteristic_time(self, q):
        q = self._check_q(q)
        return self.c * math.expm1(-math.log1p(-q) / self.theta)

    def sample_delays(self, rng, size):
        u = rng.random(size)
        return self.c * np.expm1(-np.log1p(-u) / self.theta)


@dataclass(frozen=True)
class CutoffPowerLaw(Kernel):
    tau0: float
    epsilon: float
    family: ClassVar[str] = "cutoff_power_law"
    code: ClassVar[int] = CUTOFF_POWER_LAW
    fit_params: ClassVar[tuple[str, ...]] = ("tau0", "epsilon")
    time_params: ClassVar[tuple[str, ...]] = ("tau0",)

    def __post_init__(self):
        object.__setattr__(self, "tau0", _positive("tau0", self.tau0))
        object.__setattr__(self, "epsilon", _positive("epsilon", self.epsilon))

    def evaluate(self, t):
        x = _as_array(t)
        xs = np.maximum(x, self.tau0)
        val = self.epsilon / self.tau0 * np.exp(-(1 + self.epsilon) * np.log(xs / self.tau0))
        return _out(np.where(x >= self.tau0, val, 0.0), t)

    def integral(self, t):
        x = _check_nonnegative(t)
        xs = np.maximum(x, self.tau0)
        return _out(-np.expm1(-self.epsilon * np.log(xs / self.tau0)), t)

    def tail(self, t):
        x = _check_nonnegative(t)
        xs = np.maximum(x, self.tau0)
        return _out(np.exp(-self.epsilon * np.log(xs / self.tau0)), t)

    def characteristic_time(self, q):
        q = self._check_q(q)
        return self.tau0 * math.exp(-math.log1p(-q) / self.epsilon)

    def sample_delays(self, rng, size):
        u = rng.random(size)
        return self.tau0 * np.exp(-np.log1p(-u) / self.epsilon)


@dataclass(frozen=True)
class ApproxPowerLaw(Kernel):
    tau0: float
    epsilon: float
    M: int = 15
    m: float = 5.0
    _constants: ApproxPLConstants = field(init=False, repr=False, compare=False)
    _logw: np.ndarray = field(init=False, repr=False, compare=False)
    family: ClassVar[str] = "approx_power_law"
    code: ClassVar[int] = APPROX_POWER_LAW
    fit_params: ClassVar[tuple[str, ...]] = ("tau0", "epsilon")
    time_params: ClassVar[tuple[str, ...]] = ("tau0",)

    def __post_init__(self):
        const = derive_constants(self.tau0, self.epsilon, self.M, self.m)
        object.__setattr__(self, "tau0", float(self.tau0))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "_constants", const)
        # log of xi_i^-(1+eps) / Z, the positive mixture coefficients
        log_xi = np.log(const.xi[1:])
        object.__setattr__(self, "_logw", -(1 + self.epsilon) * log_xi - math.log(const.Z))

    @property
    def constants(self):
        return self._constants

    @property
    def min_time_scale(self):
        return float(self._constants.xi[0])

    def _terms(self, x):
        # x has shape (k,); returns the per-scale nonnegative contributions, shape (k, M)
        xi = self._constants.xi
        inner = -np.expm1(-x[:, None] * (1.0 / xi[0] - 1.0 / xi[1:])[None, :])
        return np.exp(self._logw[None, :] - x[:, None] / xi[None, 1:]) * inner

    def evaluate(self, t):
        x = np.atleast_1d(_as_array(t)).ravel()
        val = self._terms(np.maximum(x, 0)).sum(axis=1)
        val = np.where(x >= 0, val, 0.0)
        return float(val[0]) if np.ndim(t) == 0 else val.reshape(np.shape(t))

    def _mass(self, x, survival):
        xi = self._constants.xi
        S, Z = self._constants.S, self._constants.Z
        pos_w = np.exp(-self.epsilon * np.log(xi[1:])) / Z  # xi_i^-eps / Z
        neg_w = S * xi[0] / Z
        if survival:
            pos = np.exp(-x[:, None] / xi[None, 1:])
            neg = np.exp(-x / xi[0])
        else:
            pos = -np.expm1(-x[:, None] / xi[None, 1:])
            neg = -np.expm1(-x / xi[0])
        return (pos * pos_w[None, :]).sum(axis=1) - neg_w * neg

    def integral(self, t):
        x = np.atleast_1d(_check_nonnegative(t)).ravel()
        val = np.clip(self._mass(x, survival=False), 0.0, 1.0)
        return float(val[0]) if np.ndim(t) == 0 else val.reshape(np.shape(t))

    def tail(self, t):
        x = np.atleast_1d(_check_nonnegative(t)).ravel()
        val = np.clip(self._mass(x, survival=True), 0.0, 1.0)
        return float(val[0]) if np.ndim(t) == 0 else val.reshape(np.shape(t))

    def characteristic_time(self, q):
        q = self._check_q(q)
        lo = self.min_time_scale
        while self.integral(lo) > q:
            lo /= 2
        hi = 2 * lo
        while self.integral(hi) < q:
            lo, hi = hi, 2 * hi
        # bisection in log-time
        a, b = math.log(lo), math.log(hi)
        while b - a > 1e-13 * max(1.0, abs(b)):
            mid = 0.5 * (a + b)
            if self.integral(math.exp(mid)) < q:
                a = mid
            else:
                b = mid
        return math.exp(0.5 * (a + b))

    def sample_delays(self, rng, size):
        # composition from the positive exponential mixture, then rejection
        # against the short-time cutoff term; proposal and target share tails
        xi = self._constants.xi
        mix = np.exp(-self.epsilon * np.log(xi[1:]))
        mix /= mix.sum()
        out = np.empty(size)
        todo = np.arange(size)
        while todo.size:
            comp = rng.choice(len(mix), size=todo.size, p=mix)
            t = rng.exponential(xi[1:][comp])
            logp = self._logw[None, :] - t[:, None] / xi[None, 1:]
            shift = logp.max(axis=1, keepdims=True)
            p = np.exp(logp - shift)
            inner = -np.expm1(-t[:, None] * (1.0 / xi[0] - 1.0 / xi[1:])[None, :])
            accept_prob = (p * inner).sum(axis=1) / p.sum(axis=1)
            ok = rng.random(todo.size) < accept_prob
            out[todo[ok]] = t[ok]
            todo = todo[~ok]
        return out

    def soe(self):
        xi = self._constants.xi
        w_pos = np.exp(self._logw)
        weights = np.concatenate([[-w_pos.sum()], w_pos])
        return weights, xi.copy()

    def jit_args(self):
        p = np.array([self.tau0, self.epsilon], float)
        return self.code, p, self._constants.xi.copy(), np.concatenate([[0.0], self._logw])

    def params(self):
        return {"tau0": self.tau0, "epsilon": self.epsilon, "M": self.M, "m": self.m}


_FAMILIES = {cls.family: cls for cls in (Exponential, Omori, CutoffPowerLaw, ApproxPowerLaw)}


def family_class(name):
    try:
        return _FAMILIES[FAMILY_ALIASES[name.lower()]]
    except KeyError:
        raise ParameterDomainError(f"unknown kernel family {name!r}") from None


def kernel_from_dict(d):
    d = dict(d)
    cls = family_class(d.pop("family"))
    return cls(**d)


def evaluate(kernel, t):
    return kernel.evaluate(t)


def integral(kernel, t):
    return kernel.integral(t)


def characteristic_time(kernel, q):
    return kernel.characteristic_time(q)


def omori_soe(c, theta, max_lag, eta=0.35, trunc=32.0):
    """Sum-of-exponentials quadrature of the Omori kernel on ``[0, max_lag]``.

    Uses the Laplace representation of ``(x + c)^-(1+theta)`` discretized by
    the trapezoidal rule in log-rate, which converges geometrically.  The
    relative error is about 1e-12 for lags up to ``max_lag``.
    """
    a = 1.0 + theta
    eta = eta * min(1.0, math.sqrt(1.5 / a))
    # v = c * exp(u) where the integrand has fallen by exp(-trunc) at lag 0
    target = a * math.log(a) - a - trunc
    v = a + trunc
    for _ in range(60):
        g = a * math.log(v) - v - target
        step = g / (a / v - 1.0)
        v -= step
        if abs(step) < 1e-12 * v:
            break
    u_hi = math.log(v / c)
    u_lo = math.log(a / (c + max(max_lag, 0.0))) - (trunc + 2.0) / a
    u = np.arange(u_lo, u_hi + eta, eta)
    logw = math.log(theta) + theta * math.log(c) - gammaln(a) + math.log(eta) + a * u - c * np.exp(u)
    # ascending scales
    return np.exp(logw)[::-1].copy(), np.exp(-u)[::-1].copy()
