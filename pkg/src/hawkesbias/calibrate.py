"""Maximum-likelihood calibration of the Hawkes process.

The kernel parameters are searched by a multi-start Nelder-Mead simplex in
log-parameter space.  For each candidate kernel the background rate is
eliminated through the stationarity relation ``mu*T + n*H1 = N`` and the
remaining one-dimensional (convex) problem in ``n`` is solved exactly.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from . import _jit
from .errors import (
    FitFailureError,
    InsufficientDataError,
    NonpositiveIntensityError,
    ParameterDomainError,
)
from .kernels import (
    CUTOFF_POWER_LAW,
    OMORI,
    Kernel,
    family_class,
    kernel_from_dict,
    omori_soe,
)
from .parallel import pmap

__all__ = [
    "h1_h2",
    "log_likelihood",
    "log_likelihood_gradient",
    "profile_cost",
    "ProfileCost",
    "MultiStartConfig",
    "StartRecord",
    "FitResult",
    "fit",
    "CostSurface",
    "GridConfig",
    "cost_surface",
    "DEFAULT_START_BOUNDS",
    "DEFAULT_SEARCH_BOUNDS",
]

log = logging.getLogger(__name__)

# multi-start grid bounds and (wider) simplex search bounds, by parameter name
DEFAULT_START_BOUNDS = {
    "tau": (1e-4, 1e2),
    "c": (1e-4, 1e2),
    "tau0": (1e-4, 1e2),
    "theta": (0.05, 5.0),
    "epsilon": (0.05, 5.0),
}
DEFAULT_SEARCH_BOUNDS = {
    "tau": (1e-7, 1e7),
    "c": (1e-7, 1e7),
    "tau0": (1e-7, 1e7),
    "theta": (1e-3, 20.0),
    "epsilon": (1e-3, 20.0),
}

OMORI_DIRECT_MAX_N = 1000
N_UPPER_CAP = 2.0
N_MARGIN = 1e-9


def _times(series):
    return np.ascontiguousarray(series.times, dtype=float)


def h1_h2(series, kernel, method="auto"):
    """Return ``(H1, H2)`` for ``kernel`` on ``series``.

    ``H1`` is the total kernel mass each event sends into the window,
    ``H2[i]`` the kernel sum over events strictly before ``t_i``.
    ``method`` is ``"auto"``, ``"recursive"`` or ``"direct"`` (brute force).
    """
    t = _times(series)
    T_end = series.window_end
    soe = kernel.soe()
    if method == "direct":
        H1 = float(np.sum(kernel.integral(T_end - t)))
        code, p, sc, lw = kernel.jit_args()
        return H1, _jit.direct_h2(t, code, p, sc, lw)
    if soe is not None:
        return _jit.soe_h1h2(t, T_end, *soe)
    H1 = float(np.sum(kernel.integral(T_end - t)))
    if kernel.code == OMORI and (method == "recursive" or t.size > OMORI_DIRECT_MAX_N):
        lag = float(t[-1] - t[0]) if t.size else 0.0
        w, sc = omori_soe(kernel.c, kernel.theta, lag)
        return H1, _jit.soe_h2(t, w, sc)
    code, p, sc, lw = kernel.jit_args()
    return H1, _jit.direct_h2(t, code, p, sc, lw)


def _intensities(series, mu, n, H2):
    lam = mu + n * H2
    bad = np.flatnonzero(~(lam > 0))
    if bad.size:
        raise NonpositiveIntensityError(int(bad[0]), float(lam[bad[0]]))
    return lam


def log_likelihood(series, mu, n, kernel, method="auto"):
    """``-mu*T - n*H1 + sum(log(mu + n*H2_i))``."""
    if mu < 0 or n < 0:
        raise ParameterDomainError("mu and n must be nonnegative")
    H1, H2 = h1_h2(series, kernel, method)
    lam = _intensities(series, mu, n, H2)
    return float(-mu * series.T - n * H1 + np.sum(np.log(lam)))


def log_likelihood_gradient(series, mu, n, kernel, method="auto"):
    """Analytic ``(d logL / d mu, d logL / d n)``."""
    H1, H2 = h1_h2(series, kernel, method)
    lam = _intensities(series, mu, n, H2)
    return float(-series.T + np.sum(1.0 / lam)), float(-H1 + np.sum(H2 / lam))


@dataclass(frozen=True)
class ProfileCost:
    value: float
    mu_star: float
    n_star: float
    H1: float
    n_max: float


def _profile_from_h(N, T, H1, H2, n0=-1.0):
    a = N / T
    coef = H2 - H1 / T
    n_hi = N / H1 if H1 > 0 else math.inf
    neg = coef < 0
    if np.any(neg):
        n_hi = min(n_hi, float(np.min(a / -coef[neg])))
    n_hi = min(n_hi, N_UPPER_CAP) * (1.0 - N_MARGIN)
    n_star, g = _jit.inner_minimize(coef, a, n_hi, n0)
    mu_star = max((N - n_star * H1) / T, 0.0)
    return ProfileCost(N + g, mu_star, n_star, H1, n_hi)


def profile_cost(series, kernel, method="auto", n0=None):
    """Cost ``S(psi)``: the negative log-likelihood minimized over ``(mu, n)`` at fixed kernel.

    Minimizes ``N - sum(log(N/T + n*(T*H2_i - H1)/T))`` over the admissible
    interval of ``n`` (all log arguments positive, implied ``mu >= 0``,
    ``n <= 2``) and returns the value with the implied ``(mu*, n*)``.
    ``n0`` only seeds the inner Newton iteration.
    """
    N = len(series)
    if N < 3:
        raise InsufficientDataError(f"need at least 3 events, got {N}")
    H1, H2 = h1_h2(series, kernel, method)
    return _profile_from_h(N, series.T, H1, H2, -1.0 if n0 is None else float(n0))


@dataclass
class MultiStartConfig:
    """Multi-start settings.

    ``grid_size`` points per kernel parameter, log-spaced within
    ``start_bounds``; the simplex runs in log space within
    ``search_bounds``.  With ``top_k`` set, the cost is first evaluated on
    the whole grid and the simplex is launched only from the ``top_k``
    lowest nodes.
    """

    grid_size: int = 5
    start_bounds: dict = field(default_factory=lambda: dict(DEFAULT_START_BOUNDS))
    search_bounds: dict = field(default_factory=lambda: dict(DEFAULT_SEARCH_BOUNDS))
    top_k: int | None = None
    xatol: float = 1e-6
    fatol: float = 1e-12  # relative to the cost at the start point
    maxiter: int = 500
    initial_step: float = 0.5
    jobs: int = 1

    def grid(self, names):
        axes = []
        for name in names:
            lo, hi = self.start_bounds[name]
            axes.append(np.geomspace(lo, hi, self.grid_size))
        return [dict(zip(names, pt)) for pt in itertools.product(*axes)]

    def to_dict(self):
        return {
            "grid_size": self.grid_size,
            "start_bounds": {k: list(v) for k, v in self.start_bounds.items()},
            "search_bounds": {k: list(v) for k, v in self.search_bounds.items()},
            "top_k": self.top_k,
            "xatol": self.xatol,
            "fatol": self.fatol,
            "maxiter": self.maxiter,
            "initial_step": self.initial_step,
        }


@dataclass
class StartRecord:
    start: dict
    value: float
    converged: bool
    psi: dict
    n: float
    mu: float
    nfev: int = 0
    launched: bool = True

    def to_dict(self):
        return {
            "start": self.start,
            "value": self.value,
            "converged": self.converged,
            "psi": self.psi,
            "n": self.n,
            "mu": self.mu,
            "nfev": self.nfev,
            "launched": self.launched,
        }


@dataclass
class FitResult:
    mu_hat: float
    n_hat: float
    kernel: Kernel
    neg_log_lik: float
    starts: list
    best_start_index: int
    N: int
    T: float
    H1: float

    @property
    def psi_hat(self):
        return {k: getattr(self.kernel, k) for k in self.kernel.fit_params}

    def stationarity_residual(self):
        return abs(self.mu_hat * self.T + self.n_hat * self.H1 - self.N)

    def to_dict(self):
        return {
            "mu_hat": self.mu_hat,
            "n_hat": self.n_hat,
            "psi_hat": self.psi_hat,
            "kernel": self.kernel.to_dict(),
            "neg_log_lik": self.neg_log_lik,
            "N": self.N,
            "T": self.T,
            "H1": self.H1,
            "best_start_index": self.best_start_index,
            "starts": [s.to_dict() for s in self.starts],
        }

    @classmethod
    def from_dict(cls, d):
        starts = [StartRecord(**s) for s in d.get("starts", [])]
        return cls(
            d["mu_hat"], d["n_hat"], kernel_from_dict(d["kernel"]), d["neg_log_lik"],
            starts, d.get("best_start_index", 0), d["N"], d["T"], d["H1"],
        )

    def params(self):
        from .simulate import HawkesParams

        return HawkesParams(self.mu_hat, self.n_hat, self.kernel)


class _Objective:
    """Profile cost as a function of log kernel parameters."""

    def __init__(self, series, cls, names, fixed):
        self.series, self.cls, self.names, self.fixed = series, cls, names, fixed
        self.nfev = 0
        self.n_last = None

    def kernel(self, x):
        return self.cls(**dict(zip(self.names, np.exp(np.asarray(x, float)))), **self.fixed)

    def evaluate(self, x):
        self.nfev += 1
        try:
            pc = profile_cost(self.series, self.kernel(x), n0=self.n_last)
        except (ParameterDomainError, FloatingPointError, ZeroDivisionError):
            return None
        if 0 < pc.n_star < pc.n_max:
            self.n_last = pc.n_star
        return pc

    def __call__(self, x):
        pc = self.evaluate(x)
        if pc is None or not math.isfinite(pc.value):
            return math.inf
        return pc.value


def _local_search(obj, x0, cfg):
    names = obj.names
    lb = np.log([cfg.search_bounds[k][0] for k in names])
    ub = np.log([cfg.search_bounds[k][1] for k in names])
    x0 = np.clip(x0, lb, ub)
    d = len(names)
    simplex = np.vstack([x0] + [x0 + cfg.initial_step * np.eye(d)[i] for i in range(d)])
    simplex = np.clip(simplex, lb, ub)
    # keep the simplex nondegenerate when x0 sits on an upper bound
    for i in range(d):
        if simplex[i + 1, i] == simplex[0, i]:
            simplex[i + 1, i] = x0[i] - cfg.initial_step
    obj.nfev = 0
    f0 = obj(x0)
    fatol = cfg.fatol * max(1.0, abs(f0)) if math.isfinite(f0) else cfg.fatol
    res = minimize(
        obj,
        x0,
        method="Nelder-Mead",
        bounds=list(zip(lb, ub)),
        options={
            "initial_simplex": simplex,
            "xatol": cfg.xatol,
            "fatol": fatol,
            "maxiter": cfg.maxiter,
            "maxfev": 4 * cfg.maxiter,
        },
    )
    return res, obj.nfev


def _run_start(args):
    series, cls, names, fixed, start, cfg = args
    obj = _Objective(series, cls, names, fixed)
    x0 = np.log([start[k] for k in names])
    res, nfev = _local_search(obj, x0, cfg)
    pc = obj.evaluate(res.x)
    psi = dict(zip(names, np.exp(res.x).tolist()))
    if pc is None or not math.isfinite(pc.value):
        return StartRecord(start, math.inf, False, psi, math.nan, math.nan, nfev)
    return StartRecord(start, pc.value, bool(res.success), psi, pc.n_star, pc.mu_star, nfev)


def fit(series, kernel_family, config=None, **fixed):
    """Maximum-likelihood fit of ``(mu, n, psi)`` with multi-start simplex search.

    ``kernel_family`` is a family name (``"exponential"``, ``"omori"``,
    ``"approx_power_law"``) or kernel class; ``fixed`` passes non-calibrated
    kernel settings (``M``, ``m``).  Ties in the attained cost are broken in
    favour of the smaller ``n``.
    """
    cfg = config or MultiStartConfig()
    cls = family_class(kernel_family) if isinstance(kernel_family, str) else kernel_family
    if cls.code == CUTOFF_POWER_LAW:
        raise ParameterDomainError("the cutoff power law is not a calibration target")
    N = len(series)
    if N < 10:
        raise InsufficientDataError(f"fit needs at least 10 events, got {N}")
    names = cls.fit_params
    starts = cfg.grid(names)

    launched = list(range(len(starts)))
    records = [None] * len(starts)
    if cfg.top_k is not None and cfg.top_k < len(starts):
        obj = _Objective(series, cls, names, fixed)
        grid_vals = [obj(np.log([s[k] for k in names])) for s in starts]
        launched = sorted(np.argsort(grid_vals, kind="stable")[: cfg.top_k].tolist())
        for i, s in enumerate(starts):
            if i not in launched:
                records[i] = StartRecord(s, grid_vals[i], False, dict(s), math.nan, math.nan, 1, False)

    jobs = [(series, cls, names, fixed, starts[i], cfg) for i in launched]
    for i, rec in zip(launched, pmap(_run_start, jobs, cfg.jobs)):
        records[i] = rec

    cands = [i for i in launched if math.isfinite(records[i].value)]
    if not cands:
        raise FitFailureError("no start produced an admissible fit", [r.to_dict() for r in records])
    best_val = min(records[i].value for i in cands)
    tol = 1e-9 * max(1.0, abs(best_val))
    best = min((i for i in cands if records[i].value <= best_val + tol), key=lambda i: records[i].n)

    kernel = cls(**records[best].psi, **fixed)
    pc = profile_cost(series, kernel)
    result = FitResult(
        mu_hat=pc.mu_star,
        n_hat=pc.n_star,
        kernel=kernel,
        neg_log_lik=pc.value,
        starts=records,
        best_start_index=best,
        N=N,
        T=series.T,
        H1=pc.H1,
    )
    if result.stationarity_residual() > 1e-6 * N:
        raise FitFailureError(f"stationarity relation violated by {result.stationarity_residual():.3g}")
    return result


@dataclass
class GridConfig:
    axes: dict  # parameter name -> (lo, hi, count), log-spaced
    jobs: int = 1

    @classmethod
    def default(cls, names, count=25):
        b = DEFAULT_START_BOUNDS
        return cls({k: (b[k][0], b[k][1], count) for k in names})


@dataclass
class CostSurface:
    names: tuple
    psi1: np.ndarray
    psi2: np.ndarray
    values: np.ndarray  # shape (len(psi1), len(psi2)); inf where inadmissible
    mu_star: np.ndarray
    n_star: np.ndarray
    admissible: np.ndarray

    def argmin(self):
        v = np.where(self.admissible, self.values, np.inf)
        return np.unravel_index(int(np.argmin(v)), v.shape)

    def local_minima(self, rtol=1e-12):
        """Grid nodes no higher than all admissible 8-neighbours, sorted by value.

        A connected plateau of equal values (e.g. the ``n* = 0`` region, where
        the cost does not depend on the kernel) counts once, at its first node.
        """
        v = np.where(self.admissible, self.values, np.inf)
        n1, n2 = v.shape
        seen = np.zeros(v.shape, bool)
        out = []
        for i in range(n1):
            for j in range(n2):
                if seen[i, j] or not np.isfinite(v[i, j]):
                    continue
                tol = rtol * max(1.0, abs(v[i, j]))
                # flood the plateau through neighbours within tol
                stack, members, is_min = [(i, j)], [], True
                seen[i, j] = True
                while stack:
                    a, b = stack.pop()
                    members.append((a, b))
                    for x in range(max(a - 1, 0), min(a + 2, n1)):
                        for y in range(max(b - 1, 0), min(b + 2, n2)):
                            if v[x, y] < v[i, j] - tol:
                                is_min = False
                            elif abs(v[x, y] - v[i, j]) <= tol and not seen[x, y]:
                                seen[x, y] = True
                                stack.append((x, y))
                if is_min:
                    out.append(min(members))
        return sorted(out, key=lambda ij: v[ij])

    def rows(self):
        for i, a in enumerate(self.psi1):
            for j, b in enumerate(self.psi2):
                yield a, b, self.values[i, j], self.mu_star[i, j], self.n_star[i, j]

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.names[0], self.names[1], "S", "mu_star", "n_star"])
            for row in self.rows():
                w.writerow([format(x, ".17g") for x in row])


def _surface_node(args):
    series, cls, kw, fixed = args
    try:
        pc = profile_cost(series, cls(**kw, **fixed))
    except ParameterDomainError:
        return math.inf, math.nan, math.nan
    return pc.value, pc.mu_star, pc.n_star


def cost_surface(series, kernel_family, grid_config=None, **fixed):
    """Evaluate the profile cost on a log-spaced grid over a two-parameter kernel family."""
    cls = family_class(kernel_family) if isinstance(kernel_family, str) else kernel_family
    names = cls.fit_params
    if len(names) != 2 or cls.code == CUTOFF_POWER_LAW:
        raise ParameterDomainError(f"{cls.family} is not a two-parameter calibration family")
    gc = grid_config or GridConfig.default(names)
    axes = [np.geomspace(*gc.axes[k][:2], int(gc.axes[k][2])) for k in names]
    jobs = [(series, cls, {names[0]: a, names[1]: b}, fixed) for a in axes[0] for b in axes[1]]
    out = np.array(pmap(_surface_node, jobs, gc.jobs), dtype=float).reshape(len(axes[0]), len(axes[1]), 3)
    values = out[..., 0]
    return CostSurface(names, axes[0], axes[1], values, out[..., 1], out[..., 2], np.isfinite(values))
