"""Monte-Carlo bias studies on synthetic data.

Each experiment takes an :class:`ExperimentConfig`, fans independent
realizations out over a worker pool and reduces them (ordered by seed) into a
:class:`SweepResult`.  Every realization draws its randomness from a
``SeedSequence`` keyed by the seed base and the realization's coordinates, so
results do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibrate import GridConfig, MultiStartConfig, cost_surface, fit
from .kernels import ApproxPowerLaw, Exponential, Omori, family_class, kernel_from_dict
from .parallel import pmap
from .preprocess import bundle, concatenate, inject_outliers, randomize
from .series import BackgroundProfile
from .simulate import HawkesParams, simulate_branching, simulate_hawkes, simulate_poisson

__all__ = [
    "ExperimentConfig",
    "SweepResult",
    "EXPERIMENTS",
    "run_experiment",
    "exp_outlier_bias",
    "exp_kernel_misspec",
    "exp_edge_effect",
    "exp_edge_rate_curves",
    "exp_bundling",
    "exp_bundling_asymptote",
    "exp_regime_shift",
    "exp_poisson_criticality",
    "quantile_table",
    "exp_cost_surface",
    "daily_blocks",
    "derive_seed",
    "scale_audit",
]

log = logging.getLogger(__name__)

DAY_SECONDS = 6.25 * 3600


def derive_seed(base, *keys):
    """Integer seed for the realization at ``keys`` under ``base``."""
    words = [int(base)] + [int(k) for k in keys]
    return int(np.random.SeedSequence(words).generate_state(2, np.uint64)[0] >> np.uint64(1))


def _key(x):
    """Stable integer key for a float sweep value."""
    return int(round(float(x) * 1e6))


@dataclass
class ExperimentConfig:
    """Settings shared by all experiments.

    ``T`` and ``burn_in`` default to each experiment's reference protocol
    when None; ``scale`` multiplies the default burn-in.  ``params`` holds
    experiment-specific overrides (sweep axes, generator parameters).
    """

    experiment: str = ""
    realizations: int = 20
    T: float | None = None
    burn_in: float | None = None
    scale: float = 1.0
    seed: int = 0
    jobs: int = 1
    multistart: MultiStartConfig = field(default_factory=MultiStartConfig)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if not 0 < self.scale <= 1:
            raise ValueError("scale must lie in (0, 1]")

    def get(self, key, default):
        return self.params.get(key, default)

    def window(self, T_default, burn_default, burn_cap=None):
        T = float(self.T if self.T is not None else T_default)
        if self.burn_in is not None:
            burn = float(self.burn_in)
        else:
            burn = burn_default * self.scale
            if burn_cap is not None:
                burn = min(burn, burn_cap)
        return T, burn

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "realizations": self.realizations,
            "T": self.T,
            "burn_in": self.burn_in,
            "scale": self.scale,
            "seed": self.seed,
            "multistart": self.multistart.to_dict(),
            "params": _jsonable(self.params),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


@dataclass
class SweepResult:
    """Per-point aggregates (``rows``) and the per-realization records (``runs``)."""

    axes: tuple
    rows: list
    runs: list
    metadata: dict = field(default_factory=dict)

    def select(self, **where):
        return [r for r in self.rows if all(_match(r.get(k), v) for k, v in where.items())]

    def value(self, column="n_mean", **where):
        rows = self.select(**where)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {where}")
        return rows[0][column]

    def to_csv(self, path):
        _write_rows(path, self.rows)

    def runs_to_csv(self, path):
        _write_rows(path, self.runs)

    def write(self, path):
        """CSV of the aggregates plus a ``.meta.json`` sidecar."""
        path = Path(path)
        self.to_csv(path)
        meta_path = path.with_suffix(".meta.json")
        meta_path.write_text(json.dumps(_jsonable(self.metadata), indent=2, sort_keys=True) + "\n")
        return path, meta_path


def _match(a, b):
    if isinstance(b, float) or isinstance(a, float):
        try:
            return math.isclose(float(a), float(b), rel_tol=1e-9, abs_tol=1e-12)
        except (TypeError, ValueError):
            return False
    return a == b


def _write_rows(path, rows):
    cols = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (format(v, ".10g") if isinstance(v, float) else v) for k, v in r.items()})


def _fit_record(series, family, msc, **fixed):
    res = fit(series, family, msc, **fixed)
    rec = {
        "n_hat": res.n_hat,
        "mu_hat": res.mu_hat,
        "N": res.N,
        "T": res.T,
        "stationarity": res.stationarity_residual() / res.N,
    }
    for k, v in res.psi_hat.items():
        rec[f"{k}_hat"] = v
    return rec


def _aggregate(axes, runs, config, extra_meta=None, t0=None):
    groups = {}
    for r in runs:
        groups.setdefault(tuple(r[a] for a in axes), []).append(r)
    rows = []
    for key, rs in groups.items():
        row = dict(zip(axes, key))
        n = np.array([r["n_hat"] for r in rs], float)
        row["n_mean"] = float(n.mean())
        row["n_std"] = float(n.std(ddof=1)) if n.size > 1 else 0.0
        for col in sorted({c for r in rs for c in r if c.endswith("_hat") and c != "n_hat"}):
            row[col.replace("_hat", "_mean")] = float(np.mean([r[col] for r in rs if col in r]))
        row["R"] = len(rs)
        rows.append(row)
    meta = {
        "config": config.to_dict(),
        "max_stationarity_residual": max((r["stationarity"] for r in runs), default=0.0),
        "wall_seconds": None if t0 is None else time.time() - t0,
    }
    meta.update(extra_meta or {})
    return SweepResult(tuple(axes), rows, runs, meta)


def _kernel(spec):
    if isinstance(spec, dict):
        return kernel_from_dict(spec)
    return spec


def _simulate(params, T, burn, seed):
    return simulate_hawkes(params, T, burn, seed, method="branching")


# ---------------------------------------------------------------- outliers

def _outlier_task(args):
    kspec, mu, n, T, burn, rep, seed, grid, msc = args
    kernel = _kernel(kspec)
    series = _simulate(HawkesParams(mu, n, kernel), T, burn, seed)
    out = []
    for j, (M, fraction) in enumerate(grid):
        s = inject_outliers(series, fraction, M, seed=derive_seed(seed, j + 1)) if fraction > 0 else series
        rec = _fit_record(s, kernel.family, msc)
        rec.update(kernel=kernel.family, M=M, fraction=fraction, rep=rep)
        out.append(rec)
    return out


def exp_outlier_bias(config):
    """Branching-ratio bias from a few injected long durations, per kernel, multiplier and fraction."""
    t0 = time.time()
    kernels = config.get("kernels", [Exponential(0.1), Omori(0.1, 0.5), ApproxPowerLaw(0.1, 0.5)])
    mu, n = config.get("mu", 0.3), config.get("n", 0.7)
    fractions = config.get("fractions", [0.0, 0.0017, 0.005, 0.01, 0.02])
    multipliers = config.get("multipliers", [1, 2, 5])
    # simulated on (0, 1.1e5] with (0, 1e5] burned: a 1e4 s calibration window
    T, burn = config.window(1e4, 1e5)
    grid = [(M, f) for M in multipliers for f in fractions]
    tasks = []
    for ki, k in enumerate(kernels):
        k = _kernel(k)
        for rep in range(config.realizations):
            seed = derive_seed(config.seed, 1, ki, rep)
            tasks.append((k, mu, n, T, burn, rep, seed, grid, config.multistart))
    runs = [r for batch in pmap(_outlier_task, tasks, config.jobs) for r in batch]
    return _aggregate(("kernel", "M", "fraction"), runs, config, {"T": T, "burn_in": burn}, t0)


# ---------------------------------------------------------- misspecification

MISSPEC_CASES = {
    # case: (generating kernel, fitted family)
    "i": (ApproxPowerLaw(1.0, 0.5), "omori"),
    "ii": (Omori(1.0, 0.5), "approx_power_law"),
    "iii": (ApproxPowerLaw(1.0, 0.5), "approx_power_law"),
}


def _misspec_task(args):
    case, kernel, family, mu, n, T, burn, rep, seed, msc = args
    series = _simulate(HawkesParams(mu, n, kernel), T, burn, seed)
    rec = _fit_record(series, family, msc)
    rec.update(case=case, n=n, rep=rep)
    return rec


def exp_kernel_misspec(config):
    """Generate with one kernel and fit with another over a sweep of the true branching ratio."""
    t0 = time.time()
    cases = config.get("cases", ["i", "ii", "iii"])
    ns = config.get("n_values", [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    mu = config.get("mu", 0.1)
    T, burn = config.window(1e5, 1e8, burn_cap=1e6)
    tasks = []
    for case in cases:
        kernel, family = MISSPEC_CASES[case]
        gen_key = 0 if kernel.family == "approx_power_law" else 1
        for n in ns:
            for rep in range(config.realizations):
                # cases sharing a generator see identical data
                seed = derive_seed(config.seed, 2, gen_key, _key(n), rep)
                tasks.append((case, kernel, family, mu, n, T, burn, rep, seed, config.multistart))
    runs = pmap(_misspec_task, tasks, config.jobs)
    return _aggregate(("case", "n"), runs, config, {"T": T, "burn_in": burn, "under_burned": burn < 1e8}, t0)


# ---------------------------------------------------------------- edge effects

def _rate_task(args):
    eps, tau0, mu, n, horizon, bin_width, seed = args
    s = simulate_branching(HawkesParams(mu, n, ApproxPowerLaw(tau0, eps)), (0.0, horizon), seed)
    edges = np.arange(0.0, horizon + bin_width / 2, bin_width)
    return np.histogram(s.times, bins=edges)[0]


def exp_edge_rate_curves(config):
    """Mean event count per bin versus time since a start with no ancestors.

    Returns ``{epsilon: {"t", "count", "plateau", "T95", "T99"}}``; ``plateau``
    is the stationary count per bin ``mu/(1-n)*bin_width``.
    """
    eps_values = config.get("epsilons", [1.0, 0.5, 0.2])
    tau0, mu, n = config.get("tau0", 1.0), config.get("mu", 1.0), config.get("n", 0.99)
    bin_width = config.get("bin_width", 10.0)
    horizons = config.get("horizons", {})
    out = {}
    for i, eps in enumerate(eps_values):
        k = ApproxPowerLaw(tau0, eps)
        t99 = k.characteristic_time(0.99)
        horizon = float(horizons.get(eps, config.get("horizon", min(200 * t99, 1e5))))
        tasks = [
            (eps, tau0, mu, n, horizon, bin_width, derive_seed(config.seed, 3, i, rep))
            for rep in range(config.realizations)
        ]
        counts = np.mean(pmap(_rate_task, tasks, config.jobs), axis=0)
        centers = np.arange(counts.size) * bin_width + bin_width / 2
        out[eps] = {
            "t": centers,
            "count": counts,
            "plateau": mu / (1 - n) * bin_width,
            "T95": k.characteristic_time(0.95),
            "T99": t99,
        }
    return out


def _subwindow_task(args):
    tau0, eps, mu, n, length, burn, window, max_windows, seed, msc = args
    series = _simulate(HawkesParams(mu, n, ApproxPowerLaw(tau0, eps)), length, burn, seed)
    out = []
    nwin = int(length // window)
    if max_windows is not None:
        nwin = min(nwin, int(max_windows))
    for w in range(nwin):
        sub = series.restrict(w * window, (w + 1) * window)
        if len(sub) < 10:
            continue
        rec = _fit_record(sub, "exponential", msc)
        rec.update(tau0=tau0, epsilon=eps, window=w)
        out.append(rec)
    return out


def exp_edge_effect(config):
    """Rate curves plus exponential fits in short subwindows of long power-law series.

    Returns ``(rate_curves, SweepResult)``; the sweep axes are ``tau0`` and
    ``epsilon`` and every subwindow counts as one realization.
    """
    t0 = time.time()
    curves = exp_edge_rate_curves(config) if config.get("rate_curves", True) else {}
    tau0s = config.get("tau0_values", [1e-3, 1e-2, 1e-1, 1.0])
    epss = config.get("epsilon_values", [0.1, 0.15, 0.2, 0.5, 1.0])
    mu, n = config.get("sub_mu", 0.02), config.get("sub_n", 0.99)
    window = config.get("subwindow", 1800.0)
    length, burn = config.window(1e6, 1e9, burn_cap=config.get("burn_cap", 1e6))
    tasks = []
    for i, tau0 in enumerate(tau0s):
        for j, eps in enumerate(epss):
            seed = derive_seed(config.seed, 4, i, j)
            tasks.append((tau0, eps, mu, n, length, burn, window, config.get("max_windows"), seed, config.multistart))
    runs = [r for batch in pmap(_subwindow_task, tasks, config.jobs) for r in batch]
    sweep = _aggregate(("tau0", "epsilon"), runs, config, {"T": length, "burn_in": burn, "subwindow": window}, t0)
    return curves, sweep


# ---------------------------------------------------------------- bundling

BUNDLING_GENERATORS = {
    # name: (kernel or None for Poisson, fitted family)
    "exponential": (Exponential(0.6), "exponential"),
    "approx_power_law": (ApproxPowerLaw(0.3, 1.0), "approx_power_law"),
    "poisson": (None, "approx_power_law"),
}


def _generate_bundling(name, kernel, mu, n, lam0, T, burn, seed):
    if kernel is None:
        return simulate_poisson(BackgroundProfile.constant(lam0, 0.0, T), (0.0, T), seed)
    return _simulate(HawkesParams(mu, n, kernel), T, burn, seed)


def _bundling_task(args):
    name, kernel, family, mu, n, lam0, T, burn, bundle_width, deltas, rep, seed, msc = args
    series = bundle(_generate_bundling(name, kernel, mu, n, lam0, T, burn, seed), bundle_width)
    out = []
    for j, delta in enumerate(deltas):
        s = randomize(series, delta, derive_seed(seed, j + 1))
        rec = _fit_record(s, family, msc)
        rec.update(generator=name, delta=delta, rep=rep)
        out.append(rec)
    return out


def exp_bundling(config):
    """Bundle timestamps into 1 s packets, randomize within ``delta`` and refit."""
    t0 = time.time()
    names = config.get("generators", list(BUNDLING_GENERATORS))
    fit_families = config.get("fit_families", {})
    deltas = config.get("deltas", [0.001, 0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    mu, n, lam0 = config.get("mu", 3.5), config.get("n", 0.5), config.get("lambda0", 7.0)
    bundle_width = config.get("bundle_width", 1.0)
    T, burn = config.window(1e5, 1e6, burn_cap=1e6)
    tasks = []
    for gi, name in enumerate(names):
        kernel, family = BUNDLING_GENERATORS[name]
        family = fit_families.get(name, family)
        for rep in range(config.realizations):
            seed = derive_seed(config.seed, 5, gi, rep)
            tasks.append((name, kernel, family, mu, n, lam0, T, burn, bundle_width, deltas, rep, seed, config.multistart))
    runs = [r for batch in pmap(_bundling_task, tasks, config.jobs) for r in batch]
    return _aggregate(("generator", "delta"), runs, config, {"T": T, "burn_in": burn}, t0)


def _asymptote_task(args):
    lam0, T, bundle_width, delta, family, rep, seed, msc = args
    s = simulate_poisson(BackgroundProfile.constant(lam0, 0.0, T), (0.0, T), seed)
    s = randomize(bundle(s, bundle_width), delta, derive_seed(seed, 1))
    rec = _fit_record(s, family, msc)
    rec.update(lambda0=lam0, rep=rep)
    return rec


def exp_bundling_asymptote(config):
    """Spurious branching ratio of bundled Poisson data randomized at a tiny delta, versus the rate."""
    t0 = time.time()
    rates = config.get("rates", [0.5, 1, 2, 3, 5, 7, 10, 15, 20])
    delta = config.get("delta", 0.001)
    family = config.get("fit_family", "exponential")
    bundle_width = config.get("bundle_width", 1.0)
    T, _ = config.window(1e5, 0.0)
    tasks = [
        (lam, T, bundle_width, delta, family, rep, derive_seed(config.seed, 6, _key(lam), rep), config.multistart)
        for lam in rates
        for rep in range(config.realizations)
    ]
    runs = pmap(_asymptote_task, tasks, config.jobs)
    res = _aggregate(("lambda0",), runs, config, {"T": T, "delta": delta}, t0)
    for row in res.rows:
        lam = row["lambda0"] * bundle_width
        # limit of n-hat when packets become point clusters: 1 - E[#packets]/E[#events]
        row["n_cluster_limit"] = float((lam - (1 - math.exp(-lam))) / lam)
    return res


# ---------------------------------------------------------------- regime shift

def _regime_task(args):
    panel, value, order, p1, p2, T, burn, rep, seed, msc = args
    s1 = _simulate(p1, T, burn, derive_seed(seed, 1))
    s2 = _simulate(p2, T, burn, derive_seed(seed, 2))
    joined = concatenate([s1, s2] if order == "12" else [s2, s1])
    rec = _fit_record(joined, p1.kernel.family, msc)
    rec.update(panel=panel, value=value, order=order, rep=rep)
    return rec


def exp_regime_shift(config):
    """Fit one Hawkes model to two concatenated regimes.

    Panel ``"n"`` sweeps the second branching ratio at equal background
    rates; panel ``"mu"`` sweeps the second background rate at equal
    branching ratios.  Both concatenation orders are fitted on the same pair.
    """
    t0 = time.time()
    kernel = _kernel(config.get("kernel", ApproxPowerLaw(1.0, 1.0)))
    panels = config.get("panels", ["n", "mu"])
    n1, mu1 = config.get("n1", 0.5), config.get("mu1", 1.0)
    sweeps = {
        "n": config.get("n2_values", [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95]),
        "mu": config.get("mu2_values", [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0]),
    }
    orders = config.get("orders", ["12", "21"])
    T, burn = config.window(1e5, 1e6, burn_cap=1e6)
    tasks = []
    for pi, panel in enumerate(panels):
        for value in sweeps[panel]:
            p1 = HawkesParams(mu1, n1, kernel)
            p2 = HawkesParams(mu1, value, kernel) if panel == "n" else HawkesParams(value, n1, kernel)
            for rep in range(config.realizations):
                seed = derive_seed(config.seed, 7, pi, _key(value), rep)
                for order in orders:
                    tasks.append((panel, value, order, p1, p2, T, burn, rep, seed, config.multistart))
    runs = pmap(_regime_task, tasks, config.jobs)
    return _aggregate(("panel", "value", "order"), runs, config, {"T": T, "burn_in": burn}, t0)


# ---------------------------------------------------------- spurious criticality

def daily_intensities(rng, days, median, sigma):
    """Lognormal day-to-day rates (a synthetic stand-in for observed daily activity)."""
    return median * np.exp(sigma * rng.standard_normal(days))


def daily_blocks(variant, days, day_len, median, sigma, seed, low_cut=0.5, hawkes_n=0.3, hawkes_tau=10.0):
    """Concatenated days of Poisson (or short-memory Hawkes) activity with lognormal day rates."""
    rng = np.random.default_rng(seed)
    lam = np.full(days, median) if variant == "constant" else daily_intensities(rng, days, median, sigma)
    if variant == "drop_low":
        lam = lam[lam >= low_cut * np.median(lam)]
    parts = []
    for d, rate in enumerate(lam):
        ds = derive_seed(seed, d + 1)
        if variant == "hawkes":
            p = HawkesParams(rate * (1 - hawkes_n), hawkes_n, Exponential(hawkes_tau))
            parts.append(simulate_hawkes(p, day_len, 20 * hawkes_tau, ds))
        else:
            parts.append(simulate_poisson(BackgroundProfile.constant(rate, 0.0, day_len), (0.0, day_len), ds))
    return concatenate(parts)


def _block_task(args):
    variant, block, days, day_len, median, sigma, low_cut, hawkes_n, hawkes_tau, family, seed, msc = args
    series = daily_blocks(variant, days, day_len, median, sigma, seed, low_cut, hawkes_n, hawkes_tau)
    rec = _fit_record(series, family, msc)
    rec.update(variant=variant, block=block, days=int(round(series.T / day_len)))
    return rec


def exp_poisson_criticality(config):
    """Fit Hawkes models to concatenated days of independent activity with day-varying rates.

    Variants: ``poisson`` (independent Poisson days), ``drop_low`` (low
    activity days removed), ``hawkes`` (exponential-kernel Hawkes days with
    background proportional to the day's rate) and ``constant`` (control).
    Each block of ``days_per_block`` days is one realization.
    """
    t0 = time.time()
    variants = config.get("variants", ["poisson", "drop_low", "hawkes", "constant"])
    days = int(config.get("days_per_block", 44))
    day_len = float(config.get("day_length", DAY_SECONDS))
    median, sigma = config.get("median_rate", 0.1), config.get("sigma", 0.5)
    low_cut = config.get("low_cut", 0.5)
    hawkes_n, hawkes_tau = config.get("hawkes_n", 0.3), config.get("hawkes_tau", 10.0)
    family = config.get("fit_family", "approx_power_law")
    tasks = []
    for variant in variants:
        for b in range(config.realizations):
            # the daily rates of block b are shared by every variant
            seed = derive_seed(config.seed, 8, b)
            tasks.append(
                (variant, b, days, day_len, median, sigma, low_cut, hawkes_n, hawkes_tau, family, seed, config.multistart)
            )
    runs = pmap(_block_task, tasks, config.jobs)
    return _aggregate(("variant",), runs, config, {"days_per_block": days, "day_length": day_len}, t0)


# ---------------------------------------------------------------- cost surface

def _surface_task(args):
    rep, days, day_len, median, sigma, hawkes_n, hawkes_tau, family, count, seed = args
    series = daily_blocks("hawkes", days, day_len, median, sigma, seed, hawkes_n=hawkes_n, hawkes_tau=hawkes_tau)
    names = family_class(family).fit_params
    surf = cost_surface(series, family, GridConfig.default(names, count))
    minima = surf.local_minima()
    rec = {"rep": rep, "N": len(series), "minima": len(minima)}
    for label, ij in zip(("global", "second"), minima[:2]):
        i, j = ij
        rec[f"{label}_{names[0]}"] = float(surf.psi1[i])
        rec[f"{label}_{names[1]}"] = float(surf.psi2[j])
        rec[f"{label}_n_star"] = float(surf.n_star[i, j])
        rec[f"{label}_S"] = float(surf.values[i, j])
    if len(minima) > 1:
        (a, b), (c, d) = minima[:2]
        rec["separation_cells"] = max(abs(a - c), abs(b - d))
    return surf, rec


def exp_cost_surface(config):
    """Profile-cost surfaces of short-memory Hawkes days glued across lognormal activity regimes.

    Returns ``(surfaces, rows)``: one :class:`CostSurface` per realization and
    one summary row each (global and runner-up local minimum, their grid
    separation).
    """
    t0 = time.time()
    days = int(config.get("days", 20))
    day_len = float(config.get("day_length", DAY_SECONDS))
    median, sigma = config.get("median_rate", 0.1), config.get("sigma", 0.5)
    hawkes_n, hawkes_tau = config.get("hawkes_n", 0.3), config.get("hawkes_tau", 0.01)
    family = config.get("fit_family", "approx_power_law")
    count = int(config.get("grid", 25))
    tasks = [
        (rep, days, day_len, median, sigma, hawkes_n, hawkes_tau, family, count, derive_seed(config.seed, 10, rep))
        for rep in range(config.realizations)
    ]
    out = pmap(_surface_task, tasks, config.jobs)
    surfaces = {rec["rep"]: surf for surf, rec in out}
    rows = [rec for _, rec in out]
    meta = {"config": config.to_dict(), "wall_seconds": time.time() - t0}
    return surfaces, SweepResult(("rep",), rows, rows, meta)


# ---------------------------------------------------------------- quantiles

TABLE2_GRID = [(n, tau0) for n in (0.3, 0.5, 0.7, 0.95, 0.99) for tau0 in (1.0, 0.1, 0.01)]


def _quantile_task(args):
    n, tau0, mu, eps, T, burn, seed = args
    s = _simulate(HawkesParams(mu, n, ApproxPowerLaw(tau0, eps)), T, burn, seed)
    return s.durations()


def quantile_table(config):
    """Quantiles and maximum of inter-event durations over the ``(n, tau0)`` grid.

    Durations of all realizations at a grid point are pooled before taking
    quantiles; the maximum is averaged over realizations.
    """
    grid = config.get("grid", TABLE2_GRID)
    mu, eps = config.get("mu", 0.02), config.get("epsilon", 0.15)
    T, burn = config.window(1e5, 1e8)
    rows = []
    for gi, (n, tau0) in enumerate(grid):
        tasks = [(n, tau0, mu, eps, T, burn, derive_seed(config.seed, 9, gi, rep)) for rep in range(config.realizations)]
        durs = pmap(_quantile_task, tasks, config.jobs)
        pooled = np.concatenate(durs)
        q90, q95, q99 = np.quantile(pooled, [0.9, 0.95, 0.99])
        mx = float(np.mean([d.max() for d in durs if d.size]))
        rows.append(
            {
                "n": n,
                "tau0": tau0,
                "Q90": float(q90),
                "Q95": float(q95),
                "Q99": float(q99),
                "Max": mx,
                "Q95/Q90": float(q95 / q90),
                "Q99/Q95": float(q99 / q95),
                "Max/Q99": float(mx / q99),
                "durations": int(pooled.size),
            }
        )
    return rows


# ---------------------------------------------------------------- registry

EXPERIMENTS = {
    "outlier_bias": exp_outlier_bias,
    "kernel_misspec": exp_kernel_misspec,
    "edge_effect": exp_edge_effect,
    "edge_rate_curves": exp_edge_rate_curves,
    "bundling": exp_bundling,
    "bundling_asymptote": exp_bundling_asymptote,
    "regime_shift": exp_regime_shift,
    "poisson_criticality": exp_poisson_criticality,
    "quantile_table": quantile_table,
    "cost_surface": exp_cost_surface,
}


def scale_audit(name, config, scales=(0.1, 0.3)):
    """Rerun an experiment at two scale factors and compare mean estimates point by point.

    A point is flagged when the two means differ by more than twice their
    pooled standard error.  Returns one row per sweep point.
    """
    import copy

    results = []
    for sc in scales:
        cfg = copy.deepcopy(config)
        cfg.scale = sc
        res = run_experiment(name, cfg)
        if isinstance(res, tuple):
            res = res[1]
        if not isinstance(res, SweepResult):
            raise ValueError(f"experiment {name!r} does not produce a sweep")
        results.append(res)
    a, b = results
    rows = []
    for ra in a.rows:
        key = {k: ra[k] for k in a.axes}
        (rb,) = b.select(**key)
        band = 2 * math.sqrt(ra["n_std"] ** 2 / ra["R"] + rb["n_std"] ** 2 / rb["R"])
        diff = rb["n_mean"] - ra["n_mean"]
        rows.append({**key, "scale_a": scales[0], "scale_b": scales[1], "diff": diff, "band": band, "flagged": abs(diff) > band})
    return rows


def run_experiment(name, config):
    try:
        func = EXPERIMENTS[name]
    except KeyError:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from None
    config.experiment = name
    return func(config)
