"""Simulation of Poisson and Hawkes processes.

Two exact Hawkes samplers are provided: Ogata's modified thinning and the
generation-by-generation cluster (branching) construction.  Both accept a
piecewise-constant background rate and a hard cap on the number of events.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _jit
from .errors import DomainError, TruncationError
from .kernels import Kernel, kernel_from_dict
from .series import BackgroundProfile, EventSeries

__all__ = [
    "HawkesParams",
    "BranchingTrace",
    "simulate_thinning",
    "simulate_branching",
    "simulate_poisson",
    "burn",
    "simulate_hawkes",
    "DEFAULT_CAP",
]

log = logging.getLogger(__name__)

DEFAULT_CAP = 10**8


@dataclass(frozen=True)
class HawkesParams:
    """Background rate ``mu`` (constant or :class:`BackgroundProfile`), branching ratio ``n`` and kernel."""

    mu: float | BackgroundProfile
    n: float
    kernel: Kernel

    def __post_init__(self):
        if not isinstance(self.mu, BackgroundProfile):
            mu = float(self.mu)
            if not mu >= 0:
                raise DomainError(f"mu must be >= 0, got {mu!r}")
            object.__setattr__(self, "mu", mu)
        n = float(self.n)
        if not n >= 0:
            raise DomainError(f"n must be >= 0, got {n!r}")
        object.__setattr__(self, "n", n)

    @property
    def stationary(self):
        return self.n < 1

    def profile(self, start, end):
        if isinstance(self.mu, BackgroundProfile):
            return self.mu.restricted(start, end)
        return BackgroundProfile.constant(self.mu, start, end)

    def to_dict(self):
        mu = self.mu
        if isinstance(mu, BackgroundProfile):
            mu = {"breakpoints": mu.breakpoints.tolist(), "rates": mu.rates.tolist()}
        return {"mu": mu, "n": self.n, "kernel": self.kernel.to_dict()}

    @classmethod
    def from_dict(cls, d):
        mu = d["mu"]
        if isinstance(mu, dict):
            mu = BackgroundProfile(mu["breakpoints"], mu["rates"])
        return cls(mu, d["n"], kernel_from_dict(d["kernel"]))


@dataclass
class BranchingTrace:
    """Genealogy bookkeeping kept by :func:`simulate_branching` in debug mode.

    ``parent[i]`` indexes the parent of event ``i`` in the returned series
    (-1 for immigrants).
    ``children[i]`` counts all first-generation offspring drawn for event
    ``i``, including those later discarded beyond the window end.
    """

    parent: np.ndarray
    children: np.ndarray
    generation: np.ndarray
    generations: int = 0


def _check_window(window):
    start, end = map(float, window)
    if not end >= start:
        raise DomainError(f"invalid window {window!r}")
    return start, end


def _seed32(seed):
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


def simulate_poisson(profile, window, seed):
    """Piecewise-homogeneous Poisson process on ``window``."""
    start, end = _check_window(window)
    rng = np.random.default_rng(seed)
    times = _poisson_points(profile.restricted(start, end), rng)
    return EventSeries(times, start, end)


def _poisson_points(profile, rng):
    b, r = profile.breakpoints, profile.rates
    counts = rng.poisson(r * np.diff(b))
    seg = np.repeat(np.arange(r.size), counts)
    pts = b[seg] + rng.random(seg.size) * np.diff(b)[seg]
    pts.sort()
    return pts


def simulate_thinning(params, window, seed, cap=DEFAULT_CAP):
    """Exact Hawkes sample by Ogata's modified thinning.

    O(N * K) for sum-of-exponential kernels (exponential, approximate power
    law) through the intensity recursion, O(N^2) for the others.
    """
    start, end = _check_window(window)
    if cap <= 0:
        raise DomainError("cap must be positive")
    prof = params.profile(start, end)
    kernel = params.kernel
    soe = kernel.soe()
    s32 = _seed32(seed)
    if soe is not None:
        w, sc = soe
        times, truncated = _jit.thinning_soe(
            prof.breakpoints, prof.rates, params.n, w, sc, start, end, int(cap), s32
        )
    else:
        code, p, sc, lw = kernel.jit_args()
        times, truncated = _jit.thinning_generic(
            prof.breakpoints, prof.rates, params.n, code, p, sc, lw, start, end, int(cap), s32
        )
    if truncated:
        partial = EventSeries(times.copy(), start, max(float(times[-1]), start) if times.size else start)
        raise TruncationError(f"event cap {cap} reached at t={partial.window_end:.6g}", partial)
    return EventSeries(times.copy(), start, end)


def simulate_branching(params, window, seed, cap=DEFAULT_CAP, trace=False):
    """Exact Hawkes sample by cluster construction, generation by generation.

    Immigrants come from the background rate; every event spawns
    Poisson(n) children at i.i.d. delays drawn from the kernel.  Children
    past the window end are discarded (they cannot have ancestors inside
    it).  With ``trace=True`` returns ``(series, BranchingTrace)``.
    """
    start, end = _check_window(window)
    if cap <= 0:
        raise DomainError("cap must be positive")
    rng = np.random.default_rng(seed)
    kernel, n = params.kernel, params.n

    gen_times = [_poisson_points(params.profile(start, end), rng)]
    gen_parent = [np.full(gen_times[0].size, -1, dtype=np.int64)]
    gen_children = []
    total = gen_times[0].size
    current = gen_times[0]
    offset = 0
    while current.size:
        if total > cap:
            break
        k = rng.poisson(n, current.size) if n > 0 else np.zeros(current.size, dtype=np.int64)
        gen_children.append(k)
        m = int(k.sum())
        if m == 0:
            break
        parents = np.repeat(np.arange(current.size), k)
        child = current[parents] + kernel.sample_delays(rng, m)
        keep = child <= end
        child = child[keep]
        gen_times.append(child)
        gen_parent.append(parents[keep] + offset)
        offset += current.size
        total += child.size
        current = child
    if len(gen_children) < len(gen_times):
        gen_children.append(np.zeros(gen_times[-1].size, dtype=np.int64))

    all_t = np.concatenate(gen_times)
    if total > cap:
        order = np.argsort(all_t, kind="stable")[:cap]
        partial = np.sort(all_t[order])
        raise TruncationError(
            f"event cap {cap} exceeded in generation {len(gen_times) - 1}",
            EventSeries(partial, start, float(partial[-1]) if partial.size else start),
        )
    order = np.argsort(all_t, kind="stable")
    series = EventSeries(all_t[order], start, end)
    if not trace:
        return series
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    parent_raw = np.concatenate(gen_parent)
    parent = np.where(parent_raw >= 0, rank[np.maximum(parent_raw, 0)], parent_raw)
    children = np.concatenate(gen_children)
    generation = np.concatenate([np.full(g.size, i) for i, g in enumerate(gen_times)])
    tr = BranchingTrace(parent[order], children[order], generation[order], len(gen_times) - 1)
    return series, tr


def burn(series, t_burn, reorigin=False):
    """Drop events with ``t <= t_burn``; the window then starts at ``t_burn``."""
    t_burn = float(t_burn)
    if not series.window_start <= t_burn <= series.window_end:
        raise DomainError(f"burn time {t_burn} outside window {series.window}")
    t = series.times[series.times > t_burn]
    if reorigin:
        return EventSeries(t - t_burn, 0.0, series.window_end - t_burn)
    return EventSeries(t, t_burn, series.window_end)


def simulate_hawkes(params, T, burn_in=0.0, seed=0, method="branching", cap=DEFAULT_CAP):
    """Simulate on ``(0, burn_in + T]``, burn the first ``burn_in`` seconds and re-origin to ``(0, T]``."""
    sim = simulate_branching if method == "branching" else simulate_thinning
    s = sim(params, (0.0, burn_in + T), seed, cap=cap)
    return burn(s, burn_in, reorigin=True) if burn_in > 0 else s
