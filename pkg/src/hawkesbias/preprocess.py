"""Transforms of event series: outliers, bundling, randomization, detrending, concatenation."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateProfileError, DomainError
from .series import BackgroundProfile, EventSeries

__all__ = [
    "inject_outliers",
    "bundle",
    "randomize",
    "IntensityProfile",
    "estimate_profile",
    "detrend",
    "concatenate",
]

# guards floor(t / delta) against representation error, e.g. 3.0 / 0.1 = 29.999...
_REL_NUDGE = 1e-9


def inject_outliers(series, fraction, M, seed):
    """Replace ``floor(fraction*(N-1))`` random durations by ``M`` times the largest one.

    Durations are drawn without replacement and the maximum is taken before
    any replacement.  Times are rebuilt by cumulative summation from the
    first event, so the window end moves by the added length.
    """
    if not 0 <= fraction <= 1:
        raise DomainError(f"fraction must lie in [0, 1], got {fraction!r}")
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M!r}")
    N = len(series)
    if N < 2:
        raise DomainError("need at least two events")
    k = int(math.floor(fraction * (N - 1)))
    if k < 1:
        if fraction > 0:
            warnings.warn(f"fraction {fraction} of {N - 1} durations selects none; series unchanged", stacklevel=2)
        return series
    d = series.durations().copy()
    rng = np.random.default_rng(seed)
    idx = rng.choice(d.size, size=k, replace=False)
    d[idx] = M * d.max()
    t = series.times
    times = np.concatenate([[t[0]], t[0] + np.cumsum(d)])
    return EventSeries(times, series.window_start, series.window_end + (times[-1] - t[-1]))


def _cells(t, delta):
    return np.floor(t / delta + _REL_NUDGE)


def bundle(series, delta_bundle, edge="right"):
    """Stamp every event at an edge of its bundling cell ``(k*delta, (k+1)*delta]``.

    ``edge="right"`` stamps at the dispatch instant ``(k+1)*delta``;
    ``edge="left"`` at ``k*delta``.  Order and count are preserved.
    """
    if not delta_bundle > 0:
        raise DomainError("delta_bundle must be positive")
    t = series.times
    if edge == "right":
        stamped = np.ceil(t / delta_bundle - _REL_NUDGE) * delta_bundle
    elif edge == "left":
        stamped = _cells(t, delta_bundle) * delta_bundle
    else:
        raise DomainError(f"edge must be 'left' or 'right', got {edge!r}")
    return _with_times(series, stamped)


def randomize(series, delta, seed):
    """Redraw each time uniformly in ``[floor(t/delta)*delta, floor(t/delta)*delta + delta)`` and sort."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    rng = np.random.default_rng(seed)
    lo = _cells(series.times, delta) * delta
    return _with_times(series, np.sort(lo + delta * rng.random(lo.size)))


def _with_times(series, times):
    start, end = series.window
    if times.size:
        start = min(start, float(times.min()))
        end = max(end, float(times.max()))
    return EventSeries(times, start, end)


@dataclass(frozen=True)
class IntensityProfile:
    """Binned rate ``values[k]`` on ``[start + k*bin_width, start + (k+1)*bin_width)``."""

    bin_width: float
    values: np.ndarray
    start: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DomainError("profile needs at least one bin")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DomainError("profile values must be finite and nonnegative")
        if not self.bin_width > 0:
            raise DomainError("bin_width must be positive")
        object.__setattr__(self, "values", v)

    @property
    def period(self):
        return self.bin_width * self.values.size

    @property
    def end(self):
        return self.start + self.period

    @property
    def edges(self):
        return self.start + self.bin_width * np.arange(self.values.size + 1)

    def as_background(self):
        return BackgroundProfile(self.edges, self.values)

    def cumulative(self, t, periodic=False):
        """Integral of the profile from ``start`` to ``t`` (piecewise linear in ``t``)."""
        t = np.asarray(t, dtype=float) - self.start
        cum = np.concatenate([[0.0], np.cumsum(self.values) * self.bin_width])
        if periodic:
            cycles, t = np.divmod(t, self.period)
        else:
            cycles = 0.0
        k = np.clip(np.floor(t / self.bin_width).astype(int), 0, self.values.size - 1)
        return cycles * cum[-1] + cum[k] + self.values[k] * (t - k * self.bin_width)

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_start", "rate"])
            for b, r in zip(self.edges[:-1], self.values):
                w.writerow([format(b, ".17g"), format(r, ".17g")])

    @classmethod
    def from_csv(cls, path):
        rows = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        starts, rates = rows[:, 0], rows[:, 1]
        width = float(starts[1] - starts[0]) if starts.size > 1 else 1.0
        if starts.size > 1 and not np.allclose(np.diff(starts), width, rtol=1e-9, atol=0):
            raise DomainError("profile bins must be equally spaced")
        return cls(width, rates, float(starts[0]))


def estimate_profile(day_series, bin_width):
    """Average the binned event rate over days aligned at their window starts."""
    days = list(day_series)
    if not days:
        raise DomainError("need at least one day")
    length = max(d.T for d in days)
    nbins = max(1, int(math.ceil(length / bin_width - _REL_NUDGE)))
    counts = np.zeros(nbins)
    for d in days:
        rel = d.times - d.window_start
        k = np.clip(np.ceil(rel / bin_width).astype(int) - 1, 0, nbins - 1)
        counts += np.bincount(k, minlength=nbins)
    # last bin may be shorter than bin_width
    widths = np.minimum(bin_width, length - bin_width * np.arange(nbins))
    return IntensityProfile(bin_width, counts / len(days) / widths)


def detrend(series, profile, periodic=False):
    """Map each time through the cumulative profile; the window maps to its image."""
    t = series.times
    if not periodic and (series.window_start < profile.start - 1e-9 * abs(profile.start) or series.window_end > profile.end * (1 + 1e-12)):
        raise DomainError("profile does not cover the series window")
    if t.size:
        rel = t - profile.start
        if periodic:
            rel = np.mod(rel, profile.period)
        # event at time t belongs to the bin ending at or after it
        k = np.clip(np.ceil(rel / profile.bin_width).astype(int) - 1, 0, profile.values.size - 1)
        zero = np.flatnonzero(profile.values[k] == 0)
        if zero.size:
            raise DegenerateProfileError(f"event {zero[0]} at t={t[zero[0]]!r} falls in a zero-rate bin")
    a = float(profile.cumulative(series.window_start, periodic))
    b = float(profile.cumulative(series.window_end, periodic))
    # rounding at bin edges must not break the ordering
    mapped = np.clip(np.maximum.accumulate(profile.cumulative(t, periodic)), a, b)
    return EventSeries(mapped, a, b)


def concatenate(series_list, gap=0.0):
    """Join series end to end, each window starting ``gap`` after the previous one ends."""
    items = list(series_list)
    if not items:
        raise DomainError("nothing to concatenate")
    if gap < 0:
        raise DomainError("gap must be nonnegative")
    parts = [items[0].times]
    start, end = items[0].window
    for s in items[1:]:
        offset = end + gap - s.window_start
        parts.append(s.times + offset)
        end = s.window_end + offset
    return EventSeries(np.concatenate(parts), start, end)
