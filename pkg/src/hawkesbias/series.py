"""Event series container, background profiles and their file formats."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError

__all__ = ["EventSeries", "BackgroundProfile", "read_series", "write_series", "SeriesFormatError"]


class SeriesFormatError(DomainError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, eq=False)
class EventSeries:
    """Ordered event times observed on the window ``(window_start, window_end]``."""

    times: np.ndarray
    window_start: float
    window_end: float

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "window_start", float(self.window_start))
        object.__setattr__(self, "window_end", float(self.window_end))
        if self.window_end < self.window_start:
            raise DomainError("window_end precedes window_start")
        if times.size:
            if np.any(np.diff(times) < 0):
                raise DomainError("event times must be nondecreasing")
            if times[0] < self.window_start or times[-1] > self.window_end:
                raise DomainError("event times fall outside the observation window")

    @property
    def T(self):
        return self.window_end - self.window_start

    @property
    def window(self):
        return self.window_start, self.window_end

    def __len__(self):
        return self.times.size

    def __eq__(self, other):
        if not isinstance(other, EventSeries):
            return NotImplemented
        return (
            self.window == other.window
            and self.times.shape == other.times.shape
            and bool(np.all(self.times == other.times))
        )

    def count(self, t):
        """Counting process N(t): number of events with time <= t."""
        return np.searchsorted(self.times, t, side="right")

    def durations(self):
        return np.diff(self.times)

    def has_ties(self):
        return bool(np.any(np.diff(self.times) == 0))

    def shifted(self, offset):
        return EventSeries(self.times + offset, self.window_start + offset, self.window_end + offset)

    def rescaled(self, k):
        return EventSeries(self.times * k, self.window_start * k, self.window_end * k)

    def restrict(self, start, end):
        """Events in ``(start, end]`` on that window."""
        t = self.times
        sel = t[(t > start) & (t <= end)]
        return EventSeries(sel, start, end)


@dataclass(frozen=True, eq=False)
class BackgroundProfile:
    """Piecewise-constant background rate: ``rates[i]`` on ``[breakpoints[i], breakpoints[i+1])``."""

    breakpoints: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        r = np.asarray(self.rates, dtype=float)
        if b.ndim != 1 or r.ndim != 1 or b.size != r.size + 1 or r.size == 0:
            raise DomainError("need len(breakpoints) == len(rates) + 1 >= 2")
        if np.any(np.diff(b) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise DomainError("rates must be finite and nonnegative")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "rates", r)

    @classmethod
    def constant(cls, rate, start, end):
        return cls(np.array([start, end], float), np.array([rate], float))

    @property
    def start(self):
        return float(self.breakpoints[0])

    @property
    def end(self):
        return float(self.breakpoints[-1])

    def rate(self, t):
        idx = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1, 0, self.rates.size - 1)
        return self.rates[idx]

    def cumulative(self, t):
        """Integral of the rate from ``start`` to ``t`` (clamped to the profile span)."""
        t = np.clip(np.asarray(t, dtype=float), self.start, self.end)
        b, r = self.breakpoints, self.rates
        cum = np.concatenate([[0.0], np.cumsum(r * np.diff(b))])
        idx = np.clip(np.searchsorted(b, t, side="right") - 1, 0, r.size - 1)
        return cum[idx] + r[idx] * (t - b[idx])

    def restricted(self, start, end):
        """Profile clipped to ``[start, end]``; the rate is extended flat beyond its span."""
        b = self.breakpoints
        inner = b[(b > start) & (b < end)]
        new_b = np.concatenate([[start], inner, [end]])
        mids = 0.5 * (new_b[:-1] + new_b[1:])
        return BackgroundProfile(new_b, self.rate(mids))


def _fmt(x):
    return format(float(x), ".17g")


def write_series(series, path):
    """Write newline-delimited times with a ``# window`` header, or CSV if ``path`` ends in .csv."""
    path = Path(path)
    buf = io.StringIO()
    if path.suffix.lower() == ".csv":
        buf.write(f"# window: {_fmt(series.window_start)} {_fmt(series.window_end)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time"])
        for t in series.times:
            w.writerow([_fmt(t)])
    else:
        buf.write(f"# window: {_fmt(series.window_start)} {_fmt(series.window_end)}\n")
        buf.writelines(_fmt(t) + "\n" for t in series.times)
    path.write_text(buf.getvalue())


def _parse_window(line, lineno):
    try:
        a, b = line.split(":", 1)[1].split()
        return float(a), float(b)
    except (IndexError, ValueError):
        raise SeriesFormatError(f"malformed window header {line!r}", lineno) from None


def read_series(path, allow_ties=True, allow_unsorted=False):
    """Read a series file written by :func:`write_series`.

    Decreasing timestamps raise :class:`SeriesFormatError` naming the first
    offending line unless ``allow_unsorted`` (then the times are sorted).
    Equal consecutive timestamps are rejected only when ``allow_ties`` is False.
    """
    path = Path(path)
    window = None
    values, lines = [], []
    is_csv = path.suffix.lower() == ".csv"
    header_seen = not is_csv
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line[1:].strip().startswith("window"):
                    window = _parse_window(line, lineno)
                continue
            if not header_seen:
                header_seen = True
                if line.split(",")[0].strip().lower() == "time":
                    continue
            field = line.split(",")[0] if is_csv else line
            try:
                values.append(float(field))
            except ValueError:
                raise SeriesFormatError(f"not a number: {field!r}", lineno) from None
            lines.append(lineno)
    times = np.array(values, dtype=float)
    if times.size > 1:
        d = np.diff(times)
        bad = np.flatnonzero(d < 0) if allow_ties else np.flatnonzero(d <= 0)
        if bad.size and not allow_unsorted:
            raise SeriesFormatError("timestamps are not monotone", lines[bad[0] + 1])
        if bad.size:
            times = np.sort(times)
    if window is None:
        start = 0.0 if not times.size else min(0.0, float(times[0]))
        end = float(times[-1]) if times.size else 0.0
        window = (start, end)
    return EventSeries(times, *window)
