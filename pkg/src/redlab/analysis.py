"""Trace statistics: queue mean/stdev, rounded histograms, RTT series and
oscillation period."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .core import NetworkConfig, Trace

# all-on and half-off windows for the two-class scenario, clear of the
# transients after the switches at 75 s and 125 s
ALL_ON_WINDOWS = ((20.0, 75.0), (140.0, 200.0))
HALF_OFF_WINDOWS = ((85.0, 125.0),)


class AnalysisError(ValueError):
    """Not enough data for the requested statistic."""


def _window_q(trace: Trace, windows: Sequence[tuple[float, float]]) -> np.ndarray:
    parts = [trace.q[(trace.t >= lo) & (trace.t < hi)] for lo, hi in windows]
    return np.concatenate(parts) if parts else np.zeros(0)


def queue_stats(trace: Trace, t_start: float | None = None, t_end: float | None = None,
                windows: Sequence[tuple[float, float]] | None = None) -> tuple[float, float]:
    """Sample mean and sample standard deviation of ``q``.

    Uses ``[t_start, t_end)`` (default: whole trace) or the union of
    ``windows``.
    """
    if windows is None:
        lo = -np.inf if t_start is None else t_start
        hi = np.inf if t_end is None else t_end
        windows = ((lo, hi),)
    q = _window_q(trace, windows)
    if q.size < 2:
        raise AnalysisError(f"need at least 2 samples in {list(windows)}, got {q.size}")
    return float(q.mean()), float(q.std(ddof=1))


@dataclass(frozen=True)
class Histogram:
    """Counts over bins ``[edges[i], edges[i+1])`` of rounded queue values."""

    edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> tuple[float, float]:
        """Lowest and highest occupied queue value (bin lower edges)."""
        nz = np.flatnonzero(self.counts)
        if nz.size == 0:
            raise AnalysisError("empty histogram")
        return float(self.edges[nz[0]]), float(self.edges[nz[-1]])

    def density(self) -> np.ndarray:
        return self.counts / max(self.total, 1)


def _bin_rounded(q: np.ndarray, bin_width: float) -> Histogram:
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    q = np.floor(q + 0.5)
    if q.size == 0:
        return Histogram(edges=np.array([0.0, bin_width]), counts=np.zeros(1, dtype=np.int64))
    idx = np.floor(q / bin_width).astype(np.int64)
    first = idx.min()
    counts = np.bincount(idx - first)
    edges = (first + np.arange(len(counts) + 1)) * bin_width
    return Histogram(edges=edges.astype(float), counts=counts)


def queue_histogram(trace: Trace, bin_width: float = 1.0, t_start: float | None = None,
                    t_end: float | None = None) -> Histogram:
    """Histogram of ``q`` rounded to the nearest integer (halves round up)."""
    return pooled_histogram([trace], bin_width, t_start, t_end)


def pooled_histogram(traces: Sequence[Trace], bin_width: float = 1.0,
                     t_start: float | None = None, t_end: float | None = None) -> Histogram:
    """One rounded-queue histogram over the ``[t_start, t_end)`` samples of
    several traces, e.g. realisations with different seeds."""
    lo = -np.inf if t_start is None else t_start
    hi = np.inf if t_end is None else t_end
    parts = [_window_q(tr, ((lo, hi),)) for tr in traces]
    return _bin_rounded(np.concatenate(parts) if parts else np.zeros(0), bin_width)


def histogram_distance(a: Histogram, b: Histogram) -> float:
    """L1 distance between the normalised histograms (0 to 2)."""
    width = a.edges[1] - a.edges[0]
    if not np.isclose(width, b.edges[1] - b.edges[0]):
        raise ValueError("histograms must share the bin width")
    lo = min(a.edges[0], b.edges[0])
    hi = max(a.edges[-1], b.edges[-1])
    n = int(round((hi - lo) / width))

    def spread(h):
        out = np.zeros(n)
        off = int(round((h.edges[0] - lo) / width))
        out[off:off + len(h.counts)] = h.density()
        return out

    return float(np.abs(spread(a) - spread(b)).sum())


def rtt_series(trace: Trace, cfg: NetworkConfig) -> tuple[np.ndarray, np.ndarray]:
    """Sample times and per-sender RTTs ``a_i + q/c``, shape (N, n)."""
    return trace.t, cfg.a_array[None, :] + trace.q[:, None] / cfg.c


def oscillation_period(trace: Trace, prominence: float = 0.25, smooth: float = 1.0) -> float:
    """Mean spacing between queue peaks.

    ``q`` is first smoothed with a centred moving average ``smooth`` seconds
    wide, which removes the per-round-trip burst structure of packet-level
    traces. A peak counts if its prominence is at least ``prominence`` times
    the range of the smoothed queue and it is at least ``smooth`` seconds
    from a higher peak.
    """
    q = trace.q
    width = 1
    if q.size >= 2 and smooth > 0:
        dt = float(np.median(np.diff(trace.t)))
        width = max(int(round(smooth / dt)), 1) if dt > 0 else 1
        if width > 1:
            q = uniform_filter1d(q, width, mode="nearest")
    span = float(q.max() - q.min()) if q.size else 0.0
    if span <= 0:
        raise AnalysisError("flat queue trace has no oscillation")
    # maxima closer than the smoothing window are one peak
    peaks, _ = find_peaks(q, prominence=prominence * span, distance=width)
    if peaks.size < 3:
        raise AnalysisError(f"need at least 3 queue peaks, found {peaks.size}")
    return float(np.mean(np.diff(trace.t[peaks])))


def compare(a: Trace, b: Trace, bin_width: float = 1.0) -> dict:
    """Side-by-side statistics of two traces."""
    report = {}
    for name, tr in (("a", a), ("b", b)):
        mean, std = queue_stats(tr)
        try:
            period = oscillation_period(tr)
        except AnalysisError:
            period = None
        report[name] = {"source": tr.source.value, "mean": mean, "stdev": std, "period": period}
    report["histogram_l1"] = histogram_distance(
        queue_histogram(a, bin_width), queue_histogram(b, bin_width)
    )
    return report
