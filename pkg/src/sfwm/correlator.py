"""Trial-averaged second-order correlation functions from time tags.

Delays are integer ticks. A histogram over ``[-max_delay, max_delay)`` with
``bin_width`` ticks has ``2 * max_delay // bin_width`` bins; bin ``k`` holds
pairs with ``t_j - t_i`` in ``[-max_delay + k*bin_width, -max_delay + (k+1)*bin_width)``.

Cross-correlation curves always use ``tau = t(field-1 detector) - t(field-2
detector)``, whatever the order of the letters in their name, so ``tau > 0``
means the field-1 photon arrived late.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

#: (name, first detector, second detector); histograms count t_second - t_first
PAIRS = (
    ("2a1a", "2a", "1a"),
    ("2b1a", "2b", "1a"),
    ("1b2a", "2a", "1b"),
    ("2b1b", "2b", "1b"),
    ("1b1a", "1b", "1a"),
    ("2b2a", "2b", "2a"),
)
CROSS_PAIRS = ("2a1a", "2b1a", "1b2a", "2b1b")
AUTO_PAIRS = ("1b1a", "2b2a")

DEFAULT_BIN_NS = 0.4
DEFAULT_MAX_DELAY_NS = 20.0


class EmptyCurveError(ValueError):
    """A detector of the pair recorded no tags, so g2 cannot be normalised."""


@numba.njit(cache=True, nogil=True)
def _is_sorted(a):
    for k in range(1, a.size):
        if a[k] < a[k - 1]:
            return False
    return True


@numba.njit(cache=True, nogil=True)
def _accumulate(ti, tj, bin_width, max_delay, hist):
    # two-pointer sweep; j0 trails the lower edge of the window of ti[a]
    n_j = tj.size
    j0 = 0
    for a in range(ti.size):
        lo = ti[a] - max_delay
        while j0 < n_j and tj[j0] < lo:
            j0 += 1
        hi = ti[a] + max_delay
        j = j0
        while j < n_j and tj[j] < hi:
            hist[(tj[j] - lo) // bin_width] += 1
            j += 1


@numba.njit(cache=True, nogil=True)
def _accumulate_trials(ti, oi, tj, oj, bin_width, max_delay, hist):
    for k in range(oi.size - 1):
        _accumulate(ti[oi[k]:oi[k + 1]], tj[oj[k]:oj[k + 1]], bin_width, max_delay, hist)


def _check_binning(bin_width, max_delay):
    bin_width, max_delay = int(bin_width), int(max_delay)
    if bin_width < 1:
        raise ValueError("bin_width must be at least one tick")
    if max_delay <= 0 or max_delay % bin_width:
        raise ValueError("max_delay must be a positive multiple of bin_width")
    return bin_width, max_delay


def bin_edges(bin_width, max_delay):
    bin_width, max_delay = _check_binning(bin_width, max_delay)
    return np.arange(-max_delay, max_delay + 1, bin_width, dtype=np.int64)


def coincidence_histogram(tags_i, tags_j, bin_width, max_delay):
    """Coincidences ``t_j - t_i`` per signed delay bin, in O(N_i + N_j + C).

    Raises
    ------
    ValueError
        If either tag array is not sorted or the binning is invalid.
    """
    bin_width, max_delay = _check_binning(bin_width, max_delay)
    ti = np.ascontiguousarray(tags_i, dtype=np.int64)
    tj = np.ascontiguousarray(tags_j, dtype=np.int64)
    if not (_is_sorted(ti) and _is_sorted(tj)):
        raise ValueError("tag arrays must be sorted")
    hist = np.zeros(2 * max_delay // bin_width, dtype=np.int64)
    _accumulate(ti, tj, bin_width, max_delay, hist)
    return hist


def brute_force_g2(tags_i, tags_j, bin_width, max_delay):
    """Reference histogram by enumerating every pair (small inputs only)."""
    bin_width, max_delay = _check_binning(bin_width, max_delay)
    n_bins = 2 * max_delay // bin_width
    hist = np.zeros(n_bins, dtype=np.int64)
    tj = np.asarray(tags_j, dtype=np.int64)
    for t in np.asarray(tags_i, dtype=np.int64):
        d = tj - t
        d = d[(d >= -max_delay) & (d < max_delay)]
        hist += np.bincount((d + max_delay) // bin_width, minlength=n_bins)
    return hist


def stream_histogram(stream_i, stream_j, bin_width, max_delay):
    """Coincidence histogram summed over trials; pairs never span trials."""
    bin_width, max_delay = _check_binning(bin_width, max_delay)
    if not stream_i.same_structure(stream_j):
        raise ValueError(
            f"streams {stream_i.detector_id} and {stream_j.detector_id} have different trial structure")
    ti = np.ascontiguousarray(stream_i.ticks, dtype=np.int64)
    tj = np.ascontiguousarray(stream_j.ticks, dtype=np.int64)
    oi = np.ascontiguousarray(stream_i.offsets, dtype=np.int64)
    oj = np.ascontiguousarray(stream_j.offsets, dtype=np.int64)
    for t, o, name in ((ti, oi, stream_i.detector_id), (tj, oj, stream_j.detector_id)):
        if not _trials_sorted(t, o):
            raise ValueError(f"stream {name} is not sorted within trials")
    hist = np.zeros(2 * max_delay // bin_width, dtype=np.int64)
    _accumulate_trials(ti, oi, tj, oj, bin_width, max_delay, hist)
    return hist


@numba.njit(cache=True, nogil=True)
def _trials_sorted(t, o):
    for k in range(o.size - 1):
        for a in range(o[k] + 1, o[k + 1]):
            if t[a] < t[a - 1]:
                return False
    return True


@dataclass(frozen=True, eq=False)
class CorrelationCurve:
    """Normalised coincidence histogram ``g(tau)`` for one detector pair.

    ``sigma`` is ``values / sqrt(raw_counts)``; empty bins carry ``nan``.
    """

    pair: str
    bin_edges: np.ndarray  # ticks
    values: np.ndarray
    raw_counts: np.ndarray
    sigma: np.ndarray
    singles_i: int = 0
    singles_j: int = 0
    live_time: float = 0.0
    tick: float = 100e-12
    meta: dict = field(default_factory=dict)

    @property
    def bin_width(self):
        return int(self.bin_edges[1] - self.bin_edges[0])

    @property
    def max_delay(self):
        return int(self.bin_edges[-1])

    @property
    def delays(self):
        """Bin centres in ticks."""
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def delays_ns(self):
        return self.delays * self.tick * 1e9

    @property
    def zero_bin(self):
        """Index of the bin containing ``tau = 0``."""
        return int(np.searchsorted(self.bin_edges, 0, side="right") - 1)

    @property
    def at_zero(self):
        return float(self.values[self.zero_bin])

    @property
    def flagged(self):
        """Bins whose uncertainty is undefined (no coincidences)."""
        return self.raw_counts == 0

    @classmethod
    def empty(cls, pair, bin_width, max_delay, tick=100e-12, live_time=0.0, singles=(0, 0)):
        edges = bin_edges(bin_width, max_delay)
        n = edges.size - 1
        return cls(pair, edges, np.zeros(n), np.zeros(n, dtype=np.int64), np.full(n, np.nan),
                   singles[0], singles[1], live_time, tick)


def normalize_g2(counts, singles_i, singles_j, live_time, bin_width, *,
                 edges=None, pair="", tick=100e-12, meta=None):
    """Normalise raw coincidences into a :class:`CorrelationCurve`.

    ``g(tau) = C(tau) * T_live / (N_i * N_j * bin_width)``, which tends to one
    for uncorrelated streams. ``bin_width`` and ``live_time`` are in seconds.

    Raises
    ------
    EmptyCurveError
        If either singles count is zero.
    """
    if singles_i <= 0 or singles_j <= 0:
        raise EmptyCurveError(f"pair {pair or '?'}: no singles on one detector")
    counts = np.asarray(counts, dtype=np.int64)
    values = counts * (live_time / (float(singles_i) * float(singles_j) * bin_width))
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(counts > 0, values / np.sqrt(counts), np.nan)
    if edges is None:
        n = counts.size
        w = int(round(bin_width / tick))
        edges = np.arange(-(n // 2) * w, (n - n // 2) * w + 1, w, dtype=np.int64)
    return CorrelationCurve(pair, np.asarray(edges, dtype=np.int64), values, counts, sigma,
                            int(singles_i), int(singles_j), float(live_time), tick, dict(meta or {}))


def ns_to_ticks(ns, tick):
    t = ns * 1e-9 / tick
    if abs(t - round(t)) > 1e-6:
        raise ValueError(f"{ns} ns is not a whole number of {tick * 1e12:g} ps ticks")
    return int(round(t))


def correlate_pair(stream_i, stream_j, bin_width, max_delay, pair=""):
    """Normalised curve for two streams; an empty detector gives zeros."""
    hist = stream_histogram(stream_i, stream_j, bin_width, max_delay)
    tick = stream_i.tick
    live = stream_i.live_time
    try:
        return normalize_g2(hist, len(stream_i), len(stream_j), live, bin_width * tick,
                            edges=bin_edges(bin_width, max_delay), pair=pair, tick=tick)
    except EmptyCurveError:
        return CorrelationCurve.empty(pair, bin_width, max_delay, tick, live,
                                      (len(stream_i), len(stream_j)))


def g2_matrix(streams, bin_width=None, max_delay=None):
    """The six curves 2a1a, 2b1a, 1b2a, 2b1b (cross) and 1b1a, 2b2a (auto).

    Parameters
    ----------
    streams : mapping
        Detector id -> :class:`~sfwm.emission.TimeTagStream`.
    bin_width, max_delay : int, optional
        In ticks; default to 0.4 ns and 20 ns.

    Raises
    ------
    ValueError
        If the four streams do not share tick and trial structure.
    """
    ref = streams["1a"]
    for s in streams.values():
        if not s.same_structure(ref):
            raise ValueError("all streams must share tick resolution and trial structure")
    if bin_width is None:
        bin_width = ns_to_ticks(DEFAULT_BIN_NS, ref.tick)
    if max_delay is None:
        max_delay = ns_to_ticks(DEFAULT_MAX_DELAY_NS, ref.tick)
    return {name: correlate_pair(streams[a], streams[b], bin_width, max_delay, name)
            for name, a, b in PAIRS}
