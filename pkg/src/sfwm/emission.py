"""Monte Carlo generation of time-tagged detections on detectors 1a, 1b, 2a, 2b.

Each field carries chaotic light with the triplet spectrum (one complex
Ornstein-Uhlenbeck envelope per spectral line) plus one photon from each
correlated sideband pair. Photons pass an optional Fabry-Perot filter, a
50/50 fibre splitter and a detector model before being digitised.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .model import triplet_from_config

DETECTORS = ("1a", "1b", "2a", "2b")

CHAOTIC, PAIR = 0, 1

# envelope grid step in units of the shortest coherence time 1/(pi * linewidth)
ENVELOPE_RESOLUTION = 0.05

_STAGES = {"pairs": 1, "field-1": 2, "field-2": 3, "detect-1": 4, "detect-2": 5}


def stage_rng(master_seed, trial, stage):
    """Generator for one (trial, stage) cell, independent of execution order."""
    code = _STAGES[stage] if isinstance(stage, str) else int(stage)
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial), code))
    return np.random.default_rng(ss)


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def worker_count(threads=None):
    """Worker threads to use; ``SFWM_THREADS`` caps it (0 or unset = auto)."""
    if threads is None:
        threads = int(os.environ.get("SFWM_THREADS", "0") or 0)
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


# --------------------------------------------------------------------------
# chaotic light


@dataclass(frozen=True, eq=False)
class ChaoticField:
    """One realisation of a multi-line chaotic field over a trial.

    ``envelopes[k]`` is a unit-power complex OU process sampled every
    ``step * strides[k]``; between grid points it is linearly interpolated
    while the carrier ``exp(2 pi i nu_k t)`` is evaluated exactly, so the
    beat notes between lines are never under-sampled.
    """

    duration: float
    step: float
    offsets: np.ndarray  # Hz from resonance, all triplet lines
    weights: np.ndarray
    active: np.ndarray  # indices of lines with nonzero weight
    rotation: np.ndarray  # Hz relative to the pump, active lines only
    strides: tuple
    envelopes: tuple  # complex arrays, one per active line
    mean_flux: float

    @property
    def n_cells(self):
        return int(math.ceil(self.duration / self.step - 1e-9))

    def _amplitudes(self, transmission):
        w = self.weights[self.active]
        if transmission is not None:
            w = w * np.asarray(transmission, dtype=float)[self.active]
        return np.sqrt(w * self.mean_flux)

    def amplitude(self, t, transmission=None):
        """Field at times ``t`` in sqrt(photons/s)."""
        t = np.asarray(t, dtype=float)
        amp = self._amplitudes(transmission)
        out = np.zeros(t.shape, dtype=complex)
        for a, env, nu, m in zip(amp, self.envelopes, self.rotation, self.strides):
            if a == 0:
                continue
            pos = t / (self.step * m)
            cell = np.minimum(pos.astype(np.int64), env.size - 2)
            frac = pos - cell
            e = env[cell] * (1 - frac) + env[cell + 1] * frac
            out += a * e * np.exp(2j * np.pi * nu * t)
        return out

    def intensity(self, t, transmission=None):
        """Photon flux at times ``t`` (photons/s)."""
        return np.abs(self.amplitude(t, transmission)) ** 2

    def sample_arrivals(self, rng, transmission=None):
        """Arrival times of the Cox process driven by this field.

        Candidates are drawn from a piecewise-constant envelope bound
        ``(sum_k a_k max|A_k|)^2`` and kept with probability ``I(t)/bound``,
        which samples the exact inhomogeneous Poisson process.
        """
        amp = self._amplitudes(transmission)
        if not np.any(amp > 0):
            return np.empty(0)
        n_cells = self.n_cells
        root = np.zeros(n_cells)
        for a, env, m in zip(amp, self.envelopes, self.strides):
            if a == 0:
                continue
            mag = np.abs(env)
            cellmax = np.maximum(mag[:-1], mag[1:])
            # a fine cell always sits inside one coarse cell of this line
            root += a * np.repeat(cellmax, m)[:n_cells]
        bound = root * root
        lengths = np.full(n_cells, self.step)
        lengths[-1] = self.duration - self.step * (n_cells - 1)
        cum = np.concatenate(([0.0], np.cumsum(bound * lengths)))
        n = rng.poisson(cum[-1])
        if n == 0:
            return np.empty(0)
        u = np.sort(rng.uniform(0.0, cum[-1], n))
        cell = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, n_cells - 1)
        t = cell * self.step + (u - cum[cell]) / bound[cell]
        t = np.minimum(t, self.duration)
        keep = rng.uniform(0.0, 1.0, n) * bound[cell] < self.intensity(t, transmission)
        return t[keep]


@numba.njit(cache=True, nogil=True)
def _ou_recursion(noise, a, b):
    # noise[0] is the stationary initial value
    out = np.empty_like(noise)
    x = noise[0]
    out[0] = x
    for k in range(1, noise.size):
        x = a * x + b * noise[k]
        out[k] = x
    return out


def _ou_envelope(n, decay, step, rng):
    """Exact discretisation of a unit-power complex OU process."""
    a = math.exp(-decay * step)
    noise = rng.standard_normal(2 * n).view(np.complex128) * math.sqrt(0.5)
    return _ou_recursion(noise, a, math.sqrt(1 - a * a))


def chaotic_field(triplet, mean_flux, duration, rng):
    """Draw a :class:`ChaoticField` with the spectrum of ``triplet``."""
    rng = _as_rng(rng)
    weights = triplet.weights
    active = np.flatnonzero(weights > 0)
    decay = np.pi * triplet.linewidths[active]
    step = min(ENVELOPE_RESOLUTION / decay.max(), duration)
    n_cells = max(int(math.ceil(duration / step - 1e-9)), 1)
    strides, envs = [], []
    for g in decay:
        m = max(int(decay.max() / g), 1)
        n_grid = -(-n_cells // m) + 1
        strides.append(m)
        # linear interpolation averages <|A|^2> down to (2 + a)/3; undo it
        a = math.exp(-g * step * m)
        envs.append(_ou_envelope(n_grid, g, step * m, rng) * math.sqrt(3.0 / (2.0 + a)))
    return ChaoticField(
        duration=float(duration),
        step=step,
        offsets=triplet.offsets,
        weights=weights,
        active=active,
        rotation=triplet.offsets[active] - triplet.pump_offset,
        strides=tuple(strides),
        envelopes=tuple(envs),
        mean_flux=float(mean_flux),
    )


class IntensityTrace(NamedTuple):
    dt: float
    intensity: np.ndarray
    field: np.ndarray

    @property
    def times(self):
        return np.arange(self.intensity.size) * self.dt


def fastest_frequency(triplet):
    """Largest beat note or linewidth among the populated lines (Hz)."""
    on = triplet.weights > 0
    off = triplet.offsets[on]
    beat = off.max() - off.min()
    return max(beat, triplet.linewidths[on].max())


def chaotic_field_trial(triplet, mean_flux, dt, duration, seed):
    """Sampled chaotic intensity ``I(t) = |E(t)|^2`` over one trial.

    Each line is a complex OU process with decay rate ``pi * linewidth`` turning
    at its offset from the pump; the weighted sum is scaled so that the mean
    flux is ``mean_flux``.

    Raises
    ------
    ValueError
        If ``dt`` does not resolve the fastest beat note or linewidth by a
        factor 20.
    """
    limit = 1.0 / (20.0 * fastest_frequency(triplet))
    if dt > limit:
        raise ValueError(f"dt = {dt:g} s too coarse; need dt <= {limit:g} s")
    fld = chaotic_field(triplet, mean_flux, duration, seed)
    t = np.arange(int(duration / dt)) * dt
    e = fld.amplitude(t)
    return IntensityTrace(dt, np.abs(e) ** 2, e)


# --------------------------------------------------------------------------
# sideband pairs


class PhotonEvent(NamedTuple):
    emission_time: float
    field_id: int
    freq_offset: float
    origin: int = PAIR


def pair_delay_density(delay, decay, osc):
    """Normalised two-photon delay density ``~ exp(-decay d)(1 - cos(osc d))``."""
    d = np.asarray(delay, dtype=float)
    norm = osc**2 / (decay * (decay**2 + osc**2))
    p = np.exp(-decay * d) * (1 - np.cos(osc * d)) / norm
    return np.where(d >= 0, p, 0.0)


def sample_pair_delays(decay, osc, n, rng):
    """Draw ``n`` delays from :func:`pair_delay_density` by rejection from an
    exponential proposal."""
    out = np.empty(n)
    have = 0
    accept = 0.5 * osc**2 / (decay**2 + osc**2)
    while have < n:
        m = int((n - have) / accept * 1.1) + 16
        d = rng.exponential(1.0 / decay, m)
        ok = d[rng.uniform(0.0, 2.0, m) < 1 - np.cos(osc * d)]
        take = min(ok.size, n - have)
        out[have:have + take] = ok[:take]
        have += take
    return out


def draw_pair(config, seed, t0=0.0):
    """One sideband pair: the off-resonant photon leaves first at ``t0`` in a
    random field, its resonant partner follows in the other field."""
    rng = _as_rng(seed)
    trip = triplet_from_config(config)
    first = int(rng.integers(1, 3))
    delay = sample_pair_delays(config.pair_decay, config.pair_osc, 1, rng)[0]
    return (
        PhotonEvent(t0, first, trip.upper.offset),
        PhotonEvent(t0 + delay, 3 - first, trip.lower.offset),
    )


class FieldEvents(NamedTuple):
    """Photon events reaching one field's collection fibre in a trial."""

    time: np.ndarray
    freq_offset: np.ndarray
    origin: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0), np.empty(0, dtype=np.int8))

    @classmethod
    def from_events(cls, events):
        events = sorted(events, key=lambda e: e.emission_time)
        return cls(
            np.array([e.emission_time for e in events], dtype=float),
            np.array([e.freq_offset for e in events], dtype=float),
            np.array([e.origin for e in events], dtype=np.int8),
        )


def trial_pairs(config, triplet, rng):
    """Pair photons of one trial, split by field: ``(field1, field2)``."""
    T = config.trial_duration
    n = rng.poisson(config.pair_rate * T)
    t0 = rng.uniform(0.0, T, n)
    first = rng.integers(1, 3, n)
    delay = sample_pair_delays(config.pair_decay, config.pair_osc, n, rng)
    out = []
    for f in (1, 2):
        off = first == f
        res = ~off
        t = np.concatenate((t0[off], t0[res] + delay[res]))
        nu = np.concatenate((np.full(off.sum(), triplet.upper.offset),
                             np.full(res.sum(), triplet.lower.offset)))
        keep = t <= T
        t, nu = t[keep], nu[keep]
        order = np.argsort(t, kind="stable")
        out.append(FieldEvents(t[order], nu[order], np.full(t.size, PAIR, dtype=np.int8)))
    return tuple(out)


# --------------------------------------------------------------------------
# detection


@numba.njit(cache=True, nogil=True)
def _dead_time_mask(ticks, min_gap):
    keep = np.zeros(ticks.size, dtype=np.bool_)
    last = 0
    have = False
    for k in range(ticks.size):
        if not have or ticks[k] - last >= min_gap:
            keep[k] = True
            last = ticks[k]
            have = True
    return keep


def apply_dead_time(sorted_ticks, dead_ticks):
    """Keep tags at least ``max(dead_ticks, 1)`` after the previous kept tag."""
    if sorted_ticks.size == 0:
        return sorted_ticks
    return sorted_ticks[_dead_time_mask(sorted_ticks, max(int(dead_ticks), 1))]


def detect(events, chaotic, config, filt, rng):
    """Detected tags on the two detectors (a, b) behind one field.

    Parameters
    ----------
    events : FieldEvents
        Explicit photons (sideband pairs) with definite frequencies; each
        survives with probability ``efficiency * T_filter(freq)``.
    chaotic : ChaoticField or None
        Chaotic light; the filter acts on each spectral line's amplitude
        before the Cox process is sampled, then ``efficiency`` applies.
    filt : FabryPerotFilter or None
    rng : numpy.random.Generator

    Returns
    -------
    (ndarray, ndarray)
        Sorted integer tick tags for detectors a and b.
    """
    rng = _as_rng(rng)
    det = config.detector
    T = config.trial_duration
    eta = det.efficiency

    p = np.full(events.time.size, eta)
    if filt is not None and events.time.size:
        p = p * filt.transmission(events.freq_offset)
    t_ev = events.time[rng.uniform(0.0, 1.0, events.time.size) < p]

    if chaotic is not None:
        trans = None if filt is None else filt.transmission(chaotic.offsets)
        t_ch = chaotic.sample_arrivals(rng, trans)
        t_ch = t_ch[rng.uniform(0.0, 1.0, t_ch.size) < eta]
    else:
        t_ch = np.empty(0)

    t = np.concatenate((t_ev, t_ch))
    to_b = rng.uniform(0.0, 1.0, t.size) < 0.5
    sigma = det.jitter_fwhm / (2 * math.sqrt(2 * math.log(2)))
    max_tick = int(round(T / det.tick))
    out = []
    for sel in (~to_b, to_b):
        ts = t[sel]
        if sigma > 0:
            ts = ts + rng.normal(0.0, sigma, ts.size)
        n_dark = rng.poisson(det.dark_rate * T)
        ts = np.concatenate((ts, rng.uniform(0.0, T, n_dark)))
        ticks = np.floor(ts / det.tick).astype(np.int64)
        ticks = ticks[(ticks >= 0) & (ticks <= max_tick)]
        ticks.sort(kind="stable")
        out.append(apply_dead_time(ticks, det.dead_ticks))
    return out[0], out[1]


# --------------------------------------------------------------------------
# time-tag streams


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    """Tags of one detector, concatenated over trials.

    Trial ``k`` occupies ``ticks[offsets[k]:offsets[k + 1]]``; timestamps are
    ticks counted from the start of that trial's pump window.
    """

    detector_id: str
    ticks: np.ndarray
    offsets: np.ndarray
    tick: float = 100e-12
    trial_ticks: int = 500_000

    @classmethod
    def from_trials(cls, detector_id, trials, tick, trial_ticks):
        sizes = [len(t) for t in trials]
        offsets = np.zeros(len(trials) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        ticks = np.concatenate(trials).astype(np.int64) if trials else np.empty(0, np.int64)
        return cls(detector_id, ticks, offsets, tick, int(trial_ticks))

    @property
    def n_trials(self):
        return self.offsets.size - 1

    @property
    def live_time(self):
        return self.n_trials * self.trial_ticks * self.tick

    def __len__(self):
        return int(self.ticks.size)

    def trial(self, k):
        return self.ticks[self.offsets[k]:self.offsets[k + 1]]

    def trials(self):
        for k in range(self.n_trials):
            yield k, self.trial(k)

    def same_structure(self, other):
        return (self.n_trials == other.n_trials and self.tick == other.tick
                and self.trial_ticks == other.trial_ticks)

    def equals(self, other):
        return (self.detector_id == other.detector_id and self.same_structure(other)
                and np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.ticks, other.ticks))

    def check(self, dead_ticks=0):
        """Raise ``ValueError`` if a stream invariant is broken."""
        gap = max(int(dead_ticks), 1)
        for k, t in self.trials():
            if t.size and (t[0] < 0 or t[-1] > self.trial_ticks):
                raise ValueError(f"{self.detector_id}: trial {k} has tags outside the window")
            if t.size > 1 and np.diff(t).min() < gap:
                raise ValueError(f"{self.detector_id}: trial {k} violates ordering or dead time")

    def thinned(self, keep_prob, rng):
        """Independent Bernoulli thinning of every tag."""
        keep = _as_rng(rng).uniform(0.0, 1.0, self.ticks.size) < keep_prob
        owner = np.repeat(np.arange(self.n_trials), np.diff(self.offsets))
        offsets = np.zeros_like(self.offsets)
        np.cumsum(np.bincount(owner[keep], minlength=self.n_trials), out=offsets[1:])
        return TimeTagStream(self.detector_id, self.ticks[keep], offsets, self.tick, self.trial_ticks)


def simulate_trial(config, trial, filters=(None, None), triplet=None):
    """Tags of the four detectors for a single trial (order 1a, 1b, 2a, 2b)."""
    trip = triplet or triplet_from_config(config)
    seed = config.rng_seed
    pairs = trial_pairs(config, trip, stage_rng(seed, trial, "pairs"))
    out = []
    for f in (1, 2):
        if config.rayleigh_rate > 0:
            fld = chaotic_field(trip, config.rayleigh_rate, config.trial_duration,
                                stage_rng(seed, trial, f"field-{f}"))
        else:
            fld = None
        out.extend(detect(pairs[f - 1], fld, config, filters[f - 1],
                          stage_rng(seed, trial, f"detect-{f}")))
    return out


def simulate_run(config, filters=(None, None), threads=None, trials=None):
    """Simulate ``config.n_trials`` pump windows.

    Output is a deterministic function of ``(config, filters)``: every trial
    draws from its own seed cells, so any thread count yields identical
    streams.

    Returns
    -------
    dict
        ``{"1a": TimeTagStream, "1b": ..., "2a": ..., "2b": ...}``
    """
    trip = triplet_from_config(config)
    idx = range(config.n_trials) if trials is None else trials
    work = worker_count(threads)

    def one(k):
        return simulate_trial(config, k, filters, trip)

    if work == 1:
        per_trial = [one(k) for k in idx]
    else:
        with ThreadPoolExecutor(max_workers=work) as pool:
            per_trial = list(pool.map(one, idx))
    tick = config.detector.tick
    return {
        d: TimeTagStream.from_trials(d, [tr[i] for tr in per_trial], tick, config.trial_ticks)
        for i, d in enumerate(DETECTORS)
    }
