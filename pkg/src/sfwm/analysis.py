"""Quantities derived from the correlation curves.

* :func:`siegert_invert` -- ``|g1| = sqrt(g2 - 1)`` for thermal light
* :func:`spectrum_fft` -- beat-note spectrum from ``|g1|``
* :func:`cauchy_schwarz` -- ratios R1, R2 and their mean with uncertainty
* :func:`time_ordering_check` -- which delay sign carries the violation
* :func:`detuning_sweep` -- ``R_max`` versus detuning, with and without filters
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .correlator import (DEFAULT_BIN_NS, DEFAULT_MAX_DELAY_NS, g2_matrix,
                         ns_to_ticks)
from .emission import simulate_run
from .model import FabryPerotFilter, filter_alpha, filters_for_arm

logger = logging.getLogger(__name__)

CLAMP_WARN_FRACTION = 0.2

POSITIVE, NEGATIVE, SYMMETRIC = "positive-delay", "negative-delay", "symmetric"


class CauchySchwarzError(ValueError):
    """The zero-delay auto-correlation bins cannot serve as denominators."""


class FieldCorrelation(NamedTuple):
    """``|g1(tau)|`` on the binning of the auto-correlation it came from."""

    bin_edges: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    tick: float = 100e-12
    pair: str = ""

    @property
    def delays(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def siegert_invert(auto_curve):
    """Field correlation magnitude from an intensity auto-correlation.

    Bins with ``g2 < 1`` are clamped to ``|g1| = 0``; a ``RuntimeWarning`` is
    issued when more than 20 % of bins clamp, which points at non-thermal
    input. Uncertainty: ``sigma_g1 = sigma_g2 / (2 |g1|)``.
    """
    g2 = np.asarray(auto_curve.values, dtype=float)
    excess = g2 - 1.0
    clamped = excess < 0
    if clamped.mean() > CLAMP_WARN_FRACTION:
        warnings.warn(f"{clamped.mean():.0%} of bins have g2 < 1; input may not be thermal",
                      RuntimeWarning, stacklevel=2)
    g1 = np.sqrt(np.maximum(excess, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(g1 > 0, np.asarray(auto_curve.sigma) / (2 * g1), np.nan)
    return FieldCorrelation(np.asarray(auto_curve.bin_edges), g1, sigma,
                            auto_curve.tick, auto_curve.pair)


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    freq: np.ndarray  # Hz, beat-note offsets
    magnitude: np.ndarray  # normalised to a unit maximum
    field_id: int | None
    resolution: float  # Hz

    def peak_near(self, freq, half_width=None):
        """Largest magnitude within ``half_width`` (default 2 bins) of ``freq``."""
        hw = 2 * self.resolution if half_width is None else half_width
        sel = np.abs(self.freq - freq) <= hw
        k = np.flatnonzero(sel)[np.argmax(self.magnitude[sel])]
        return float(self.freq[k]), float(self.magnitude[k])


def _field_of(pair):
    return int(pair[0]) if pair and pair[0] in "12" else None


def spectrum_fft(g1_curve, pad=1):
    """Magnitude spectrum of ``|g1(tau)|``, normalised to unit maximum.

    The curve is symmetrised about ``tau = 0`` (mean of ``tau`` and ``-tau``
    bins) before the transform. The magnitude-only input makes the frequency
    axis a beat-note axis: lines split by ``Delta`` show up at ``+-Delta``.

    Parameters
    ----------
    g1_curve : FieldCorrelation
        Any object with ``bin_edges`` (ticks), ``values`` and ``tick``.
    pad : int
        Zero-padding factor.

    Raises
    ------
    ValueError
        On non-uniform or asymmetric delay bins.
    """
    edges = np.asarray(g1_curve.bin_edges)
    widths = np.diff(edges)
    if widths.size == 0 or np.any(widths != widths[0]):
        raise ValueError("spectrum_fft needs uniform delay bins")
    if edges[0] != -edges[-1]:
        raise ValueError("delay bins must be symmetric about zero")
    v = np.asarray(g1_curve.values, dtype=float)
    v = 0.5 * (v + v[::-1])
    dt = widths[0] * g1_curve.tick
    n = v.size * int(pad)
    mag = np.abs(np.fft.fftshift(np.fft.fft(v, n)))
    freq = np.fft.fftshift(np.fft.fftfreq(n, d=dt))
    top = mag.max()
    if top > 0:
        mag = mag / top
    return SpectrumEstimate(freq, mag, _field_of(getattr(g1_curve, "pair", "")), 1.0 / (n * dt))


@dataclass(frozen=True, eq=False)
class CauchySchwarzResult:
    delays: np.ndarray  # bin centres, ticks
    tick: float
    r1: np.ndarray
    r2: np.ndarray
    rbar: np.ndarray
    sigma: np.ndarray
    rbar_max: float
    rbar_max_sigma: float
    rbar_max_delay: float  # ticks

    @property
    def violated(self):
        """Violation of ``R <= 1`` by more than one standard deviation."""
        return bool(self.rbar_max - self.rbar_max_sigma > 1.0)

    @property
    def delays_ns(self):
        return self.delays * self.tick * 1e9


def _rel_var(curve):
    with np.errstate(divide="ignore", invalid="ignore"):
        return (np.asarray(curve.sigma) / np.asarray(curve.values)) ** 2


def cauchy_schwarz(curves):
    """Cauchy-Schwarz ratios from the six correlation curves.

    ``R1 = g_2b1a g_2a1b / (g_1b1a(0) g_2b2a(0))`` and
    ``R2 = g_2a1a g_2b1b / (g_1b1a(0) g_2b2a(0))``; classical light obeys
    ``R <= 1``. The relative variance of each ratio is the sum of those of
    its four factors, and ``sigma_Rbar = sqrt(sigma_R1^2 + sigma_R2^2) / 2``.

    Raises
    ------
    CauchySchwarzError
        If a zero-delay auto-correlation bin holds no coincidences.
    """
    a1, a2 = curves["1b1a"], curves["2b2a"]
    edges = np.asarray(a1.bin_edges)
    for name, c in curves.items():
        if not np.array_equal(np.asarray(c.bin_edges), edges):
            raise ValueError(f"curve {name} uses a different binning")
    for c in (a1, a2):
        if c.raw_counts[c.zero_bin] <= 0:
            raise CauchySchwarzError(f"auto-correlation {c.pair} has an empty zero-delay bin")
    z1, z2 = a1.zero_bin, a2.zero_bin
    denom = a1.values[z1] * a2.values[z2]
    den_var = _rel_var(a1)[z1] + _rel_var(a2)[z2]

    def ratio(x, y):
        r = np.asarray(x.values) * np.asarray(y.values) / denom
        with np.errstate(invalid="ignore"):
            s = r * np.sqrt(_rel_var(x) + _rel_var(y) + den_var)
        return r, s

    r1, s1 = ratio(curves["2b1a"], curves["1b2a"])
    r2, s2 = ratio(curves["2a1a"], curves["2b1b"])
    rbar = 0.5 * (r1 + r2)
    sigma = 0.5 * np.sqrt(s1**2 + s2**2)
    k = int(np.argmax(rbar))
    delays = 0.5 * (edges[:-1] + edges[1:])
    return CauchySchwarzResult(delays, a1.tick, r1, r2, rbar, sigma,
                               float(rbar[k]), float(sigma[k]), float(delays[k]))


def time_ordering_check(result, n_sigma=1.0):
    """Which delay sign carries ``Rbar > 1``.

    A bin counts when ``rbar - n_sigma * sigma > 1`` (bins without a defined
    uncertainty never count). Returns ``"positive-delay"``,
    ``"negative-delay"`` or ``"symmetric"`` (both signs, or neither).
    """
    with np.errstate(invalid="ignore"):
        hot = result.rbar - n_sigma * np.nan_to_num(result.sigma, nan=np.inf) > 1.0
    pos = bool(np.any(hot & (result.delays > 0)))
    neg = bool(np.any(hot & (result.delays < 0)))
    if pos and not neg:
        return POSITIVE
    if neg and not pos:
        return NEGATIVE
    return SYMMETRIC


def run_pipeline(config, arm="none", bin_ns=DEFAULT_BIN_NS, max_delay_ns=DEFAULT_MAX_DELAY_NS,
                 threads=None, filter_template=None):
    """simulate -> correlate -> Cauchy-Schwarz for one configuration.

    Returns ``(curves, result)``.
    """
    streams = simulate_run(config, filters_for_arm(config, arm, filter_template), threads)
    tick = config.detector.tick
    curves = g2_matrix(streams, ns_to_ticks(bin_ns, tick), ns_to_ticks(max_delay_ns, tick))
    return curves, cauchy_schwarz(curves)


class SweepPoint(NamedTuple):
    delta_over_gamma: float
    alpha: float
    rbar_max: float
    sigma: float
    filtered: bool
    arm: str
    status: str = "ok"


def _point_seed(master, index, arm_index):
    ss = np.random.SeedSequence(entropy=master, spawn_key=(0x5EE9, index, arm_index))
    return int(ss.generate_state(1, np.uint64)[0])


def detuning_sweep(base, detunings, arms=("none", "resonant-1"), bin_ns=DEFAULT_BIN_NS,
                   max_delay_ns=DEFAULT_MAX_DELAY_NS, threads=None, filter_template=None):
    """``R_max`` versus detuning for each filter arm.

    Every (detuning, arm) point runs the full pipeline with a seed derived
    from ``base.rng_seed``; failures are recorded in ``status`` and the sweep
    carries on. Rows come back ordered by detuning, then arm.
    """
    fp = filter_template or FabryPerotFilter()
    rows = []
    for i, d in enumerate(detunings):
        for j, arm in enumerate(arms):
            filtered = arm != "none"
            try:
                if not d > 0:
                    raise ValueError(f"detuning must be > 0, got {d}")
                cfg = replace(base.with_detuning(d), rng_seed=_point_seed(base.rng_seed, i, j))
                alpha = filter_alpha(fp, cfg.delta_hz) if filtered else 1.0
                _, res = run_pipeline(cfg, arm, bin_ns, max_delay_ns, threads, fp)
                rows.append(SweepPoint(float(d), alpha, res.rbar_max, res.rbar_max_sigma,
                                       filtered, arm))
            except Exception as exc:  # noqa: BLE001 -- recorded per point
                logger.warning("sweep point %s/%s failed: %s", d, arm, exc)
                rows.append(SweepPoint(float(d), float("nan"), float("nan"), float("nan"),
                                       filtered, arm, f"failed: {exc}"))
    return rows
