"""Physical parameters, the emission triplet and the Fabry-Perot filter model.

All frequencies are stored as offsets (in Hz) from the atomic resonance
``omega_0``; the pump sits at ``+Delta`` by construction, so absolute optical
frequencies never appear.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

#: natural linewidth Gamma/2pi of the 87Rb D2 line (Hz)
RB87_GAMMA = 6.0666e6

FILTER_ARMS = ("none", "resonant-1", "resonant-2")


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class DetectorModel:
    """Single-photon counting module followed by a time digitiser.

    Parameters
    ----------
    quantum_efficiency, coupling_efficiency : float
        Detector and fibre-coupling efficiencies in [0, 1].
    dead_time : float
        Non-paralysable dead time (s).
    dark_rate : float
        Dark count rate (Hz).
    jitter_fwhm : float
        FWHM of the Gaussian timing jitter (s).
    tick : float
        Digitiser resolution (s).
    """

    quantum_efficiency: float = 0.6
    coupling_efficiency: float = 0.7
    dead_time: float = 22e-9
    dark_rate: float = 250.0
    jitter_fwhm: float = 350e-12
    tick: float = 100e-12

    def __post_init__(self):
        for name in ("quantum_efficiency", "coupling_efficiency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"detector.{name}", f"must lie in [0, 1], got {v}")
        for name in ("dead_time", "dark_rate", "jitter_fwhm"):
            if getattr(self, name) < 0:
                raise ConfigError(f"detector.{name}", "must be >= 0")
        if not self.tick > 0:
            raise ConfigError("detector.tick", "must be > 0")

    @property
    def efficiency(self):
        return self.coupling_efficiency * self.quantum_efficiency

    @property
    def dead_ticks(self):
        return int(round(self.dead_time / self.tick))

    @property
    def tick_ps(self):
        return int(round(self.tick * 1e12))


@dataclass(frozen=True)
class ExperimentConfig:
    """Every physical and acquisition parameter of a run.

    ``detuning`` is the pump detuning in units of ``gamma`` (Hz). The
    two-photon waveform parameters ``biphoton_decay`` and ``biphoton_osc``
    are angular rates in s^-1; left as ``None`` they follow ``2 pi gamma`` and
    ``2 pi Delta`` respectively. ``triplet_linewidths`` defaults to
    ``(gamma/2, 1 MHz, gamma/2)``.
    """

    detuning: float = 50.0
    gamma: float = RB87_GAMMA
    pump_power: float = 350e-6
    optical_depth: float = 15.0
    trial_duration: float = 50e-6
    cycle_period: float = 25e-3
    n_trials: int = 1000
    pair_rate: float = 2.3e3
    rayleigh_rate: float = 2.5e5
    triplet_weights: tuple = (0.01, 0.98, 0.01)
    triplet_linewidths: tuple | None = None
    biphoton_decay: float | None = None
    biphoton_osc: float | None = None
    rabi_frequency: float | None = None
    detector: DetectorModel = field(default_factory=DetectorModel)
    rng_seed: int = 0

    def __post_init__(self):
        if not self.detuning > 0:
            raise ConfigError("detuning", "multiplier must be > 0")
        if not self.gamma > 0:
            raise ConfigError("gamma", "must be > 0")
        for name in ("pump_power", "optical_depth", "pair_rate", "rayleigh_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")
        if not 0 < self.trial_duration <= self.cycle_period:
            raise ConfigError("trial_duration", "must lie in (0, cycle_period]")
        if int(self.n_trials) != self.n_trials or self.n_trials < 1:
            raise ConfigError("n_trials", "must be a positive integer")
        object.__setattr__(self, "n_trials", int(self.n_trials))
        w = tuple(float(x) for x in self.triplet_weights)
        if len(w) != 3:
            raise ConfigError("triplet_weights", "need exactly three weights")
        if any(not 0.0 <= x <= 1.0 for x in w):
            raise ConfigError("triplet_weights", "each weight must lie in [0, 1]")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ConfigError("triplet_weights", f"must sum to 1, got {sum(w)!r}")
        object.__setattr__(self, "triplet_weights", w)
        if self.triplet_linewidths is None:
            lw = (self.gamma / 2, 1e6, self.gamma / 2)
        else:
            lw = tuple(float(x) for x in self.triplet_linewidths)
        if len(lw) != 3 or any(not x > 0 for x in lw):
            raise ConfigError("triplet_linewidths", "need three positive linewidths")
        object.__setattr__(self, "triplet_linewidths", lw)
        for name in ("biphoton_decay", "biphoton_osc"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(name, "must be > 0")
        if self.rabi_frequency is not None and self.rabi_frequency < 0:
            raise ConfigError("rabi_frequency", "must be >= 0")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigError("rng_seed", "must be a 64-bit unsigned integer")
        object.__setattr__(self, "rng_seed", int(self.rng_seed))

    @property
    def delta_hz(self):
        """Pump detuning Delta in Hz (pump offset from resonance)."""
        return self.detuning * self.gamma

    @property
    def sideband_shift(self):
        """Sideband distance from the pump line (Hz)."""
        if self.rabi_frequency:
            return math.hypot(self.delta_hz, self.rabi_frequency)
        return self.delta_hz

    @property
    def pair_decay(self):
        return self.biphoton_decay if self.biphoton_decay is not None else 2 * math.pi * self.gamma

    @property
    def pair_osc(self):
        return self.biphoton_osc if self.biphoton_osc is not None else 2 * math.pi * self.delta_hz

    @property
    def live_time(self):
        return self.n_trials * self.trial_duration

    @property
    def trial_ticks(self):
        return int(round(self.trial_duration / self.detector.tick))

    def with_detuning(self, detuning):
        return replace(self, detuning=float(detuning))


class SpectralComponent(NamedTuple):
    offset: float
    weight: float
    linewidth: float


@dataclass(frozen=True)
class SpectralTriplet:
    """Lower sideband, Rayleigh line and upper sideband, in that order."""

    components: tuple

    def __post_init__(self):
        comps = tuple(SpectralComponent(*map(float, c)) for c in self.components)
        if len(comps) != 3:
            raise ValueError("a triplet has exactly three components")
        weights = [c.weight for c in comps]
        if any(not 0.0 <= w <= 1.0 for w in weights) or abs(sum(weights) - 1) > 1e-9:
            raise ValueError(f"triplet weights must lie in [0, 1] and sum to 1, got {weights}")
        object.__setattr__(self, "components", comps)

    @property
    def offsets(self):
        return np.array([c.offset for c in self.components])

    @property
    def weights(self):
        return np.array([c.weight for c in self.components])

    @property
    def linewidths(self):
        return np.array([c.linewidth for c in self.components])

    @property
    def pump_offset(self):
        return self.components[1].offset

    @property
    def lower(self):
        return self.components[0]

    @property
    def upper(self):
        return self.components[2]


def triplet_from_config(config):
    """Build the emission triplet of ``config``.

    The Rayleigh line sits on the pump (offset Delta); the sidebands sit at
    ``Delta -/+ shift``, i.e. on resonance and at ``2 Delta`` unless a Rabi
    frequency is configured.
    """
    d = config.delta_hz
    s = config.sideband_shift
    w = config.triplet_weights
    lw = config.triplet_linewidths
    if abs(sum(w) - 1.0) > 1e-9:
        raise ValueError(f"triplet weights must sum to 1, got {sum(w)!r}")
    return SpectralTriplet(((d - s, w[0], lw[0]), (d, w[1], lw[1]), (d + s, w[2], lw[2])))


@dataclass(frozen=True)
class FabryPerotFilter:
    """Fibre Fabry-Perot filter; defaults give FWHM ~ 606 MHz and 3 dB loss."""

    center_offset: float = 0.0
    fsr: float = 20e9
    finesse: float = 33.0
    peak_transmission: float = 0.5

    def __post_init__(self):
        if not self.fsr > 0 or not self.finesse > 0:
            raise ValueError("fsr and finesse must be positive")
        if not 0 < self.peak_transmission <= 1:
            raise ValueError("peak_transmission must lie in (0, 1]")

    @property
    def fwhm(self):
        return self.fsr / self.finesse

    @property
    def min_transmission(self):
        return self.peak_transmission / (1 + (2 * self.finesse / math.pi) ** 2)

    def transmission(self, freq_offset):
        """Transmission at ``freq_offset`` measured from resonance ``omega_0``."""
        return airy_transmission(self, np.asarray(freq_offset) - self.center_offset)

    def tuned(self, center_offset):
        return replace(self, center_offset=float(center_offset))


def airy_transmission(filt, freq_offset):
    """Airy intensity transmission at ``freq_offset`` Hz from the filter peak.

    ``T = T_max / (1 + (2F/pi)^2 sin^2(pi nu / FSR))``
    """
    coeff = (2.0 * filt.finesse / np.pi) ** 2
    # fold into one period first so that T(nu + k FSR) == T(nu) bit-for-bit
    nu = np.remainder(np.abs(freq_offset), filt.fsr)
    nu = np.minimum(nu, filt.fsr - nu)
    t = filt.peak_transmission / (1.0 + coeff * np.sin(np.pi * nu / filt.fsr) ** 2)
    return float(t) if np.ndim(t) == 0 else t


def filter_alpha(filt, pump_offset):
    """Relative filter transmission at the pump line, a filter centred
    ``pump_offset`` away from it (on resonance or at ``2 Delta``)."""
    return airy_transmission(filt, pump_offset) / filt.peak_transmission


def filters_for_arm(config, arm, template=None):
    """Per-field filters ``(fp1, fp2)`` for a named arm.

    ``"resonant-1"`` puts the field-1 filter on resonance and the field-2
    filter at ``2 Delta``; ``"resonant-2"`` swaps them; ``"none"`` removes both.
    """
    if arm not in FILTER_ARMS:
        raise ValueError(f"unknown filter arm {arm!r}; expected one of {FILTER_ARMS}")
    if arm == "none":
        return (None, None)
    fp = template or FabryPerotFilter()
    trip = triplet_from_config(config)
    res, off = fp.tuned(trip.lower.offset), fp.tuned(trip.upper.offset)
    return (res, off) if arm == "resonant-1" else (off, res)


# --------------------------------------------------------------------------
# config file

_FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "μs": 1e-6, "ns": 1e-9, "ps": 1e-12}
_POWER_UNITS = {"w": 1.0, "mw": 1e-3, "uw": 1e-6, "µw": 1e-6, "μw": 1e-6}
_NUM = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
_QTY = re.compile(_NUM + r"\s*([a-zA-Zµμ]*)$")

_KINDS = {
    "detuning": "detuning",
    "gamma": "freq",
    "pump_power": "power",
    "optical_depth": "float",
    "trial_duration": "time",
    "cycle_period": "time",
    "n_trials": "int",
    "pair_rate": "freq",
    "rayleigh_rate": "freq",
    "triplet_weights": "floats",
    "triplet_linewidths": "freqs",
    "biphoton_decay": "freq",
    "biphoton_osc": "freq",
    "rabi_frequency": "freq",
    "rng_seed": "int",
    "detector.quantum_efficiency": "float",
    "detector.coupling_efficiency": "float",
    "detector.dead_time": "time",
    "detector.dark_rate": "freq",
    "detector.jitter_fwhm": "time",
    "detector.tick": "time",
}


def _quantity(key, text, units, gamma=None):
    m = _QTY.match(text.strip())
    if not m:
        raise ConfigError(key, f"cannot parse {text!r} as a number with optional unit")
    value, unit = float(m.group(1)), m.group(2).lower()
    if not unit:
        return value
    if unit == "gamma" and gamma is not None:
        return value * gamma
    if unit in units:
        return value * units[unit]
    raise ConfigError(key, f"unknown unit {m.group(2)!r}")


def _convert(key, kind, text, gamma):
    if text.lower() == "none":
        if key in ("triplet_linewidths", "biphoton_decay", "biphoton_osc", "rabi_frequency"):
            return None
        raise ConfigError(key, "may not be none")
    if kind == "int":
        try:
            return int(text, 0)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {text!r}") from None
    if kind == "float":
        return _quantity(key, text, {})
    if kind == "floats":
        return tuple(_quantity(key, t, {}) for t in text.split(","))
    if kind == "freq":
        return _quantity(key, text, _FREQ_UNITS, gamma)
    if kind == "freqs":
        return tuple(_quantity(key, t, _FREQ_UNITS, gamma) for t in text.split(","))
    if kind == "time":
        return _quantity(key, text, _TIME_UNITS)
    if kind == "power":
        return _quantity(key, text, _POWER_UNITS)
    if kind == "detuning":
        m = _QTY.match(text.strip())
        if m and m.group(2).lower() in ("", "gamma"):
            return float(m.group(1))
        return _quantity(key, text, _FREQ_UNITS) / gamma
    raise AssertionError(kind)


def parse_detuning(text, gamma=RB87_GAMMA):
    """Detuning multiplier from ``"50"``, ``"50gamma"`` or ``"303 MHz"``."""
    return _convert("detuning", "detuning", str(text), gamma)


def parse_config(text):
    """Parse ``key = value`` lines into an :class:`ExperimentConfig`.

    Blank lines and ``#`` comments are ignored. Frequencies take Hz/kHz/MHz/GHz
    suffixes or ``gamma`` multiples, times take s/ms/us/ns/ps and powers
    W/mW/uW. Detector parameters use dotted keys (``detector.dead_time``).
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            sep_idx = line.find(":")
            if sep_idx < 0:
                raise ConfigError(f"line {lineno}", "expected 'key = value'")
            key, value = line[:sep_idx], line[sep_idx + 1:]
        key = key.strip()
        if key not in _KINDS:
            raise ConfigError(key, "unknown configuration key")
        if key in raw:
            raise ConfigError(key, "duplicate key")
        raw[key] = value.strip()

    gamma = RB87_GAMMA
    if "gamma" in raw:
        gamma = _convert("gamma", "freq", raw["gamma"], None)
    top, det = {}, {}
    for key, value in raw.items():
        v = _convert(key, _KINDS[key], value, gamma)
        if key.startswith("detector."):
            det[key.split(".", 1)[1]] = v
        else:
            top[key] = v
    try:
        return ExperimentConfig(detector=DetectorModel(**det), **top)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(config):
    """Serialise ``config`` in the format read by :func:`parse_config`."""
    lines = []
    for f in fields(config):
        v = getattr(config, f.name)
        if f.name == "detector":
            for g in fields(v):
                lines.append(f"detector.{g.name} = {getattr(v, g.name)!r}")
        elif v is None:
            lines.append(f"{f.name} = none")
        elif isinstance(v, tuple):
            lines.append(f"{f.name} = " + ", ".join(repr(x) for x in v))
        else:
            lines.append(f"{f.name} = {v!r}")
    return "\n".join(lines) + "\n"


def lab_config(detuning=50.0, **overrides):
    """Operating point resembling the reported experiment.

    Rates are tuned so the unfiltered cross-field coincidence rate within a
    20 ns window is a few hundred Hz of pump-on time, with the unfiltered
    Cauchy-Schwarz ratio slightly above one.
    """
    return ExperimentConfig(detuning=detuning, **overrides)


def desk_config(detuning=60.0, **overrides):
    """Paper-like spectrum and filters with boosted rates.

    Brighter sources trade realism in absolute rates for statistics reachable
    in minutes; normalised quantities (g2, R) are what matter here. The pair
    rate puts the unfiltered R_max near 1.3 at 60 Gamma.
    """
    kw = dict(rayleigh_rate=1.0e7, pair_rate=3.2e6, n_trials=4000)
    kw.update(overrides)
    return ExperimentConfig(detuning=detuning, **kw)
