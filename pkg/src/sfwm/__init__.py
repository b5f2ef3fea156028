"""Simulation and correlation analysis of photon pairs from four-wave mixing
in a cold atomic ensemble, with Fabry-Perot filtering of the Rayleigh line."""

from .analysis import (CauchySchwarzError, CauchySchwarzResult, SpectrumEstimate, SweepPoint,
                       cauchy_schwarz, detuning_sweep, run_pipeline, siegert_invert,
                       spectrum_fft, time_ordering_check)
from .correlator import (PAIRS, CorrelationCurve, EmptyCurveError, brute_force_g2,
                         coincidence_histogram, g2_matrix, normalize_g2, stream_histogram)
from .emission import (DETECTORS, PhotonEvent, TimeTagStream, chaotic_field,
                       chaotic_field_trial, detect, draw_pair, simulate_run)
from .model import (ConfigError, DetectorModel, ExperimentConfig, FabryPerotFilter,
                    SpectralTriplet, airy_transmission, desk_config, filter_alpha,
                    filters_for_arm, load_config, lab_config, parse_config,
                    triplet_from_config)

__version__ = "0.1.0"

__all__ = [
    "CauchySchwarzError",
    "CauchySchwarzResult",
    "SpectrumEstimate",
    "SweepPoint",
    "cauchy_schwarz",
    "detuning_sweep",
    "run_pipeline",
    "siegert_invert",
    "spectrum_fft",
    "time_ordering_check",
    "PAIRS",
    "CorrelationCurve",
    "EmptyCurveError",
    "brute_force_g2",
    "coincidence_histogram",
    "g2_matrix",
    "normalize_g2",
    "stream_histogram",
    "DETECTORS",
    "PhotonEvent",
    "TimeTagStream",
    "chaotic_field",
    "chaotic_field_trial",
    "detect",
    "draw_pair",
    "simulate_run",
    "ConfigError",
    "DetectorModel",
    "ExperimentConfig",
    "FabryPerotFilter",
    "SpectralTriplet",
    "airy_transmission",
    "desk_config",
    "filter_alpha",
    "filters_for_arm",
    "load_config",
    "lab_config",
    "parse_config",
    "triplet_from_config",
]
