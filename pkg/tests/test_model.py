import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from sfwm.model import (RB87_GAMMA, ConfigError, DetectorModel, ExperimentConfig,
                        FabryPerotFilter, airy_transmission, filter_alpha, filters_for_arm,
                        format_config, parse_config, parse_detuning, triplet_from_config)

FP = FabryPerotFilter()


def airy_oracle(nu, fsr=20e9, finesse=33.0, peak=0.5):
    return peak / (1 + (2 * finesse / math.pi) ** 2 * math.sin(math.pi * nu / fsr) ** 2)


class TestAiry:
    def test_peak(self):
        assert airy_transmission(FP, 0.0) == 0.5

    def test_half_maximum(self):
        # Airy and Lorentzian half widths differ at the 1e-3 level for F = 33
        assert_allclose(airy_transmission(FP, FP.fwhm / 2), 0.25, rtol=1e-3)

    def test_antiresonance(self):
        expected = 0.5 / (1 + (66 / math.pi) ** 2)
        assert_allclose((66 / math.pi) ** 2, 441.3, atol=0.1)
        assert_allclose(airy_transmission(FP, 10e9), expected, rtol=1e-12)
        assert_allclose(airy_transmission(FP, 10e9), 1.13e-3, rtol=5e-3)
        assert_allclose(FP.min_transmission, expected, rtol=1e-12)

    def test_fwhm(self):
        assert_allclose(FP.fwhm, 606.06e6, rtol=1e-4)

    def test_matches_formula(self):
        nu = np.linspace(-3e10, 3e10, 1001)
        expected = [airy_oracle(x) for x in nu]
        assert_allclose(airy_transmission(FP, nu), expected, rtol=1e-10)

    @given(st.integers(-10**10, 10**10), st.integers(-500, 500))
    def test_periodic_exactly(self, nu, k):
        assert airy_transmission(FP, float(nu)) == airy_transmission(FP, float(nu + k * 20 * 10**9))

    @given(st.floats(-1e12, 1e12, allow_nan=False))
    def test_even_exactly(self, nu):
        assert airy_transmission(FP, nu) == airy_transmission(FP, -nu)

    @given(st.floats(-1e12, 1e12, allow_nan=False),
           st.floats(1e8, 1e11), st.floats(1.0, 200.0), st.floats(0.01, 1.0))
    def test_bounds(self, nu, fsr, finesse, peak):
        f = FabryPerotFilter(fsr=fsr, finesse=finesse, peak_transmission=peak)
        t = airy_transmission(f, nu)
        assert f.min_transmission * (1 - 1e-12) <= t <= peak

    def test_center_offset(self):
        f = FP.tuned(303e6)
        assert f.transmission(303e6) == 0.5
        assert_allclose(f.transmission(0.0), airy_oracle(303e6))

    def test_invalid_filter(self):
        with pytest.raises(ValueError):
            FabryPerotFilter(peak_transmission=0.0)
        with pytest.raises(ValueError):
            FabryPerotFilter(finesse=-1)


class TestAlpha:
    def test_on_peak(self):
        assert filter_alpha(FP, 0.0) == 1.0
        assert filter_alpha(FabryPerotFilter(fsr=5e9, finesse=10, peak_transmission=0.8), 0.0) == 1.0

    @pytest.mark.parametrize("mult, expected", [(20, 0.86), (50, 0.50)])
    def test_reported_points(self, mult, expected):
        d = mult * RB87_GAMMA
        assert_allclose(filter_alpha(FP, d), airy_oracle(d) / 0.5, rtol=1e-12)
        assert abs(filter_alpha(FP, d) - expected) < 0.01

    def test_monotone(self):
        d = np.linspace(0, 10e9, 5001)
        a = filter_alpha(FP, d)
        assert np.all(np.diff(a) < 0)


class TestTriplet:
    def test_positions(self):
        cfg = ExperimentConfig(detuning=50)
        trip = triplet_from_config(cfg)
        assert_allclose(trip.offsets, np.array([0, 50, 100]) * RB87_GAMMA, atol=1e-6)
        assert_allclose(trip.weights, [0.01, 0.98, 0.01])
        assert trip.pump_offset == cfg.delta_hz
        assert_allclose(trip.linewidths, [RB87_GAMMA / 2, 1e6, RB87_GAMMA / 2])

    def test_degenerate_limit(self):
        trip = triplet_from_config(ExperimentConfig(detuning=1e-12))
        assert_allclose(trip.offsets, 0.0, atol=1e-4)

    def test_single_line(self):
        trip = triplet_from_config(ExperimentConfig(triplet_weights=(0, 1, 0)))
        assert_allclose(trip.weights, [0, 1, 0])

    @given(st.floats(0.1, 500), st.floats(0, 1), st.floats(0, 1))
    def test_bookkeeping(self, mult, a, b):
        w = np.array([a, 1.0 + a + b, b])
        w = tuple(w / w.sum())
        trip = triplet_from_config(ExperimentConfig(detuning=mult, triplet_weights=w))
        assert abs(trip.weights.sum() - 1) < 1e-9
        o = trip.offsets
        assert_allclose(o[0] + o[2], 2 * o[1], rtol=1e-12)

    def test_rabi_shift(self):
        cfg = ExperimentConfig(detuning=50, rabi_frequency=3 * RB87_GAMMA)
        trip = triplet_from_config(cfg)
        shift = math.hypot(50, 3) * RB87_GAMMA
        assert_allclose(trip.upper.offset - trip.pump_offset, shift)
        assert_allclose(trip.pump_offset - trip.lower.offset, shift)

    def test_rejects_weights(self):
        with pytest.raises(ConfigError) as err:
            ExperimentConfig(triplet_weights=(0.1, 0.8, 0.2))
        assert err.value.field == "triplet_weights"


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.trial_ticks == 500_000
        assert_allclose(cfg.detector.efficiency, 0.42)
        assert_allclose(cfg.pair_decay, 2 * math.pi * RB87_GAMMA)
        assert_allclose(cfg.pair_osc, 2 * math.pi * 50 * RB87_GAMMA)

    @pytest.mark.parametrize("kw, name", [
        (dict(detuning=0), "detuning"),
        (dict(pair_rate=-1), "pair_rate"),
        (dict(trial_duration=1.0, cycle_period=0.5), "trial_duration"),
        (dict(n_trials=0), "n_trials"),
        (dict(triplet_weights=(0.5, 0.5)), "triplet_weights"),
        (dict(triplet_weights=(-0.1, 1.1, 0.0)), "triplet_weights"),
        (dict(biphoton_decay=0.0), "biphoton_decay"),
        (dict(rng_seed=-1), "rng_seed"),
    ])
    def test_invalid(self, kw, name):
        with pytest.raises(ConfigError) as err:
            ExperimentConfig(**kw)
        assert err.value.field == name

    def test_detector_invalid(self):
        with pytest.raises(ConfigError) as err:
            DetectorModel(quantum_efficiency=1.5)
        assert err.value.field == "detector.quantum_efficiency"

    def test_parse_units(self):
        text = """
        # operating point
        detuning = 303.33 MHz
        pump_power = 350 uW
        trial_duration = 50 us
        cycle_period: 25 ms
        pair_rate = 3.2 kHz
        rayleigh_rate = 250kHz
        triplet_weights = 0.01, 0.98, 0.01
        triplet_linewidths = 0.5gamma, 1 MHz, 0.5 gamma
        biphoton_osc = none
        detector.dead_time = 22 ns
        detector.jitter_fwhm = 350 ps
        rng_seed = 0x2a
        """
        cfg = parse_config(text)
        assert_allclose(cfg.detuning, 303.33e6 / RB87_GAMMA)
        assert_allclose(cfg.pump_power, 350e-6)
        assert_allclose(cfg.trial_duration, 50e-6)
        assert_allclose(cfg.cycle_period, 25e-3)
        assert_allclose(cfg.pair_rate, 3200)
        assert_allclose(cfg.triplet_linewidths, [RB87_GAMMA / 2, 1e6, RB87_GAMMA / 2])
        assert cfg.biphoton_osc is None
        assert_allclose(cfg.detector.dead_time, 22e-9)
        assert cfg.rng_seed == 42

    @pytest.mark.parametrize("text", ["50", "50gamma", "50 gamma"])
    def test_detuning_forms(self, text):
        assert parse_config(f"detuning = {text}").detuning == 50.0
        assert parse_detuning(text) == 50.0

    def test_gamma_key_applies_to_multiples(self):
        cfg = parse_config("gamma = 5 MHz\ndetuning = 100 MHz\npair_rate = 2gamma")
        assert_allclose(cfg.detuning, 20.0)
        assert_allclose(cfg.pair_rate, 10e6)

    @pytest.mark.parametrize("text, name", [
        ("detunin = 3", "detunin"),
        ("pair_rate = fast", "pair_rate"),
        ("trial_duration = 3 parsecs", "trial_duration"),
        ("pair_rate = 1\npair_rate = 2", "pair_rate"),
        ("n_trials = 2.5", "n_trials"),
        ("triplet_weights = 0.2, 0.2, 0.2", "triplet_weights"),
        ("detector.tick = 0 ns", "detector.tick"),
        ("just words", "line 1"),
    ])
    def test_parse_errors(self, text, name):
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert err.value.field == name

    def test_round_trip(self):
        cfg = ExperimentConfig(detuning=37.5, n_trials=123, rabi_frequency=1e6,
                               triplet_weights=(0.1, 0.7, 0.2), rng_seed=2**63 + 5,
                               detector=DetectorModel(dark_rate=17.0))
        assert parse_config(format_config(cfg)) == cfg
        assert parse_config(format_config(ExperimentConfig())) == ExperimentConfig()


class TestArms:
    def test_assignment(self):
        cfg = ExperimentConfig(detuning=60)
        f1, f2 = filters_for_arm(cfg, "resonant-1")
        assert f1.center_offset == 0.0
        assert_allclose(f2.center_offset, 2 * cfg.delta_hz)
        g1, g2 = filters_for_arm(cfg, "resonant-2")
        assert (g1, g2) == (f2, f1)
        assert filters_for_arm(cfg, "none") == (None, None)
        with pytest.raises(ValueError):
            filters_for_arm(cfg, "both")

    @settings(max_examples=30)
    @given(st.floats(1, 200))
    def test_alpha_symmetric_for_both_filters(self, mult):
        cfg = ExperimentConfig(detuning=mult)
        f1, f2 = filters_for_arm(cfg, "resonant-1")
        pump = cfg.delta_hz
        assert_allclose(f1.transmission(pump), f2.transmission(pump), rtol=1e-9)
