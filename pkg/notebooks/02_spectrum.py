# %% [markdown]
# # Spectrum from intensity correlations
#
# For chaotic light the Siegert relation gives ``|g1|`` from the measured
# auto-correlation. Its Fourier transform is a beat-note spectrum: the
# Rayleigh line sits at zero and the sidebands show up at the detuning.

# %%
from sfwm.analysis import siegert_invert, spectrum_fft
from sfwm.correlator import g2_matrix
from sfwm.emission import simulate_run
from sfwm.model import desk_config

cfg = desk_config(detuning=50.0, n_trials=2000)
curves = g2_matrix(simulate_run(cfg))
auto = curves["1b1a"]
# uncorrelated pair photons dilute the bunching below 2
print(f"g2(0) = {auto.values[auto.zero_bin]:.2f}")

# %%
g1 = siegert_invert(auto)
spec = spectrum_fft(g1, pad=4)
f, m = spec.peak_near(cfg.delta_hz)
print(f"resolution {spec.resolution / 1e6:.1f} MHz")
print(f"sideband at {f / 1e6:.0f} MHz (detuning {cfg.delta_hz / 1e6:.0f} MHz), "
      f"relative height {m:.3g}")
