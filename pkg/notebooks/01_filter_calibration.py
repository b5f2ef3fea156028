# %% [markdown]
# # Filter calibration
#
# A Fabry-Perot etalon tuned to one sideband leaks a fraction of the Rayleigh
# light sitting at the pump. The leak, normalised to the peak transmission, is
# the figure of merit ``alpha``.

# %%
import numpy as np

from sfwm.model import RB87_GAMMA, FabryPerotFilter, filter_alpha

fp = FabryPerotFilter()
print(f"FSR {fp.fsr / 1e9:.0f} GHz, finesse {fp.finesse:g}, FWHM {fp.fwhm / 1e6:.0f} MHz")

# %% [markdown]
# Leak versus detuning in units of the natural linewidth.

# %%
for mult in (10, 20, 30, 40, 50, 60, 80, 100):
    print(f"Delta = {mult:4d} Gamma   alpha = {filter_alpha(fp, mult * RB87_GAMMA):.3f}")

# %% [markdown]
# A higher finesse narrows the line and suppresses the leak further.

# %%
for finesse in (10, 33, 100):
    f = FabryPerotFilter(finesse=finesse)
    print(f"finesse {finesse:3d}: alpha(60 Gamma) = {filter_alpha(f, 60 * RB87_GAMMA):.3f}")

# %%
nu = np.linspace(-1e9, 1e9, 9)
print(np.round(fp.transmission(nu), 4))
