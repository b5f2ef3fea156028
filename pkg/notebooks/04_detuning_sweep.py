# %% [markdown]
# # Detuning sweep
#
# Larger detunings move the sidebands further from the Rayleigh line, so the
# filters leak less. Each point is an independent run with its own seed.

# %%
from sfwm.analysis import detuning_sweep
from sfwm.model import desk_config

rows = detuning_sweep(desk_config(n_trials=800), [30, 45, 60], arms=("none", "resonant-1"))
print("Delta/Gamma  arm          alpha  Rbar_max")
for r in rows:
    print(f"{r.delta_over_gamma:10.0f}  {r.arm:11s} {r.alpha:6.3f}  "
          f"{r.rbar_max:5.2f} +- {r.sigma:4.2f}  {r.status}")
