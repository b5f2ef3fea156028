# %% [markdown]
# # Nonclassical correlations and time ordering
#
# The Cauchy-Schwarz ratio compares cross- and auto-correlations; classical
# fields keep it at or below one. Filtering away the Rayleigh background
# raises it, and the filter assignment decides which delay sign carries it.

# %%
from sfwm.analysis import run_pipeline, time_ordering_check
from sfwm.model import desk_config

cfg = desk_config(n_trials=1500)
for arm in ("none", "resonant-1", "resonant-2"):
    _, res = run_pipeline(cfg, arm)
    print(f"{arm:11s} Rbar_max = {res.rbar_max:5.2f} +- {res.rbar_max_sigma:4.2f} "
          f"at {res.rbar_max_delay * res.tick * 1e9:+5.1f} ns, "
          f"violated: {res.violated}, ordering: {time_ordering_check(res)}")

# %% [markdown]
# Without pairs the ratio stays classical.

# %%
_, res = run_pipeline(desk_config(n_trials=300, pair_rate=0.0), "none")
print(f"pair_rate 0: Rbar_max = {res.rbar_max:.2f} +- {res.rbar_max_sigma:.2f}")
