# %% [markdown]
# Reconstruction error, energy distance and the report grid.

# %%
import numpy as np

from scgan.metrics import ModeRow, build_report, energy_distance, mse, summary_table

# %%
a = np.random.default_rng(0).normal(size=(100, 2))
mse(a, a + [0.1, 0.0])  # 0.01

# %%
energy_distance([[0, 0]], [[3, 4]])  # 2*5 = 10

# %%
# energy distance shrinks as two samples approach one distribution
rng = np.random.default_rng(1)
ref = rng.normal(size=(1000, 2))
[round(energy_distance(rng.normal(size=(1000, 2)) + [s, 0], ref), 4) for s in (2.0, 1.0, 0.5, 0.0)]

# %%
rows = {
    "single_gaussian": ModeRow(0.09, 0.10, 14.0),
    "mapping_network": ModeRow(0.007, 0.010, 13.0),
    "real_data_latents": ModeRow(0.007, 0.009, 12.0),
}
rep = build_report("eight_gaussians", rows, "demo")
print(rep.to_csv())
print(summary_table([rep]))
rep.flags
