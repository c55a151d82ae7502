# %% [markdown]
# Toy datasets: sample, split, augment, save.

# %%
import numpy as np
from pathlib import Path

from scgan.datasets import DatasetId, augment, load_batch, sample_dataset, save_batch, split
from scgan.plotting import plot_scatter

out = Path("notebook_out")
out.mkdir(exist_ok=True)

# %%
for ds in DatasetId:
    b = sample_dataset(ds, 2000, seed=0)
    print(f"{ds.value:16s} mean={b.points.mean(0).round(3)} std={b.points.std(0).round(3)}")
    plot_scatter(b, out / f"data_{ds.value}.svg", title=ds.value)

# %%
# labels are kept for tests only; eight_gaussians labels the mode
b = sample_dataset("eight_gaussians", 4000, 1)
np.bincount(b.labels)

# %%
train, test = split(b, 0.75, seed=2)
len(train), len(test)

# %%
# two augmented views of one point differ by ~sigma per coordinate
v1, v2 = augment(train, 0.05, 3), augment(train, 0.05, 4)
np.std(v1.points - v2.points, axis=0)  # about 0.05 * sqrt(2)

# %%
save_batch(test, out / "test.csv")
np.array_equal(load_batch(out / "test.csv").points, test.points)
