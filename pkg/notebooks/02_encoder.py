# %% [markdown]
# Contrastive encoder on eight_gaussians, then a look at the latent space.

# %%
import math

import numpy as np
from pathlib import Path

from scgan.datasets import sample_dataset
from scgan.encoder import ContrastiveConfig, embed, make_encoder, nt_xent_loss, train_encoder
from scgan.latent import kmeans
from scgan.plotting import latent_extent, latent_projection, plot_scatter

out = Path("notebook_out")
out.mkdir(exist_ok=True)

# %%
# sanity values of the loss: identical rows give ln(2N - 1)
nt_xent_loss(np.ones((8, 2)), 0.5).value, math.log(7)

# %%
data = sample_dataset("eight_gaussians", 4096, 0)
enc = make_encoder(np.random.default_rng(0))
enc, hist = train_encoder(data, ContrastiveConfig(iterations=600), enc, seed=1)
hist[0], hist[-1]

# %%
z = embed(enc, data)
z.shape

# %%
# clusters in latent space line up with the eight modes
m = kmeans(z, 8, seed=0)
purity = sum(np.bincount(data.labels[m.assignments == k]).max() for k in range(8)) / len(data)
purity

# %%
view = latent_projection(z)
zz = view(z)
plot_scatter(zz[:2000], out / "latents.svg", m.assignments[:2000], "latents", latent_extent(zz))
