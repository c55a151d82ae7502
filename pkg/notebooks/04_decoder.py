# %% [markdown]
# The noise-injected decoder: contract checks, then a short joint training run.

# %%
import numpy as np

from scgan import nncore
from scgan.datasets import sample_dataset
from scgan.decoder import (
    DecoderTrainConfig,
    NoiseBundle,
    decode,
    generate,
    make_decoder,
    reconstruct_eval,
    train_decoder,
)
from scgan.encoder import ContrastiveConfig, embed, make_encoder, train_encoder
from scgan.latent import LatentSources, MapperConfig, kmeans, train_ensemble
from scgan.metrics import energy_distance

# %%
# zero noise turns the decoder into its plain MLP
dec = make_decoder(np.random.default_rng(0))
eps = np.random.default_rng(1).normal(size=(5, 4))
zero = NoiseBundle.zeros(dec.depth, dec.noise_dim)
np.max(np.abs(decode(dec, eps, zero) - nncore.predict(dec.spec, dec.params, eps)))

# %%
# per-sample noise gives different outputs for the same latent
decode(dec, np.repeat(eps[:1], 3, 0), np.random.default_rng(2))

# %%
data = sample_dataset("eight_gaussians", 4096, 0)
test = sample_dataset("eight_gaussians", 2048, 1)
enc, _ = train_encoder(data, ContrastiveConfig(iterations=600), make_encoder(np.random.default_rng(0)), 1)
z = embed(enc, data)
clusters = kmeans(z, 8, seed=0)
ens = train_ensemble(z, clusters, MapperConfig(), 2)
src = LatentSources(z, clusters, ens)

# %%
for mode in ("single_gaussian", "mapping_network"):
    res = train_decoder(enc, src, data, DecoderTrainConfig(mode=mode, iterations=800), 3, train_latents=z)
    gen = generate(res.decoder, mode, 2000, src, 4)
    print(mode, "recon", round(reconstruct_eval(res.decoder, enc, test), 4),
          "energy", round(energy_distance(gen, test.points[:2000]), 4))
