# %% [markdown]
# Per-cluster adversarial autoencoders and the four ways to sample latents.

# %%
import numpy as np

from scgan.latent import (
    LatentSamplingMode,
    LatentSources,
    MapperConfig,
    aggregate_posterior_stats,
    discriminator_accuracy,
    kmeans,
    reconstruction_mse,
    sample_latent,
    train_ensemble,
)

# %%
# stand-in latents: three separated blobs with different shapes
rng = np.random.default_rng(0)
z = np.concatenate([
    rng.normal((-3, 0), (0.5, 0.2), (600, 2)),
    rng.normal((3, 0), 0.3, (400, 2)),
    rng.normal((0, 3), (0.2, 0.6), (300, 2)),
])
# Lloyd only finds a local optimum (seed 0 merges two blobs); keep the best of a few
clusters = min((kmeans(z, 3, seed=s) for s in range(4)), key=lambda c: c.inertia)
clusters.member_counts, clusters.inertia_history[:3]

# %%
ens = train_ensemble(z, clusters, MapperConfig(), seed=1)

# %%
# aggregate posterior of each mapper should look like N(0, I)
for k, t in enumerate(ens.mappers):
    member = z[clusters.assignments == k]
    mean, std = aggregate_posterior_stats(t, member)
    acc = discriminator_accuracy(t, member, np.random.default_rng(k))
    print(k, mean.round(3), std.round(3), "recon", round(reconstruction_mse(t, member), 4), "disc acc", round(acc, 3))

# %%
src = LatentSources(z, clusters, ens)
for mode in LatentSamplingMode:
    s = sample_latent(mode, 5000, src, 2)
    print(f"{mode.value:22s} mean={s.mean(0).round(2)} std={s.std(0).round(2)}")
