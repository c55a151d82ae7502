"""Stage 2: K-means over encoder latents, one adversarial autoencoder per
cluster, and the four latent sampling modes used to drive the generator."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import nncore
from .errors import ConfigError, TrainingError, UsageError
from .nncore import AdamState, MlpSpec, ParamStore


class LatentSamplingMode(str, Enum):
    SINGLE_GAUSSIAN = "single_gaussian"
    NOISY_CLUSTER_CENTERS = "noisy_cluster_centers"
    MAPPING_NETWORK = "mapping_network"
    REAL_DATA_LATENTS = "real_data_latents"


# ---------------------------------------------------------------- K-means


@dataclass
class ClusterModel:
    centroids: np.ndarray
    assignments: np.ndarray
    member_counts: np.ndarray
    per_cluster_std: np.ndarray
    inertia: float
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.member_counts / self.member_counts.sum()


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _assign(x: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = _sq_dists(x, c)
    labels = d.argmin(axis=1)
    return labels, d[np.arange(len(x)), labels]


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new center drawn with probability ~ D(x)^2."""
    n = len(x)
    centers = [x[rng.integers(n)]]
    closest = _sq_dists(x, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dists(x, x[idx : idx + 1])[:, 0])
    return np.array(centers, dtype=np.float64)


def kmeans(
    latents: np.ndarray,
    K: int,
    seed: int = 0,
    max_iters: int = 300,
    init: np.ndarray | None = None,
) -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeds (or from ``init``).

    Stops once the assignment is a fixpoint or after ``max_iters`` updates.
    An empty cluster is moved onto the point farthest from its own centroid.
    """
    x = np.asarray(latents, dtype=np.float64)
    n = len(x)
    if K < 1:
        raise UsageError(f"K must be >= 1, got {K}")
    if K > n:
        raise UsageError(f"K={K} exceeds the number of points {n}")
    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(x, K, rng) if init is None else np.array(init, dtype=np.float64)
    if centroids.shape != (K, x.shape[1]):
        raise UsageError(f"init centroids must have shape {(K, x.shape[1])}")

    labels, d = _assign(x, centroids)
    history = [float(d.sum())]
    it = 0
    for it in range(1, max_iters + 1):
        moved = False
        for k in range(K):
            members = labels == k
            if members.any():
                centroids[k] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(d))
                centroids[k] = x[far]
                labels[far] = k
                d[far] = 0.0
                moved = True
        new_labels, d = _assign(x, centroids)
        history.append(float(d.sum()))
        if not moved and np.array_equal(new_labels, labels):
            break
        labels = new_labels
    labels, d = _assign(x, centroids)

    counts = np.bincount(labels, minlength=K)
    std = np.zeros_like(centroids)
    for k in range(K):
        if counts[k] > 1:
            std[k] = x[labels == k].std(axis=0)
    return ClusterModel(centroids, labels, counts, std, float(d.sum()), history, it)


# ---------------------------------------------------------------- mappers


@dataclass(frozen=True)
class MapperConfig:
    omega_dim: int = 2
    hidden: tuple[int, ...] = (32, 32)
    lambda_eps: float = 1.0
    iterations: int = 3000
    batch_size: int = 256
    lr: float = 1e-3
    beta1: float = 0.5

    def __post_init__(self) -> None:
        if self.omega_dim < 1:
            raise ConfigError("mapper.omega_dim must be >= 1")
        if self.lambda_eps < 0:
            raise ConfigError("mapper.lambda_eps must be >= 0")


@dataclass
class MapperTriple:
    """One cluster's AAE.

    Latents are standardized with the cluster's own ``shift``/``scale``
    before the omega-encoder and mapped back after the eps-decoder. When the
    cluster was too small to train, ``fallback`` is set and sampling draws
    from a diagonal Gaussian at the cluster moments instead.
    """

    encoder: MlpSpec
    decoder: MlpSpec
    discriminator: MlpSpec
    ae_params: ParamStore
    disc_params: ParamStore
    shift: np.ndarray
    scale: np.ndarray
    fallback: bool = False
    history: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def omega_dim(self) -> int:
        return self.encoder.out_width

    def encode(self, eps: np.ndarray) -> np.ndarray:
        return nncore.predict(self.encoder, self.ae_params, (eps - self.shift) / self.scale, "enc.")

    def decode(self, omega: np.ndarray) -> np.ndarray:
        return nncore.predict(self.decoder, self.ae_params, omega, "dec.") * self.scale + self.shift

    def generate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.fallback:
            return self.shift + self.scale * rng.standard_normal((n, self.shift.shape[1]))
        return self.decode(rng.standard_normal((n, self.omega_dim)))


def make_mapper(latent_dim: int, cfg: MapperConfig, rng: np.random.Generator) -> MapperTriple:
    enc = MlpSpec((latent_dim, *cfg.hidden, cfg.omega_dim), activation="leaky_relu")
    dec = MlpSpec((cfg.omega_dim, *cfg.hidden, latent_dim), activation="leaky_relu")
    disc = MlpSpec((cfg.omega_dim, *cfg.hidden, 1), activation="leaky_relu")
    ae = nncore.init_mlp(enc, rng, "enc.")
    nncore.init_mlp(dec, rng, "dec.", ae)
    d = nncore.init_mlp(disc, rng, "disc.")
    zero = np.zeros((1, latent_dim))
    return MapperTriple(enc, dec, disc, ae, d, zero, np.ones((1, latent_dim)))


def _standardizer(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    shift = x.mean(axis=0, keepdims=True)
    scale = x.std(axis=0, keepdims=True)
    return shift, np.where(scale > 1e-12, scale, 1.0)


def train_mapper(
    cluster_latents: np.ndarray, cfg: MapperConfig, seed: int
) -> MapperTriple:
    """Fit an AAE mapping N(0, I) onto one cluster of latents.

    Each iteration updates the omega-discriminator on prior samples versus
    encoded latents, then the encoder/decoder pair on
    ``lambda_eps * MSE + non-saturating adversarial loss``.
    """
    x = np.asarray(cluster_latents, dtype=np.float64)
    rng = np.random.default_rng(seed)
    triple = make_mapper(x.shape[1], cfg, rng)
    triple.shift, triple.scale = _standardizer(x)
    if len(x) < max(2 * cfg.omega_dim, 2):
        if len(x) < 2:
            triple.scale = np.zeros_like(triple.scale)
        triple.fallback = True
        return triple

    xs = (x - triple.shift) / triple.scale
    ae_opt = AdamState(triple.ae_params, lr=cfg.lr, beta1=cfg.beta1)
    d_opt = AdamState(triple.disc_params, lr=cfg.lr, beta1=cfg.beta1)
    batch = min(cfg.batch_size, len(xs))
    for it in range(cfg.iterations):
        # linear decay to zero settles the adversarial game at the end
        ae_opt.lr = d_opt.lr = cfg.lr * (1.0 - it / cfg.iterations)
        eps = xs[rng.choice(len(xs), size=batch, replace=False)]
        prior = rng.standard_normal((batch, cfg.omega_dim))

        # discriminator: prior samples are "real", encoded latents "fake"
        omega = nncore.predict(triple.encoder, triple.ae_params, eps, "enc.")
        triple.disc_params.zero_grad()
        real_logit, t_real = nncore.forward_mlp(triple.discriminator, triple.disc_params, prior, "disc.")
        fake_logit, t_fake = nncore.forward_mlp(triple.discriminator, triple.disc_params, omega, "disc.")
        d_real = nncore.bce_with_logits(real_logit, 1.0)
        d_fake = nncore.bce_with_logits(fake_logit, 0.0)
        nncore.backward(t_real, d_real)
        nncore.backward(t_fake, d_fake)
        nncore.adam_step(d_opt, triple.disc_params)

        # encoder/decoder: reconstruction plus fooling the discriminator
        triple.ae_params.zero_grad()
        omega, t_enc = nncore.forward_mlp(triple.encoder, triple.ae_params, eps, "enc.")
        recon, t_dec = nncore.forward_mlp(triple.decoder, triple.ae_params, omega, "dec.")
        rec = nncore.mse_loss(recon, eps)
        g_omega = nncore.backward(t_dec, cfg.lambda_eps * rec.grad)
        logit, t_adv = nncore.forward_mlp(triple.discriminator, triple.disc_params, omega, "disc.")
        adv = nncore.bce_with_logits(logit, 1.0)
        g_omega = g_omega + nncore.backward(t_adv, adv)
        nncore.backward(t_enc, g_omega)
        nncore.adam_step(ae_opt, triple.ae_params)

        if not np.isfinite(rec.value + adv.value + d_real.value + d_fake.value):
            raise TrainingError(f"non-finite mapper loss at iteration {it}")
        triple.history.append((rec.value, adv.value, d_real.value + d_fake.value))
    triple.disc_params.zero_grad()
    triple.ae_params.zero_grad()
    return triple


def aggregate_posterior_stats(
    triple: MapperTriple, cluster_latents: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and std of omega = q(eps) over the cluster."""
    omega = triple.encode(np.asarray(cluster_latents, dtype=np.float64))
    return omega.mean(axis=0), omega.std(axis=0)


def reconstruction_mse(triple: MapperTriple, cluster_latents: np.ndarray) -> float:
    """MSE of the AAE round trip, measured in standardized latent units."""
    x = np.asarray(cluster_latents, dtype=np.float64)
    err = (triple.decode(triple.encode(x)) - x) / triple.scale
    return float(np.mean(np.sum(err * err, axis=1)))


def discriminator_accuracy(
    triple: MapperTriple, cluster_latents: np.ndarray, rng: np.random.Generator
) -> float:
    """Accuracy of the omega-discriminator on prior draws vs encoded latents."""
    omega = triple.encode(np.asarray(cluster_latents, dtype=np.float64))
    prior = rng.standard_normal(omega.shape)
    real = nncore.predict(triple.discriminator, triple.disc_params, prior, "disc.")
    fake = nncore.predict(triple.discriminator, triple.disc_params, omega, "disc.")
    return float((np.sum(real > 0) + np.sum(fake <= 0)) / (2 * len(omega)))


@dataclass
class MapperEnsemble:
    mappers: list[MapperTriple]
    cluster_weights: np.ndarray

    def __post_init__(self) -> None:
        if len(self.mappers) != len(self.cluster_weights):
            raise UsageError("one mapper per cluster weight required")
        if len({m.omega_dim for m in self.mappers}) > 1:
            raise UsageError("all mappers must share omega_dim")

    @property
    def K(self) -> int:
        return len(self.mappers)


def train_ensemble(
    latents: np.ndarray, clusters: ClusterModel, cfg: MapperConfig, seed: int
) -> MapperEnsemble:
    seeds = np.random.SeedSequence(seed).spawn(clusters.K)
    mappers = [
        train_mapper(latents[clusters.assignments == k], cfg, int(s.generate_state(1)[0]))
        for k, s in enumerate(seeds)
    ]
    return MapperEnsemble(mappers, clusters.weights)


# ---------------------------------------------------------------- sampling


@dataclass
class LatentSources:
    """Whatever Stage 1/2 artifacts are available for drawing latents."""

    train_latents: np.ndarray | None = None
    clusters: ClusterModel | None = None
    ensemble: MapperEnsemble | None = None

    def gaussian_fit(self) -> tuple[np.ndarray, np.ndarray]:
        z = self.train_latents
        return z.mean(axis=0), z.std(axis=0)


_REQUIRES = {
    LatentSamplingMode.SINGLE_GAUSSIAN: "train_latents",
    LatentSamplingMode.NOISY_CLUSTER_CENTERS: "clusters",
    LatentSamplingMode.MAPPING_NETWORK: "ensemble",
    LatentSamplingMode.REAL_DATA_LATENTS: "train_latents",
}


def _cluster_counts(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.multinomial(n, weights / weights.sum())


def sample_latent(
    mode: LatentSamplingMode | str,
    n: int,
    sources: LatentSources,
    seed: int | np.random.Generator,
    return_clusters: bool = False,
):
    """Draw ``n`` latents according to one of the four sampling modes.

    With ``return_clusters`` the cluster index of each row is returned too
    (``-1`` for modes that do not pick clusters).
    """
    mode = LatentSamplingMode(mode)
    if getattr(sources, _REQUIRES[mode]) is None:
        raise UsageError(f"mode {mode.value!r} needs {_REQUIRES[mode]}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    which = np.full(n, -1)

    if mode is LatentSamplingMode.SINGLE_GAUSSIAN:
        mu, sd = sources.gaussian_fit()
        out = mu + sd * rng.standard_normal((n, mu.shape[0]))
    elif mode is LatentSamplingMode.REAL_DATA_LATENTS:
        z = sources.train_latents
        out = z[rng.integers(0, len(z), size=n)]
    else:
        if mode is LatentSamplingMode.NOISY_CLUSTER_CENTERS:
            weights = sources.clusters.weights
        else:
            weights = sources.ensemble.cluster_weights
        counts = _cluster_counts(weights, n, rng)
        which = np.repeat(np.arange(len(counts)), counts)
        parts = []
        for k, c in enumerate(counts):
            if mode is LatentSamplingMode.NOISY_CLUSTER_CENTERS:
                cl = sources.clusters
                parts.append(cl.centroids[k] + cl.per_cluster_std[k] * rng.standard_normal((c, cl.centroids.shape[1])))
            else:
                parts.append(sources.ensemble.mappers[k].generate(c, rng))
        out = np.concatenate(parts, axis=0)
        # interleave clusters so any prefix of the batch is a fair mixture
        perm = rng.permutation(n)
        out, which = out[perm], which[perm]
    return (out, which) if return_clusters else out


# ---------------------------------------------------------------- persistence


def mapper_to_store(triple: MapperTriple) -> ParamStore:
    store = ParamStore()
    for name, value in triple.ae_params.items():
        store.add(name, value)
    for name, value in triple.disc_params.items():
        store.add(name, value)
    store.add("shift", triple.shift)
    store.add("scale", triple.scale)
    store.add("fallback", [[1.0 if triple.fallback else 0.0]])
    return store


def mapper_from_store(store: ParamStore, latent_dim: int, cfg: MapperConfig) -> MapperTriple:
    triple = make_mapper(latent_dim, cfg, np.random.default_rng(0))
    for params in (triple.ae_params, triple.disc_params):
        for name in params:
            if name not in store or store[name].shape != params[name].shape:
                raise UsageError(f"mapper checkpoint missing or misshapen entry {name!r}")
            params[name][...] = store[name]
    triple.shift = store["shift"].copy()
    triple.scale = store["scale"].copy()
    triple.fallback = bool(store["fallback"][0, 0])
    return triple


def save_clusters(model: ClusterModel, csv_path, assignments_path) -> None:
    d = model.centroids.shape[1]
    head = ["cluster", "count"] + [f"centroid_{j}" for j in range(d)] + [f"std_{j}" for j in range(d)]
    lines = [",".join(head)]
    for k in range(model.K):
        vals = [str(k), str(int(model.member_counts[k]))]
        vals += [f"{v:.17g}" for v in model.centroids[k]] + [f"{v:.17g}" for v in model.per_cluster_std[k]]
        lines.append(",".join(vals))
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(assignments_path, "w") as fh:
        fh.write("\n".join(str(int(a)) for a in model.assignments) + "\n")


def load_clusters(csv_path, assignments_path, latents: np.ndarray | None = None) -> ClusterModel:
    table = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    d = (table.shape[1] - 2) // 2
    counts = table[:, 1].astype(int)
    centroids = table[:, 2 : 2 + d].copy()
    std = table[:, 2 + d :].copy()
    assignments = np.loadtxt(assignments_path, dtype=int, ndmin=1)
    inertia = 0.0
    if latents is not None:
        diff = latents - centroids[assignments]
        inertia = float(np.sum(diff * diff))
    return ClusterModel(centroids, assignments, counts, std, inertia)
