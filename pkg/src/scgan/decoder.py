"""Stage 3: a noise-injected generator trained jointly for reconstruction
(fixed noise, encoder latents) and generation (sampled latents, fresh noise)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nncore
from .datasets import Batch2D
from .encoder import EncoderModel, embed
from .errors import ConfigError, TrainingError, UsageError
from .latent import LatentSamplingMode, LatentSources, sample_latent
from .nncore import AdamState, MlpSpec, ParamStore

BUNDLE_POLICIES = ("zeros", "frozen_sample")


@dataclass
class NoiseBundle:
    """One noise vector per decoder layer, shared by every sample in a batch."""

    z: list[np.ndarray]

    def __post_init__(self) -> None:
        self.z = [np.asarray(v, dtype=np.float64).reshape(-1) for v in self.z]
        if not all(np.all(np.isfinite(v)) for v in self.z):
            raise UsageError("noise vectors must be finite")

    @classmethod
    def zeros(cls, depth: int, noise_dim: int) -> "NoiseBundle":
        return cls([np.zeros(noise_dim) for _ in range(depth)])

    @classmethod
    def sample(cls, depth: int, noise_dim: int, seed: int) -> "NoiseBundle":
        rng = np.random.default_rng(seed)
        return cls([rng.standard_normal(noise_dim) for _ in range(depth)])

    def __len__(self) -> int:
        return len(self.z)


@dataclass
class StochasticDecoder:
    """Layer ``l`` computes ``act(h @ W_l + b_l + z_l @ A_l)``.

    The weight/bias layout is the same as an :class:`MlpSpec` network with
    the same widths, so with every ``A_l = 0`` (or ``z = 0``) the decoder is
    exactly that plain MLP.
    """

    spec: MlpSpec
    noise_dim: int
    params: ParamStore

    @property
    def depth(self) -> int:
        return self.spec.n_layers

    @property
    def latent_dim(self) -> int:
        return self.spec.in_width


def make_decoder(
    rng: np.random.Generator,
    latent_dim: int = 4,
    widths: tuple[int, ...] = (64, 64, 64, 2),
    noise_dim: int = 4,
    activation: str = "leaky_relu",
) -> StochasticDecoder:
    spec = MlpSpec((latent_dim, *widths), activation=activation, output_activation="linear")
    params = nncore.init_mlp(spec, rng)
    for layer in range(spec.n_layers):
        fan_out = spec.layer_widths[layer + 1]
        limit = np.sqrt(3.0 / noise_dim)
        params.add(f"A{layer}", rng.uniform(-limit, limit, size=(noise_dim, fan_out)) * 0.5)
    return StochasticDecoder(spec, noise_dim, params)


def _noise_per_layer(dec: StochasticDecoder, n: int, noise) -> list[np.ndarray]:
    """Normalize a bundle, per-sample array ``(n, L, d_z)`` or generator to per-layer arrays."""
    if isinstance(noise, np.random.Generator):
        noise = noise.standard_normal((n, dec.depth, dec.noise_dim))
    if isinstance(noise, NoiseBundle):
        if len(noise) != dec.depth:
            raise UsageError(f"bundle depth {len(noise)} != decoder depth {dec.depth}")
        if any(v.shape != (dec.noise_dim,) for v in noise.z):
            raise UsageError(f"bundle vectors must have width {dec.noise_dim}")
        return [np.broadcast_to(v, (n, dec.noise_dim)) for v in noise.z]
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (n, dec.depth, dec.noise_dim):
        raise UsageError(
            f"per-sample noise must have shape {(n, dec.depth, dec.noise_dim)}, got {noise.shape}"
        )
    return [noise[:, layer, :] for layer in range(dec.depth)]


@dataclass
class DecoderTrace:
    inputs: list[np.ndarray] = field(default_factory=list)
    noise: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)


def decode_forward(dec: StochasticDecoder, eps: np.ndarray, noise) -> tuple[np.ndarray, DecoderTrace]:
    eps = np.asarray(eps, dtype=np.float64)
    if eps.ndim != 2 or eps.shape[1] != dec.latent_dim:
        raise UsageError(f"latent width must be {dec.latent_dim}")
    zs = _noise_per_layer(dec, eps.shape[0], noise)
    spec, p = dec.spec, dec.params
    trace = DecoderTrace()
    h = eps
    for layer in range(dec.depth):
        trace.inputs.append(h)
        trace.noise.append(zs[layer])
        a = h @ p[f"W{layer}"] + p[f"b{layer}"] + zs[layer] @ p[f"A{layer}"]
        h = nncore.activate(spec.layer_activation(layer), a, spec.slope)
        trace.pre.append(a)
        trace.post.append(h)
    return h, trace


def decode(dec: StochasticDecoder, eps: np.ndarray, noise) -> np.ndarray:
    """Map latents to points, given a :class:`NoiseBundle` or per-sample noise."""
    return decode_forward(dec, eps, noise)[0]


def decode_backward(dec: StochasticDecoder, trace: DecoderTrace, grad: np.ndarray) -> np.ndarray:
    spec, p = dec.spec, dec.params
    for layer in reversed(range(dec.depth)):
        act = spec.layer_activation(layer)
        delta = grad * nncore.activate_grad(act, trace.pre[layer], trace.post[layer], spec.slope)
        p.grad(f"W{layer}")[...] += trace.inputs[layer].T @ delta
        p.grad(f"b{layer}")[...] += delta.sum(axis=0, keepdims=True)
        p.grad(f"A{layer}")[...] += trace.noise[layer].T @ delta
        grad = delta @ p[f"W{layer}"].T
    return grad


@dataclass
class DiscriminatorPair:
    spec: MlpSpec
    rec: ParamStore
    gen: ParamStore


def make_discriminators(rng: np.random.Generator, hidden: tuple[int, ...] = (64, 64)) -> DiscriminatorPair:
    spec = MlpSpec((2, *hidden, 1), activation="leaky_relu")
    return DiscriminatorPair(spec, nncore.init_mlp(spec, rng), nncore.init_mlp(spec, rng))


@dataclass(frozen=True)
class DecoderTrainConfig:
    mode: LatentSamplingMode = LatentSamplingMode.MAPPING_NETWORK
    lambda_x: float = 10.0
    gamma_rec: float = 0.1
    iterations: int = 2000
    batch_size: int = 256
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    fixed_bundle_policy: str = "zeros"
    bundle_seed: int = 0
    noise_dim: int = 4
    log_every: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", LatentSamplingMode(self.mode))
        if self.lambda_x < 0 or self.gamma_rec < 0:
            raise ConfigError("lambda_x and gamma_rec must be >= 0")
        if self.fixed_bundle_policy not in BUNDLE_POLICIES:
            raise ConfigError(f"fixed_bundle_policy must be one of {BUNDLE_POLICIES}")
        if self.batch_size < 1 or self.iterations < 0:
            raise ConfigError("batch_size must be >= 1 and iterations >= 0")


def fixed_bundle(dec: StochasticDecoder, policy: str = "zeros", seed: int = 0) -> NoiseBundle:
    if policy == "zeros":
        return NoiseBundle.zeros(dec.depth, dec.noise_dim)
    if policy == "frozen_sample":
        return NoiseBundle.sample(dec.depth, dec.noise_dim, seed)
    raise ConfigError(f"unknown fixed_bundle_policy {policy!r}")


def _disc_update(spec: MlpSpec, params: ParamStore, opt: AdamState, real: np.ndarray, fake: np.ndarray) -> float:
    params.zero_grad()
    real_logit, t_real = nncore.forward_mlp(spec, params, real)
    fake_logit, t_fake = nncore.forward_mlp(spec, params, fake)
    l_real = nncore.bce_with_logits(real_logit, 1.0)
    l_fake = nncore.bce_with_logits(fake_logit, 0.0)
    nncore.backward(t_real, l_real)
    nncore.backward(t_fake, l_fake)
    nncore.adam_step(opt, params)
    return l_real.value + l_fake.value


def _generator_adv_grad(spec: MlpSpec, params: ParamStore, fake: np.ndarray) -> tuple[float, np.ndarray]:
    """Non-saturating loss -log D(fake) and its gradient w.r.t. ``fake``.

    Discriminator grads touched by the backward pass are discarded at the
    start of the next discriminator update.
    """
    logit, trace = nncore.forward_mlp(spec, params, fake)
    loss = nncore.bce_with_logits(logit, 1.0)
    return loss.value, nncore.backward(trace, loss)


@dataclass
class StepLosses:
    mse: float
    adv_rec: float
    adv_gen: float
    disc_rec: float
    disc_gen: float


class DecoderTrainer:
    """Holds optimizer state for one decoder and its two discriminators."""

    def __init__(self, dec: StochasticDecoder, discs: DiscriminatorPair, cfg: DecoderTrainConfig):
        self.dec, self.discs, self.cfg = dec, discs, cfg
        kw = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
        self.dec_opt = AdamState(dec.params, **kw)
        self.rec_opt = AdamState(discs.rec, **kw)
        self.gen_opt = AdamState(discs.gen, **kw)
        self.bundle = fixed_bundle(dec, cfg.fixed_bundle_policy, cfg.bundle_seed)

    def reconstruction_step(self, x: np.ndarray, eps: np.ndarray) -> tuple[float, float, float]:
        """Discriminator update on real vs reconstructed, then accumulate the
        decoder gradient of ``MSE + gamma_rec * adversarial``.

        Returns (mse, adversarial loss, discriminator loss). The decoder's
        Adam step is taken by :meth:`step` after the generation term is added.
        """
        cfg, discs = self.cfg, self.discs
        x_hat, trace = decode_forward(self.dec, eps, self.bundle)
        d_loss = _disc_update(discs.spec, discs.rec, self.rec_opt, x, x_hat)
        rec = nncore.mse_loss(x_hat, x)
        grad = rec.grad
        adv = 0.0
        if cfg.gamma_rec > 0:
            adv, g_adv = _generator_adv_grad(discs.spec, discs.rec, x_hat)
            grad = grad + cfg.gamma_rec * g_adv
        decode_backward(self.dec, trace, grad)
        return rec.value, adv, d_loss

    def generation_step(self, x: np.ndarray, sources: LatentSources, rng: np.random.Generator) -> tuple[float, float]:
        cfg, discs = self.cfg, self.discs
        n = x.shape[0]
        eps = sample_latent(cfg.mode, n, sources, rng)
        x_gen, trace = decode_forward(self.dec, eps, rng)
        d_loss = _disc_update(discs.spec, discs.gen, self.gen_opt, x, x_gen)
        if cfg.lambda_x == 0:
            return 0.0, d_loss
        adv, g_adv = _generator_adv_grad(discs.spec, discs.gen, x_gen)
        decode_backward(self.dec, trace, cfg.lambda_x * g_adv)
        return adv, d_loss

    def step(self, x: np.ndarray, eps: np.ndarray, sources: LatentSources, rng: np.random.Generator) -> StepLosses:
        self.dec.params.zero_grad()
        mse, adv_rec, d_rec = self.reconstruction_step(x, eps)
        adv_gen, d_gen = self.generation_step(x, sources, rng)
        nncore.adam_step(self.dec_opt, self.dec.params)
        self.dec.params.zero_grad()
        return StepLosses(mse, adv_rec, adv_gen, d_rec, d_gen)


@dataclass
class DecoderResult:
    decoder: StochasticDecoder
    discriminators: DiscriminatorPair
    history: list[tuple[int, float, float, float]]
    config: DecoderTrainConfig


def train_decoder(
    enc: EncoderModel | None,
    sources: LatentSources,
    data: Batch2D,
    cfg: DecoderTrainConfig,
    seed: int,
    train_latents: np.ndarray | None = None,
) -> DecoderResult:
    """Train a fresh decoder and discriminator pair.

    Reconstruction targets use the frozen encoder's latents for ``data``
    (pass ``train_latents`` to skip recomputing them).
    """
    if train_latents is None:
        if enc is None:
            raise UsageError("train_decoder needs the Stage 1 encoder (run 'encoder' first)")
        train_latents = embed(enc, data)
    if len(train_latents) != len(data):
        raise UsageError("train_latents must align with data")
    rng = np.random.default_rng(seed)
    dec = make_decoder(rng, latent_dim=train_latents.shape[1], noise_dim=cfg.noise_dim)
    discs = make_discriminators(rng)
    trainer = DecoderTrainer(dec, discs, cfg)
    batch = min(cfg.batch_size, len(data))
    history: list[tuple[int, float, float, float]] = []
    for it in range(cfg.iterations):
        trainer.dec_opt.lr = trainer.rec_opt.lr = trainer.gen_opt.lr = cfg.lr * (1.0 - it / cfg.iterations)
        idx = rng.choice(len(data), size=batch, replace=False)
        losses = trainer.step(data.points[idx], train_latents[idx], sources, rng)
        if not np.isfinite(losses.mse + losses.adv_rec + losses.adv_gen):
            raise TrainingError(f"non-finite decoder loss at iteration {it}")
        if it % cfg.log_every == 0 or it == cfg.iterations - 1:
            history.append((it, losses.mse, losses.adv_rec, losses.adv_gen))
    return DecoderResult(dec, discs, history, cfg)


def reconstruct(dec: StochasticDecoder, enc: EncoderModel, points: Batch2D | np.ndarray, bundle: NoiseBundle | None = None) -> np.ndarray:
    bundle = bundle if bundle is not None else fixed_bundle(dec)
    return decode(dec, embed(enc, points), bundle)


def reconstruct_eval(
    dec: StochasticDecoder,
    enc: EncoderModel,
    test: Batch2D,
    bundle: NoiseBundle | None = None,
) -> float:
    """Mean squared Euclidean reconstruction error with a fixed noise bundle."""
    x_hat = reconstruct(dec, enc, test, bundle)
    diff = x_hat - test.points
    return float(np.mean(np.sum(diff * diff, axis=1)))


def generate(
    dec: StochasticDecoder,
    mode: LatentSamplingMode | str,
    n: int,
    sources: LatentSources,
    seed: int,
) -> np.ndarray:
    """Sample latents in ``mode`` and decode them with fresh per-sample noise."""
    rng = np.random.default_rng(seed)
    eps = sample_latent(mode, n, sources, rng)
    return decode(dec, eps, rng)
