"""Stage 1: deterministic contrastive encoder trained with NT-Xent on
noise-augmented views of each point."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nncore
from .datasets import Batch2D, augment
from .errors import ConfigError, NumericError, TrainingError, UsageError
from .nncore import AdamState, Loss, MlpSpec, ParamStore

BACKBONE = "backbone."
HEAD = "head."


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.5
    batch_size: int = 256
    iterations: int = 1500
    sigma_aug: float = 0.05
    lr: float = 1e-3

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.iterations < 0 or self.sigma_aug < 0:
            raise ConfigError("iterations and sigma_aug must be >= 0")


@dataclass
class EncoderModel:
    backbone: MlpSpec
    head: MlpSpec
    params: ParamStore

    @property
    def latent_dim(self) -> int:
        return self.backbone.out_width

    @property
    def proj_dim(self) -> int:
        return self.head.out_width


def make_encoder(
    rng: np.random.Generator,
    latent_dim: int = 4,
    hidden: tuple[int, ...] = (64, 64),
    proj_hidden: int = 32,
    proj_dim: int = 16,
) -> EncoderModel:
    backbone = MlpSpec((2, *hidden, latent_dim), activation="relu")
    head = MlpSpec((latent_dim, proj_hidden, proj_dim), activation="relu")
    params = nncore.init_mlp(backbone, rng, BACKBONE)
    nncore.init_mlp(head, rng, HEAD, params)
    return EncoderModel(backbone, head, params)


def nt_xent_loss(projections: np.ndarray, temperature: float) -> Loss:
    """Normalized-temperature cross entropy over ``2N`` rows.

    Rows ``i`` and ``i + N`` form a positive pair; every other row in the
    batch is a negative. Returns the mean over all ``2N`` anchors together
    with the gradient w.r.t. ``projections``.
    """
    z = np.asarray(projections, dtype=np.float64)
    two_n = z.shape[0]
    if two_n % 2 or two_n < 4:
        raise UsageError(f"need 2N rows with N >= 2, got {two_n}")
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise NumericError("zero-norm projection: cosine similarity undefined")
    n = two_n // 2
    u = z / norms
    sim = (u @ u.T) / temperature
    np.fill_diagonal(sim, -np.inf)
    pos = np.concatenate([np.arange(n, two_n), np.arange(n)])
    rows = np.arange(two_n)
    row_max = sim.max(axis=1, keepdims=True)
    log_norm = row_max[:, 0] + np.log(np.exp(sim - row_max).sum(axis=1))
    value = float(np.mean(log_norm - sim[rows, pos]))

    soft = np.exp(sim - log_norm[:, None])
    soft[rows, pos] -= 1.0
    g_sim = soft / two_n
    g_u = (g_sim + g_sim.T) @ u / temperature
    g_z = (g_u - u * np.sum(u * g_u, axis=1, keepdims=True)) / norms
    return Loss(value, g_z)


def embed(enc: EncoderModel, points: Batch2D | np.ndarray) -> np.ndarray:
    """Latent codes (backbone output; the projection head is not applied)."""
    x = points.points if isinstance(points, Batch2D) else points
    return nncore.predict(enc.backbone, enc.params, x, BACKBONE)


def project(enc: EncoderModel, points: np.ndarray) -> np.ndarray:
    return nncore.predict(enc.head, enc.params, embed(enc, points), HEAD)


def contrastive_step(enc: EncoderModel, views: np.ndarray, temperature: float) -> float:
    """Forward both views, accumulate gradients of the NT-Xent loss."""
    latent, t_backbone = nncore.forward_mlp(enc.backbone, enc.params, views, BACKBONE)
    proj, t_head = nncore.forward_mlp(enc.head, enc.params, latent, HEAD)
    loss = nt_xent_loss(proj, temperature)
    grad_latent = nncore.backward(t_head, loss)
    nncore.backward(t_backbone, grad_latent)
    return loss.value


def train_encoder(
    data: Batch2D,
    cfg: ContrastiveConfig,
    enc: EncoderModel,
    seed: int,
) -> tuple[EncoderModel, list[float]]:
    """Train ``enc`` in place; returns it with the per-iteration loss history."""
    if len(data) == 0:
        raise UsageError("cannot train the encoder on an empty batch")
    rng = np.random.default_rng(seed)
    opt = AdamState(enc.params, lr=cfg.lr)
    batch = min(cfg.batch_size, len(data))
    history: list[float] = []
    for it in range(cfg.iterations):
        idx = rng.choice(len(data), size=batch, replace=False)
        anchors = Batch2D(data.points[idx])
        v1 = augment(anchors, cfg.sigma_aug, rng).points
        v2 = augment(anchors, cfg.sigma_aug, rng).points
        enc.params.zero_grad()
        value = contrastive_step(enc, np.concatenate([v1, v2]), cfg.temperature)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite contrastive loss at iteration {it}")
        nncore.adam_step(opt, enc.params)
        history.append(value)
    enc.params.zero_grad()
    return enc, history
