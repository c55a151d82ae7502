"""Samplers for the six toy 2D distributions, plus splitting, noise
augmentation and CSV persistence."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ParseError, UsageError


class DatasetId(str, Enum):
    EIGHT_GAUSSIANS = "eight_gaussians"
    CHECKERBOARD = "checkerboard"
    TWO_SPIRALS = "two_spirals"
    ABS = "abs"
    SINEWAVED_CUBE = "sinewaved_cube"
    FOUR_CIRCLES = "four_circles"


@dataclass
class Batch2D:
    """A batch of 2D points.

    ``labels`` holds the generating mode of each point where the sampler has
    one (mixture component, board cell, spiral arm, ring). They are only used
    for diagnostics and never fed to training.
    """

    points: np.ndarray
    name: str = ""
    seed: int | None = None
    labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(self.points)):
            raise UsageError("Batch2D points must be finite")

    def __len__(self) -> int:
        return self.points.shape[0]


EIGHT_GAUSSIAN_RADIUS = 2.0
EIGHT_GAUSSIAN_STD = 0.1
SPIRAL_NOISE = 0.02
ABS_NOISE = 0.05
SINE_BAND = 0.4
CIRCLE_RADIUS = 0.75
CIRCLE_OFFSET = 1.5
CIRCLE_NOISE = 0.05
DEFAULT_AUG_SIGMA = 0.05

EIGHT_GAUSSIAN_CENTERS = EIGHT_GAUSSIAN_RADIUS * np.array(
    [[math.cos(k * math.pi / 4), math.sin(k * math.pi / 4)] for k in range(8)]
)
FOUR_CIRCLE_CENTERS = CIRCLE_OFFSET * np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float)
# lower-left corners of the 8 occupied unit cells in [-2, 2]^2
CHECKERBOARD_CELLS = np.array(
    [[i - 2, j - 2] for i in range(4) for j in range(4) if (i + j) % 2 == 0], dtype=float
)


def _eight_gaussians(n, rng):
    labels = rng.integers(0, 8, size=n)
    pts = EIGHT_GAUSSIAN_CENTERS[labels] + EIGHT_GAUSSIAN_STD * rng.standard_normal((n, 2))
    return pts, labels


def _checkerboard(n, rng):
    labels = rng.integers(0, len(CHECKERBOARD_CELLS), size=n)
    pts = CHECKERBOARD_CELLS[labels] + rng.uniform(0.0, 1.0, size=(n, 2))
    return pts, labels


def _two_spirals(n, rng):
    t = rng.uniform(0.0, 1.0, size=n)
    arm = rng.integers(0, 2, size=n)
    r = 2.0 * t
    theta = 3.0 * math.pi * t
    sign = np.where(arm == 0, 1.0, -1.0)
    pts = np.stack([sign * r * np.cos(theta), sign * r * np.sin(theta)], axis=1)
    pts += SPIRAL_NOISE * rng.standard_normal((n, 2))
    return pts, arm


def _abs(n, rng):
    x1 = rng.uniform(-2.0, 2.0, size=n)
    x2 = np.abs(x1) + ABS_NOISE * rng.standard_normal(n)
    return np.stack([x1, x2], axis=1), (x1 >= 0).astype(int)


def _sinewaved_cube(n, rng):
    x1 = rng.uniform(-2.0, 2.0, size=n)
    x2 = np.sin(2.0 * x1) + rng.uniform(-SINE_BAND, SINE_BAND, size=n)
    return np.stack([x1, x2], axis=1), np.zeros(n, dtype=int)


def _four_circles(n, rng):
    labels = rng.integers(0, 4, size=n)
    angle = rng.uniform(0.0, 2.0 * math.pi, size=n)
    radius = CIRCLE_RADIUS + CIRCLE_NOISE * rng.standard_normal(n)
    ring = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    return FOUR_CIRCLE_CENTERS[labels] + ring, labels


_SAMPLERS = {
    DatasetId.EIGHT_GAUSSIANS: _eight_gaussians,
    DatasetId.CHECKERBOARD: _checkerboard,
    DatasetId.TWO_SPIRALS: _two_spirals,
    DatasetId.ABS: _abs,
    DatasetId.SINEWAVED_CUBE: _sinewaved_cube,
    DatasetId.FOUR_CIRCLES: _four_circles,
}


def sample_dataset(dataset: DatasetId | str, n: int, seed: int) -> Batch2D:
    """Draw ``n`` i.i.d. points from a named toy distribution."""
    dataset = DatasetId(dataset)
    if n < 0:
        raise UsageError(f"sample count must be >= 0, got {n}")
    rng = np.random.default_rng(seed)
    pts, labels = _SAMPLERS[dataset](n, rng)
    return Batch2D(pts, dataset.value, seed, np.asarray(labels))


def split(batch: Batch2D, train_fraction: float, seed: int) -> tuple[Batch2D, Batch2D]:
    """Shuffle and partition into ``ceil(f*n)`` train and the rest test."""
    if not 0.0 < train_fraction <= 1.0:
        raise UsageError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    n = len(batch)
    if n == 0:
        raise UsageError("cannot split an empty batch")
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.ceil(train_fraction * n)

    def take(idx):
        labels = None if batch.labels is None else batch.labels[idx]
        return Batch2D(batch.points[idx], batch.name, batch.seed, labels)

    return take(order[:n_train]), take(order[n_train:])


def augment(batch: Batch2D, sigma: float, seed: int | np.random.Generator) -> Batch2D:
    """Add independent N(0, sigma^2 I) noise to every point."""
    if sigma < 0:
        raise UsageError(f"sigma must be >= 0, got {sigma}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noisy = batch.points + sigma * rng.standard_normal(batch.points.shape)
    return Batch2D(noisy, batch.name, batch.seed, batch.labels)


def save_batch(batch: Batch2D | np.ndarray, path: str | Path) -> None:
    pts = batch.points if isinstance(batch, Batch2D) else np.asarray(batch).reshape(-1, 2)
    lines = ["x1,x2"] + [f"{a:.17g},{b:.17g}" for a, b in pts]
    Path(path).write_text("\n".join(lines) + "\n")


def load_batch(path: str | Path) -> Batch2D:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "x1,x2":
        raise ParseError(f"{path}:1: expected header 'x1,x2'")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 columns, got {len(fields)}")
        try:
            rows.append((float(fields[0]), float(fields[1])))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return Batch2D(np.array(rows, dtype=np.float64).reshape(-1, 2), Path(path).stem)
