"""Standalone SVG scatter plots on a fixed square viewport."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .datasets import Batch2D
from .errors import UsageError

SIZE = 400
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def to_pixels(points: np.ndarray, extent: float = 4.0) -> np.ndarray:
    """Map ``[-extent, extent]^2`` onto the viewport; y grows upwards."""
    px = (points[:, 0] + extent) / (2 * extent) * SIZE
    py = (extent - points[:, 1]) / (2 * extent) * SIZE
    return np.stack([px, py], axis=1)


def scatter_svg(
    points: Batch2D | np.ndarray,
    classes: np.ndarray | None = None,
    title: str = "",
    extent: float = 4.0,
    radius: float = 1.2,
) -> str:
    pts = points.points if isinstance(points, Batch2D) else np.asarray(points, dtype=np.float64)
    pts = pts.reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise UsageError("cannot plot non-finite points")
    if classes is not None and len(classes) != len(pts):
        raise UsageError("classes must align with points")
    styles = "".join(
        f".c{i}{{fill:{c};}}" for i, c in enumerate(PALETTE)
    )
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
        f'viewBox="0 0 {SIZE} {SIZE}">',
        f"<style>circle{{fill:#333;fill-opacity:0.6;}}{styles}</style>",
        f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white" stroke="#ccc"/>',
    ]
    if title:
        out.append(f'<title>{title}</title>')
    for i, (x, y) in enumerate(to_pixels(pts, extent)):
        cls = f' class="c{int(classes[i]) % len(PALETTE)}"' if classes is not None and classes[i] >= 0 else ""
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius}"{cls}/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_scatter(
    points: Batch2D | np.ndarray,
    path: str | Path,
    classes: np.ndarray | None = None,
    title: str = "",
    extent: float = 4.0,
) -> Path:
    path = Path(path)
    svg = scatter_svg(points, classes, title, extent)
    try:
        path.write_text(svg)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def latent_projection(latents: np.ndarray):
    """Projection onto the top two principal axes of ``latents``.

    Returns a function applied to any batch of the same width; 2D latents
    pass through unchanged so their plots stay in native coordinates.
    """
    z = np.asarray(latents, dtype=np.float64)
    if z.shape[1] <= 2:
        return lambda q: np.asarray(q, dtype=np.float64)
    center = z.mean(axis=0)
    _, _, vt = np.linalg.svd(z - center, full_matrices=False)
    axes = vt[:2]
    # fix the sign so repeated runs draw the same picture
    axes = axes * np.sign(axes[np.arange(2), np.abs(axes).argmax(axis=1)])[:, None]
    return lambda q: (np.asarray(q, dtype=np.float64) - center) @ axes.T


def latent_extent(latents: np.ndarray) -> float:
    """Smallest integer extent >= 4 that contains every latent."""
    if len(latents) == 0:
        return 4.0
    return float(max(4.0, np.ceil(np.abs(latents).max())))
