"""Reconstruction error, energy distance, and the per-dataset report grid."""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .datasets import Batch2D
from .errors import UsageError
from .latent import LatentSamplingMode

MODES = tuple(LatentSamplingMode)
REPORT_HEADER = ("dataset", "mode", "recon_mse", "energy_distance", "runtime_s")


def _pts(a) -> np.ndarray:
    return a.points if isinstance(a, Batch2D) else np.asarray(a, dtype=np.float64)


def mse(a: Batch2D | np.ndarray, b: Batch2D | np.ndarray) -> float:
    """Mean over rows of the squared Euclidean distance."""
    a, b = _pts(a), _pts(b)
    if a.shape != b.shape:
        raise UsageError(f"mse needs equal-length batches, got {a.shape} and {b.shape}")
    if len(a) == 0:
        raise UsageError("mse of empty batches is undefined")
    diff = a - b
    return float(np.mean(np.sum(diff * diff, axis=1)))


def _within_mean(x: np.ndarray) -> float:
    n = len(x)
    if n < 2:
        return 0.0
    return float(cdist(x, x).sum() / (n * (n - 1)))


def energy_distance(x: Batch2D | np.ndarray, y: Batch2D | np.ndarray) -> float:
    """Squared energy distance ``2E|X-Y| - E|X-X'| - E|Y-Y'|``.

    Within-sample terms are U-statistics (diagonal excluded); the result is
    clamped at zero.
    """
    x, y = _pts(x), _pts(y)
    if len(x) == 0 or len(y) == 0:
        raise UsageError("energy_distance needs non-empty samples")
    between = float(cdist(x, y).mean())
    return max(0.0, 2.0 * between - _within_mean(x) - _within_mean(y))


@dataclass
class ModeRow:
    recon_mse: float
    energy_distance: float
    runtime_s: float


@dataclass
class MetricReport:
    dataset: str
    rows: dict[LatentSamplingMode, ModeRow]
    fingerprint: str = ""
    flags: dict[str, bool] = field(default_factory=dict)

    def missing(self) -> list[LatentSamplingMode]:
        return [m for m in MODES if m not in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for mode in MODES:
            row = self.rows.get(mode)
            if row is None:
                w.writerow([self.dataset, mode.value, "absent", "absent", "absent"])
            else:
                w.writerow([self.dataset, mode.value, f"{row.recon_mse:.17g}",
                            f"{row.energy_distance:.17g}", f"{row.runtime_s:.3f}"])
        return buf.getvalue()


def ordering_flags(rows: dict[LatentSamplingMode, ModeRow]) -> dict[str, bool]:
    """Qualitative orderings of the reconstruction column."""
    flags: dict[str, bool] = {}
    sg = rows.get(LatentSamplingMode.SINGLE_GAUSSIAN)
    if sg is not None:
        others = [r.recon_mse for m, r in rows.items() if m is not LatentSamplingMode.SINGLE_GAUSSIAN]
        flags["single_gaussian worst recon"] = bool(others) and sg.recon_mse > max(others)
    mn = rows.get(LatentSamplingMode.MAPPING_NETWORK)
    if sg is not None and mn is not None:
        flags["single_gaussian >= 5x mapping_network recon"] = sg.recon_mse >= 5 * mn.recon_mse
        flags["mapping_network better generation than single_gaussian"] = (
            mn.energy_distance < sg.energy_distance
        )
    rd = rows.get(LatentSamplingMode.REAL_DATA_LATENTS)
    if rd is not None and mn is not None:
        flags["real_data recon <= 1.5x mapping_network"] = rd.recon_mse <= 1.5 * mn.recon_mse
    return flags


def build_report(
    dataset: str,
    rows: dict[LatentSamplingMode | str, ModeRow],
    fingerprint: str = "",
) -> MetricReport:
    """Assemble one dataset's row of the comparison grid.

    Missing modes are kept as explicit absent markers in the CSV.
    """
    rows = {LatentSamplingMode(m): r for m, r in rows.items()}
    for mode, r in rows.items():
        vals = (r.recon_mse, r.energy_distance, r.runtime_s)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise UsageError(f"non-finite or negative metric for mode {mode.value}")
    return MetricReport(dataset, rows, fingerprint, ordering_flags(rows))


def summary_table(reports: list[MetricReport]) -> str:
    """Plain-text table: datasets as rows, latent modes as columns (recon MSE)."""
    head = ["dataset"] + [m.value for m in MODES]
    lines = [" | ".join(f"{h:>22}" for h in head)]
    for rep in reports:
        cells = [rep.dataset] + [
            f"{rep.rows[m].recon_mse:.4f}" if m in rep.rows else "absent" for m in MODES
        ]
        lines.append(" | ".join(f"{c:>22}" for c in cells))
    return "\n".join(lines) + "\n"


def fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
