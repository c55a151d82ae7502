import math

import numpy as np
import pytest
from scipy.integrate import quad

from scgan.datasets import (
    Batch2D,
    DatasetId,
    augment,
    load_batch,
    sample_dataset,
    save_batch,
    split,
)
from scgan.errors import ParseError, UsageError

ALL = list(DatasetId)


def _checkerboard_moments():
    cells = [(i - 2, j - 2) for i in range(4) for j in range(4) if (i + j) % 2 == 0]
    c = np.array(cells, dtype=float) + 0.5
    second = c.T @ c / len(c) + np.eye(2) / 12.0
    return c.mean(0), second


def _spiral_moments():
    ex = lambda f: quad(f, 0, 1, limit=200)[0]
    xx = ex(lambda t: 4 * t * t * math.cos(3 * math.pi * t) ** 2) + 0.02**2
    yy = ex(lambda t: 4 * t * t * math.sin(3 * math.pi * t) ** 2) + 0.02**2
    xy = ex(lambda t: 4 * t * t * math.cos(3 * math.pi * t) * math.sin(3 * math.pi * t))
    return np.zeros(2), np.array([[xx, xy], [xy, yy]])


def _sine_moments():
    ex = lambda f: quad(f, -2, 2, limit=200)[0] / 4
    m2 = ex(lambda x: math.sin(2 * x))
    xx = 4.0 / 3.0
    yy = ex(lambda x: math.sin(2 * x) ** 2) + 0.8**2 / 12
    xy = ex(lambda x: x * math.sin(2 * x))
    return np.array([0.0, m2]), np.array([[xx, xy], [xy, yy]])


# first moment, raw second-moment matrix E[x x^T]
ORACLE_MOMENTS = {
    DatasetId.EIGHT_GAUSSIANS: (np.zeros(2), np.eye(2) * (4 * 0.5 + 0.01)),
    DatasetId.CHECKERBOARD: _checkerboard_moments(),
    DatasetId.TWO_SPIRALS: _spiral_moments(),
    DatasetId.ABS: (np.array([0.0, 1.0]), np.array([[4 / 3, 0.0], [0.0, 4 / 3 + 0.05**2]])),
    DatasetId.SINEWAVED_CUBE: _sine_moments(),
    DatasetId.FOUR_CIRCLES: (
        np.zeros(2),
        np.eye(2) * (1.5**2 + (0.75**2 + 0.05**2) / 2),
    ),
}


@pytest.mark.parametrize("ds", ALL)
def test_empty(ds):
    b = sample_dataset(ds, 0, 3)
    assert len(b) == 0 and b.points.shape == (0, 2)


@pytest.mark.parametrize("ds", ALL)
def test_seed_determinism(ds):
    a, b = sample_dataset(ds, 500, 11), sample_dataset(ds, 500, 11)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, sample_dataset(ds, 500, 12).points)


@pytest.mark.parametrize("ds", ALL)
def test_bounding_box_and_finite(ds):
    pts = sample_dataset(ds, 20000, 0).points
    assert np.all(np.isfinite(pts))
    assert np.all(np.abs(pts) <= 4.0)


@pytest.mark.parametrize("ds", ALL)
def test_moments_match_oracle(ds):
    n = 100_000
    pts = sample_dataset(ds, n, 2024).points
    mean, second = ORACLE_MOMENTS[ds]
    se_mean = pts.std(0) / math.sqrt(n)
    assert np.all(np.abs(pts.mean(0) - mean) <= 3 * se_mean + 1e-12)
    for i in range(2):
        for j in range(2):
            prod = pts[:, i] * pts[:, j]
            assert abs(prod.mean() - second[i, j]) <= 3 * prod.std() / math.sqrt(n)


def test_eight_gaussians_membership():
    pts = sample_dataset(DatasetId.EIGHT_GAUSSIANS, 10000, 5).points
    angles = np.arange(8) * math.pi / 4
    centers = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    nearest = np.min(np.linalg.norm(pts[:, None, :] - centers[None], axis=2), axis=1)
    # |N(0, 0.1^2 I)| in 2D exceeds 0.4 with probability exp(-8) per point
    assert np.all(nearest < 4 * 0.1 * 1.5)
    assert np.mean(nearest < 0.4) > 0.999


def test_checkerboard_parity():
    pts = sample_dataset(DatasetId.CHECKERBOARD, 10000, 5).points
    cells = np.floor(pts + 2.0).astype(int)
    assert np.all((cells >= 0) & (cells <= 3))
    assert np.all((cells[:, 0] + cells[:, 1]) % 2 == 0)


def test_labels_retained_for_diagnostics():
    b = sample_dataset(DatasetId.EIGHT_GAUSSIANS, 100, 0)
    assert b.labels.shape == (100,) and set(b.labels) <= set(range(8))


class TestSplit:
    def test_full_fraction(self):
        b = sample_dataset("abs", 10, 0)
        tr, te = split(b, 1.0, 0)
        assert len(tr) == 10 and len(te) == 0

    def test_partition(self):
        b = sample_dataset("abs", 10, 0)
        tr, te = split(b, 0.8, 1)
        assert (len(tr), len(te)) == (8, 2)
        joined = np.concatenate([tr.points, te.points])
        assert sorted(map(tuple, joined)) == sorted(map(tuple, b.points))

    def test_ceil_sizes(self):
        tr, te = split(sample_dataset("abs", 7, 0), 0.5, 0)
        assert (len(tr), len(te)) == (4, 3)

    def test_deterministic(self):
        b = sample_dataset("two_spirals", 50, 0)
        a1, _ = split(b, 0.6, 9)
        a2, _ = split(b, 0.6, 9)
        assert np.array_equal(a1.points, a2.points)

    @pytest.mark.parametrize("f", [0.0, -0.1, 1.01])
    def test_bad_fraction(self, f):
        with pytest.raises(UsageError):
            split(sample_dataset("abs", 5, 0), f, 0)

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            split(sample_dataset("abs", 0, 0), 0.5, 0)


class TestAugment:
    def test_zero_sigma(self):
        b = sample_dataset("checkerboard", 100, 0)
        assert np.array_equal(augment(b, 0.0, 1).points, b.points)

    def test_noise_moments(self):
        n, sigma = 100_000, 0.05
        b = Batch2D(np.zeros((n, 2)))
        delta = augment(b, sigma, 3).points - b.points
        assert np.all(np.abs(delta.mean(0)) < 4 * sigma / math.sqrt(n))
        assert np.all(np.abs(delta.std(0) / sigma - 1) < 0.05)

    def test_negative_sigma(self):
        with pytest.raises(UsageError):
            augment(Batch2D(np.zeros((1, 2))), -1.0, 0)


class TestCsv:
    def test_empty_round_trip(self, tmp_path):
        save_batch(Batch2D(np.zeros((0, 2))), tmp_path / "e.csv")
        assert len(load_batch(tmp_path / "e.csv")) == 0

    def test_round_trip(self, tmp_path):
        b = sample_dataset("four_circles", 200, 0)
        save_batch(b, tmp_path / "b.csv")
        assert np.array_equal(load_batch(tmp_path / "b.csv").points, b.points)

    def test_hand_written(self, tmp_path):
        (tmp_path / "h.csv").write_text("x1,x2\n1,2\n-0.5,3e-3\n0.25,-7\n")
        np.testing.assert_array_equal(
            load_batch(tmp_path / "h.csv").points, [[1, 2], [-0.5, 0.003], [0.25, -7]]
        )

    def test_bad_row_reports_line(self, tmp_path):
        (tmp_path / "bad.csv").write_text("x1,x2\n1,2\n1,2,3\n")
        with pytest.raises(ParseError, match=":3:"):
            load_batch(tmp_path / "bad.csv")

    def test_header_format(self, tmp_path):
        save_batch(Batch2D([[0.1, 1 / 3]]), tmp_path / "f.csv")
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0] == "x1,x2"
        assert lines[1] == "0.10000000000000001,0.33333333333333331"
