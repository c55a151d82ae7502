import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from scgan.datasets import Batch2D
from scgan.errors import UsageError
from scgan.latent import LatentSamplingMode
from scgan.metrics import ModeRow, build_report, energy_distance, mse, summary_table

# a 0.01 grid keeps squared differences clear of underflow
coords = st.integers(-5000, 5000).map(lambda v: v / 100)
points = arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)), elements=coords)


def energy_reference(x, y):
    """Pairwise loops, U-statistic within-sample means."""
    dist = lambda a, b: float(np.hypot(*(a - b)))
    between = sum(dist(a, b) for a in x for b in y) / (len(x) * len(y))

    def within(s):
        pairs = [dist(s[i], s[j]) for i, j in itertools.permutations(range(len(s)), 2)]
        return sum(pairs) / len(pairs) if pairs else 0.0

    return max(0.0, 2 * between - within(x) - within(y))


def test_mse_cases():
    a = np.random.default_rng(0).normal(size=(5, 2))
    assert mse(a, a) == 0
    assert mse(Batch2D(a), Batch2D(a + [0.1, 0])) == pytest.approx(0.01, abs=1e-12)
    b = np.random.default_rng(1).normal(size=(5, 2))
    direct = sum((a[i, 0] - b[i, 0]) ** 2 + (a[i, 1] - b[i, 1]) ** 2 for i in range(5)) / 5
    assert abs(mse(a, b) - direct) < 1e-12


def test_mse_errors():
    with pytest.raises(UsageError):
        mse(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(UsageError):
        mse(np.zeros((0, 2)), np.zeros((0, 2)))


@settings(max_examples=50, deadline=None)
@given(points)
def test_mse_symmetric_nonnegative(a):
    b = a[::-1]
    assert mse(a, b) == mse(b, a) >= 0
    assert (mse(a, b) == 0) == bool(np.all(a == b))


def test_energy_point_masses():
    assert abs(energy_distance([[0.0, 0.0]], [[3.0, 4.0]]) - 10.0) < 1e-12


def test_energy_identical_samples():
    x = np.random.default_rng(2).normal(size=(30, 2))
    assert abs(energy_distance(x, x)) < 1e-12


def test_energy_matches_reference():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(7, 2)), rng.normal(1, 2, size=(9, 2))
    assert energy_distance(x, y) == pytest.approx(energy_reference(x, y), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(points, points, st.floats(-100, 100), st.floats(-100, 100))
def test_energy_properties(x, y, dx, dy):
    d = energy_distance(x, y)
    assert d >= 0
    assert d == pytest.approx(energy_distance(y, x), abs=1e-9)
    shift = np.array([dx, dy])
    assert energy_distance(x + shift, y + shift) == pytest.approx(d, abs=1e-7)


def test_energy_empty_rejected():
    with pytest.raises(UsageError):
        energy_distance(np.zeros((0, 2)), np.zeros((3, 2)))


def _rows(**overrides):
    base = {
        "single_gaussian": ModeRow(0.5, 0.2, 1.0),
        "noisy_cluster_centers": ModeRow(0.05, 0.05, 1.0),
        "mapping_network": ModeRow(0.06, 0.01, 1.0),
        "real_data_latents": ModeRow(0.02, 0.01, 1.0),
    }
    base.update(overrides)
    return {k: v for k, v in base.items() if v is not None}


def test_full_report():
    rep = build_report("eight_gaussians", _rows(), "abc")
    lines = rep.to_csv().splitlines()
    assert lines[0] == "dataset,mode,recon_mse,energy_distance,runtime_s"
    assert len(lines) == 5
    assert rep.missing() == []
    assert rep.flags["single_gaussian worst recon"]
    assert rep.flags["single_gaussian >= 5x mapping_network recon"]
    assert rep.flags["mapping_network better generation than single_gaussian"]


def test_partial_report_marks_absent():
    rep = build_report("abs", _rows(mapping_network=None))
    csv = rep.to_csv()
    assert "abs,mapping_network,absent,absent,absent" in csv
    assert rep.missing() == [LatentSamplingMode.MAPPING_NETWORK]
    assert "absent" in summary_table([rep])


def test_flat_report_leaves_flag_unset():
    flat = {m: ModeRow(0.04, 0.01, 0.0) for m in ("single_gaussian", "mapping_network")}
    assert not build_report("four_circles", flat).flags["single_gaussian worst recon"]


@pytest.mark.parametrize("bad", [np.nan, -1.0, np.inf])
def test_report_rejects_bad_metrics(bad):
    with pytest.raises(UsageError):
        build_report("abs", _rows(single_gaussian=ModeRow(bad, 0.1, 0.0)))
