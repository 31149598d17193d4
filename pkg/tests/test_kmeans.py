import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctad.kmeans import CentroidSet, compute_inertia, fit_kmeans, nearest_centroid_distance
from oracles import brute_kmeans_1d_two


def test_two_clusters_match_brute_force():
    x = np.array([[0.0], [1.0], [10.0], [11.0]])
    expect_c, expect_inertia = brute_kmeans_1d_two(x.ravel())
    cs = fit_kmeans(x, 2, seed=0)
    assert sorted(cs.centroids.ravel().tolist()) == pytest.approx(expect_c)
    assert cs.inertia == pytest.approx(expect_inertia)
    assert cs.inertia == pytest.approx(0.25)


def test_single_centroid_is_mean():
    x = np.random.default_rng(3).normal(size=(50, 4))
    cs = fit_kmeans(x, 1, seed=1)
    assert np.allclose(cs.centroids[0], x.mean(axis=0), atol=1e-12)


def test_k_equals_n_gives_zero_inertia():
    x = np.random.default_rng(4).normal(size=(7, 3))
    assert fit_kmeans(x, 7, seed=0).inertia == pytest.approx(0.0, abs=1e-20)


def test_rejects_bad_k():
    x = np.zeros((3, 2))
    with pytest.raises(ValueError):
        fit_kmeans(x, 0)
    with pytest.raises(ValueError):
        fit_kmeans(x, 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_inertia_recomputed_and_monotone(seed, k):
    x = np.random.default_rng(seed).normal(size=(40, 3))
    cs = fit_kmeans(x, k, seed=seed)
    assert cs.inertia == pytest.approx(compute_inertia(x, cs.centroids), abs=1e-9)
    hist = cs.inertia_history
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert np.all(np.isfinite(cs.centroids))


def test_duplicate_heavy_data_keeps_k():
    x = np.vstack([np.zeros((30, 2)), np.ones((2, 2)), [[5.0, 5.0]]])
    cs = fit_kmeans(x, 3, seed=0)
    assert cs.centroids.shape == (3, 2)
    assert len({tuple(c) for c in cs.centroids.tolist()}) == 3


def test_seed_determinism():
    x = np.random.default_rng(9).normal(size=(100, 5))
    a, b = fit_kmeans(x, 5, seed=11), fit_kmeans(x, 5, seed=11)
    assert np.array_equal(a.centroids, b.centroids)


def test_json_roundtrip(tmp_path):
    cs = fit_kmeans(np.random.default_rng(2).normal(size=(20, 2)), 3, seed=5)
    cs.save(tmp_path / "c.json")
    back = CentroidSet.load(tmp_path / "c.json")
    assert np.array_equal(back.centroids, cs.centroids)
    assert back.inertia == cs.inertia and back.k == cs.k and back.seed == cs.seed


@pytest.mark.parametrize(
    "cents, x, expect",
    [
        ([[0, 0], [1, 1], [2, 2]], [2, 2], (2, 0.0)),
        ([[0, 0], [4, 0]], [2, 0], (0, 2.0)),
        ([[0, 0], [3, 4]], [3, 0], (0, 3.0)),
    ],
)
def test_nearest_centroid(cents, x, expect):
    idx, dist = nearest_centroid_distance(np.array(cents, dtype=float), np.array(x, dtype=float))
    assert (idx, dist) == expect
