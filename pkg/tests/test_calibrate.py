import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctad.calibrate import (
    KINDS,
    CalibrationError,
    CalibratorConfig,
    calibrate_scores,
    delta,
    deltas,
    fit_calibrator,
    fit_mahalanobis,
    fuse,
    sample_references,
)
from ctad.detectors import make_detector
from ctad.kmeans import CentroidSet
from ctad.ot import ot_distance, pairwise_distances


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    train = np.vstack([rng.normal(size=(100, 3)), rng.normal(size=(100, 3)) + 6])
    test = np.vstack([rng.normal(size=(30, 3)), rng.normal(size=(10, 3)) * 0.5 + [15, -10, 3]])
    labels = np.r_[np.zeros(30, int), np.ones(10, int)]
    return train, test, labels


@pytest.mark.parametrize(
    "kw",
    [dict(kind="x"), dict(m=-1), dict(k=0), dict(lam=float("nan")), dict(lam=float("inf"))],
)
def test_config_validation(kw):
    with pytest.raises(CalibrationError):
        CalibratorConfig(**kw)


def test_references_are_train_rows():
    train = np.arange(40.0).reshape(20, 2)
    refs = sample_references(train, 7, seed=3)
    assert len(set(refs.index.tolist())) == 7
    assert np.array_equal(refs.points, train[refs.index])
    with pytest.raises(CalibrationError):
        sample_references(train, 21, seed=0)


def test_none_gives_zero_delta(data):
    train, test, _ = data
    state = fit_calibrator(train, CalibratorConfig(kind="none"))
    assert np.all(deltas(state, test) == 0)


def test_fit_deterministic(data):
    train, _, _ = data
    a = fit_calibrator(train, CalibratorConfig(m=20, k=5, seed=4))
    b = fit_calibrator(train, CalibratorConfig(m=20, k=5, seed=4))
    assert np.array_equal(a.centroids.centroids, b.centroids.centroids)
    assert np.array_equal(a.references.index, b.references.index)


def test_centroid_kind_zero_at_centroid(data):
    train, _, _ = data
    state = fit_calibrator(train, CalibratorConfig(kind="centroid", k=4))
    c = state.centroids.centroids
    assert np.allclose(deltas(state, c), 0.0)


def test_ctad_forced_split_example():
    cs = CentroidSet(centroids=np.array([[0.0, 0.0], [2.0, 0.0]]), inertia=0.0, k=2)
    state = fit_calibrator(np.array([[0.0, 0.0], [2.0, 0.0]]), CalibratorConfig(m=0, k=2), centroids=cs)
    assert delta(state, [0.0, 0.0]) == 1.0


def test_ctad_delta_matches_ot_module(data):
    train, test, _ = data
    state = fit_calibrator(train, CalibratorConfig(m=10, k=4, seed=1))
    d = deltas(state, test[:5])
    for i in range(5):
        assert d[i] == ot_distance(state.references.points, test[i], state.centroids)


def test_ctad_delta_above_lower_bound(data):
    train, test, _ = data
    state = fit_calibrator(train, CalibratorConfig(m=20, k=5))
    nearest = pairwise_distances(test, state.centroids.centroids).min(axis=1)
    assert np.all(deltas(state, test) >= nearest / 21 - 1e-9)


def test_cached_centroids_dimension_check(data):
    train, _, _ = data
    cs = CentroidSet(centroids=np.zeros((2, 5)), inertia=0.0, k=2)
    with pytest.raises(CalibrationError):
        fit_calibrator(train, CalibratorConfig(), centroids=cs)


def test_dimension_and_length_errors(data):
    train, test, _ = data
    state = fit_calibrator(train, CalibratorConfig(m=5, k=2))
    with pytest.raises(CalibrationError):
        deltas(state, np.zeros((2, 4)))
    with pytest.raises(CalibrationError):
        calibrate_scores(state, np.zeros(3), test)


def test_range_errors():
    with pytest.raises(CalibrationError):
        fit_calibrator(np.zeros((3, 2)), CalibratorConfig(k=4))
    with pytest.raises(CalibrationError):
        fit_calibrator(np.random.default_rng(0).normal(size=(5, 2)), CalibratorConfig(m=6, k=2))


def test_lambda_zero_is_identity(data):
    train, test, _ = data
    base = np.random.default_rng(1).normal(size=test.shape[0])
    state = fit_calibrator(train, CalibratorConfig(lam=0.0))
    out = calibrate_scores(state, base, test)
    assert np.array_equal(out.calibrated, base)


def test_record_arithmetic(data):
    train, test, _ = data
    base = np.random.default_rng(2).normal(size=test.shape[0])
    out = calibrate_scores(fit_calibrator(train, CalibratorConfig(lam=0.7)), base, test)
    for r in out.records():
        assert r.calibrated == r.base_score + 0.7 * r.delta


def test_ot_only_ignores_base(data):
    train, test, _ = data
    state = fit_calibrator(train, CalibratorConfig(kind="ot-only"))
    a = calibrate_scores(state, np.zeros(len(test)), test).calibrated
    b = calibrate_scores(state, np.arange(len(test), dtype=float), test).calibrated
    assert np.array_equal(a, b)


def test_delta_independent_of_detector(data):
    train, test, _ = data
    state = fit_calibrator(train, CalibratorConfig(seed=5))
    got = []
    for name in ("knn", "pca", "ecod", "iforest"):
        base = make_detector(name, seed=0).fit(train).score(test)
        got.append(calibrate_scores(state, base, test).delta)
    assert all(np.array_equal(got[0], g) for g in got[1:])


@pytest.mark.parametrize("kind", KINDS)
def test_delta_nonnegative(data, kind):
    train, test, _ = data
    assert np.all(deltas(fit_calibrator(train, CalibratorConfig(kind=kind, m=8, k=3)), test) >= 0)


def test_anomalies_have_larger_delta(data):
    train, test, labels = data
    d = deltas(fit_calibrator(train, CalibratorConfig()), test)
    assert d[labels == 1].mean() > d[labels == 0].mean()


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0, 10), st.floats(0, 10), st.floats(-5, 5))
def test_larger_delta_wins_on_tied_base(lam, d1, d2, s):
    out = fuse([s, s], [d1, d2], lam).calibrated
    if d1 > d2:
        assert out[0] >= out[1]
    elif d2 > d1:
        assert out[1] >= out[0]


def test_minmax_normalization():
    out = fuse([0.0, 10.0, 5.0], [1.0, 3.0, 2.0], 1.0, normalize="minmax").calibrated
    assert out.tolist() == [0.0, 2.0, 1.0]
    with pytest.raises(CalibrationError):
        fuse([1.0], [1.0], 1.0, normalize="zscore")


def test_mahalanobis_near_euclidean_on_identity_cov():
    rng = np.random.default_rng(0)
    model = fit_mahalanobis(rng.standard_normal((10_000, 2)))
    probes = rng.uniform(-3, 3, size=(50, 2))
    probes = probes[np.linalg.norm(probes, axis=1) > 0.5]
    q = model.quadratic_form(probes)
    assert np.all(np.abs(q / (probes**2).sum(axis=1) - 1) < 0.05)


def test_mahalanobis_matches_direct_inverse():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 4)) @ rng.normal(size=(4, 4))
    model = fit_mahalanobis(x)
    cov = np.cov(x, rowvar=False) + model.reg * np.eye(4)
    probes = rng.normal(size=(20, 4)) * 2
    diff = probes - x.mean(axis=0)
    direct = np.einsum("ij,jk,ik->i", diff, np.linalg.inv(cov), diff)
    assert np.allclose(model.quadratic_form(probes), direct, rtol=1e-8)
    assert np.all(direct >= 0)
