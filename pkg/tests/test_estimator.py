"""Sklearn estimator facade: params contract, fit/predict, validation."""

import numpy as np
import pytest
from sklearn.base import clone

from mvnet import DataError, DimensionError
from mvnet.data import edge_pad, extract_patches, synthesize_dataset
from mvnet.estimator import MVNetClassifier, check_patch_array


@pytest.fixture(scope="module")
def toy_xy():
    cube = synthesize_dataset(12, 12, 8, 3, 0.02, seed=21)
    ps = extract_patches(edge_pad(cube, 1), 3)
    # string labels exercise the class-encoding path
    y = np.array([f"c{v}" for v in ps.labels])
    return ps.patches, y


def fast_params():
    return dict(
        embed_dim=8, stage_depths=(1, 0, 1, 1), windows=(2, 2, 2, 2),
        heads=(2, 2, 2, 2), mlp_ratio=2, drop_rate=0.0, epochs=12,
        lr=2e-3, batch_size=32, patience=12, seed=5, use_float64=True,
    )


class TestSklearnContract:
    def test_get_set_params_round_trip(self):
        clf = MVNetClassifier(**fast_params())
        params = clf.get_params()
        assert params["embed_dim"] == 8
        clf2 = MVNetClassifier().set_params(**params)
        assert clf2.get_params() == params

    def test_clone(self):
        clf = MVNetClassifier(**fast_params())
        cloned = clone(clf)
        assert cloned.get_params() == clf.get_params()

    def test_unfitted_predict_raises(self, toy_xy):
        X, _ = toy_xy
        with pytest.raises(DataError):
            MVNetClassifier(**fast_params()).predict(X[:2])


class TestFitPredict:
    def test_fit_predict_score(self, toy_xy):
        X, y = toy_xy
        clf = MVNetClassifier(**fast_params()).fit(X, y)
        assert set(clf.classes_) == set(np.unique(y))
        pred = clf.predict(X)
        assert pred.shape == y.shape
        assert pred.dtype == y.dtype
        assert clf.score(X, y) >= 0.8
        assert len(clf.history_) <= fast_params()["epochs"]

    def test_predict_proba_rows(self, toy_xy):
        X, y = toy_xy
        clf = MVNetClassifier(**fast_params()).fit(X[:60], y[:60])
        proba = clf.predict_proba(X[:10])
        assert proba.shape == (10, len(clf.classes_))
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-6)

    def test_deterministic_given_seed(self, toy_xy):
        X, y = toy_xy
        a = MVNetClassifier(**fast_params()).fit(X[:60], y[:60]).predict(X[:20])
        b = MVNetClassifier(**fast_params()).fit(X[:60], y[:60]).predict(X[:20])
        assert np.array_equal(a, b)


class TestValidation:
    def test_bad_rank(self):
        with pytest.raises(DimensionError):
            check_patch_array(np.zeros((4, 3, 3)))

    def test_non_square(self):
        with pytest.raises(DimensionError):
            check_patch_array(np.zeros((4, 3, 5, 2)))

    def test_even_side(self):
        with pytest.raises(DimensionError):
            check_patch_array(np.zeros((4, 4, 4, 2)))

    def test_non_finite(self):
        x = np.zeros((2, 3, 3, 2))
        x[0, 0, 0, 0] = np.nan
        with pytest.raises(DataError):
            check_patch_array(x)

    def test_single_class_rejected(self, toy_xy):
        X, y = toy_xy
        mask = y == y[0]
        with pytest.raises(DataError):
            MVNetClassifier(**fast_params()).fit(X[mask], y[mask])
