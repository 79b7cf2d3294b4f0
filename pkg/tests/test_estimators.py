import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from infharm.estimators import (InfinityResidualTransformer, PHarmonicInterpolator, RankPhaseClassifier,
                                resolve_map)
from infharm.map_model import Grid, catalog


def test_params_round_trip_through_clone():
    est = InfinityResidualTransformer(map="exp_diag", tau_rank=1e-6)
    twin = clone(est)
    assert twin.get_params() == {"map": "exp_diag", "tau_rank": 1e-6}
    twin.set_params(map="affine")
    assert est.map == "exp_diag"


def test_transform_matches_harmonic_map():
    X = np.random.default_rng(0).uniform(-0.5, 0.5, size=(20, 2))
    Z = InfinityResidualTransformer("affine").fit_transform(X)
    assert Z.shape == (20, 3)
    assert np.abs(Z).max() <= 1e-9


def test_transform_before_fit_raises():
    with pytest.raises(NotFittedError):
        InfinityResidualTransformer().transform(np.zeros((1, 2)))


def test_wrong_width_rejected():
    with pytest.raises(ValueError):
        InfinityResidualTransformer("affine").fit(np.zeros((3, 5)))


def test_classifier_predicts_full_rank_for_affine():
    X = np.random.default_rng(1).uniform(-0.5, 0.5, size=(10, 2))
    clf = RankPhaseClassifier("affine").fit(X)
    assert set(clf.predict(X)) <= set(clf.classes_)
    assert clf.score(X, clf.predict(X)) == 1.0


def test_resolve_map_forms():
    m = catalog("affine")
    assert resolve_map(m) is m
    assert resolve_map("affine").name == m.name
    with pytest.raises(TypeError):
        resolve_map(3.0)


def test_interpolator_recovers_linear_data():
    box = ((0.0, 1.0), (0.0, 1.0))
    g = Grid.over(box, 17)
    Xb = g.nodes[g.boundary]
    yb = 2 * Xb[:, 0] - Xb[:, 1]
    est = PHarmonicInterpolator(p=4, box=box, resolution=17).fit(Xb, yb)
    Xq = np.random.default_rng(2).uniform(0.1, 0.9, size=(15, 2))
    assert np.abs(est.predict(Xq) - (2 * Xq[:, 0] - Xq[:, 1])).max() <= 1e-8
    assert est.solution_.converged


def test_pipeline_composes():
    X = np.random.default_rng(3).uniform(-0.3, 0.3, size=(5, 2))
    pipe = make_pipeline(InfinityResidualTransformer("exp_diag"))
    assert pipe.fit_transform(X).shape == (5, 3)
