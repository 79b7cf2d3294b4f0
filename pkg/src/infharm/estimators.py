"""scikit-learn style wrappers around the numerical core.

Points are rows of ``X`` (shape ``(samples, n)``), so the wrappers compose with
pipelines and ``get_params``/``set_params``/``clone``.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .infinity_ops import residual
from .map_model import Grid, MapSpec, catalog
from .psolver import solve_p
from .tensor_core import DEFAULT_RANK_TOL, numerical_rank, svd_small


def resolve_map(spec) -> MapSpec:
    """Accept a ``MapSpec``, a catalog name, or a JSON description."""
    if isinstance(spec, MapSpec):
        return spec
    if isinstance(spec, str):
        return MapSpec.from_json(spec) if spec.lstrip().startswith("{") else catalog(spec)
    if isinstance(spec, dict):
        return MapSpec.from_dict(spec)
    raise TypeError(f"cannot interpret {type(spec).__name__} as a map")


def check_points(X, n: int) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != n:
        raise ValueError(f"expected {n} coordinates per row, got {X.shape[1]}")
    return X


class _MapEstimator(BaseEstimator):
    def fit(self, X, y=None):
        self.map_ = resolve_map(self.map)
        X = check_points(X, self.map_.n)
        self.n_features_in_ = X.shape[1]
        return self

    def _points(self, X):
        check_is_fitted(self, "map_")
        return check_points(X, self.map_.n)


class InfinityResidualTransformer(TransformerMixin, _MapEstimator):
    """Rows of ``|tangential|, |normal|, |total|`` infinity-Laplacian norms at each point."""

    def __init__(self, map="affine", tau_rank: float = DEFAULT_RANK_TOL):
        self.map = map
        self.tau_rank = tau_rank

    def transform(self, X):
        X = self._points(X)
        r = residual(self.map_, X, self.tau_rank)
        return np.column_stack([r.norm("tangential"), r.norm("normal"), r.norm("total")])

    def get_feature_names_out(self, input_features=None):
        return np.array(["tangential", "normal", "total"], dtype=object)


class RankPhaseClassifier(ClassifierMixin, _MapEstimator):
    """Predicts the numerical rank of ``Du`` at each point."""

    def __init__(self, map="affine", tau_rank: float = DEFAULT_RANK_TOL):
        self.map = map
        self.tau_rank = tau_rank

    def fit(self, X, y=None):
        super().fit(X, y)
        self.classes_ = np.arange(min(self.map_.n, self.map_.N) + 1)
        return self

    def predict(self, X):
        X = self._points(X)
        _, sigma, _ = svd_small(self.map_.gradient(X))
        return np.asarray(numerical_rank(sigma, self.tau_rank))


class PHarmonicInterpolator(RegressorMixin, BaseEstimator):
    """Extends boundary samples into a box by minimizing the discrete p-energy.

    ``fit`` takes points on the boundary of ``box`` and their values; each boundary
    node of the solver grid takes the value of the nearest sample.  ``predict``
    interpolates the solution bilinearly.
    """

    def __init__(self, p: float = 2.0, box=((0.0, 1.0), (0.0, 1.0)), resolution: int = 33):
        self.p = p
        self.box = box
        self.resolution = resolution

    def fit(self, X, y):
        X = check_points(X, 2)
        Y = check_array(y, ensure_2d=False, dtype=np.float64)
        Y = Y.reshape(len(X), -1)
        grid = Grid.over(self.box, self.resolution)
        B = np.full((grid.nodes.shape[0], Y.shape[1]), np.nan)
        bnodes = grid.nodes[grid.boundary]
        nearest = np.argmin(((bnodes[:, None, :] - X[None, :, :]) ** 2).sum(-1), axis=1)
        B[grid.boundary] = Y[nearest]
        self.solution_ = solve_p(B, grid, self.p)
        self.grid_ = grid
        self.n_features_in_ = 2
        self.n_outputs_ = Y.shape[1]
        values = grid.reshape(self.solution_.values)
        self.interpolator_ = RegularGridInterpolator(grid.axes(), values)
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        out = self.interpolator_(check_points(X, 2))
        return out[:, 0] if self.n_outputs_ == 1 else out
