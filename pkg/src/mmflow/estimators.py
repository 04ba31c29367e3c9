"""scikit-learn compatible wrappers.

``MatrixMeasureTransformer`` maps a batch of square matrices (shape
``(n_samples, n, n)`` or flattened ``(n_samples, n * n)``) to their measures,
so measure channels can sit inside a ``Pipeline``. ``DecayRateRegressor``
fits ``y = A exp(-rate * t)`` by log-linear least squares.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError
from .measures import MeasureId, measure, operator_norm
from .verify import DECAY_FLOOR, fit_decay_rate


def _as_matrix_batch(X, n=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        side = math.isqrt(X.shape[1])
        if side * side != X.shape[1]:
            raise ValidationError(f"{X.shape[1]} features is not a square matrix size")
        X = X.reshape(X.shape[0], side, side)
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise ValidationError(f"expected a batch of square matrices, got shape {X.shape}")
    if n is not None and X.shape[1] != n:
        raise ValidationError(f"matrices are {X.shape[1]}x{X.shape[1]}, fitted on n={n}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("input contains non-finite entries")
    return X


class MatrixMeasureTransformer(TransformerMixin, BaseEstimator):
    """Matrix measure of each matrix in a batch.

    Parameters
    ----------
    measure : {"mu1", "mu2", "muinf"}
    include_norm : bool
        Append the induced operator norm as a second column.
    """

    def __init__(self, measure="mu2", include_norm=False):
        self.measure = measure
        self.include_norm = include_norm

    def fit(self, X, y=None):
        X = _as_matrix_batch(X)
        self.measure_id_ = MeasureId.parse(self.measure)
        self.n_ = X.shape[1]
        self.n_features_in_ = self.n_ * self.n_
        return self

    def transform(self, X):
        check_is_fitted(self, "measure_id_")
        X = _as_matrix_batch(X, self.n_)
        cols = [[measure(W, self.measure_id_) for W in X]]
        if self.include_norm:
            cols.append([operator_norm(W, self.measure_id_) for W in X])
        return np.array(cols, dtype=np.float64).T

    def get_feature_names_out(self, input_features=None):
        names = [f"{self.measure}"]
        if self.include_norm:
            names.append(f"{self.measure}_norm")
        return np.array(names, dtype=object)


class DecayRateRegressor(RegressorMixin, BaseEstimator):
    """Exponential decay fit on times ``X`` (one column) and positive ``y``.

    Samples with ``y < floor`` are ignored during ``fit``.
    """

    def __init__(self, floor=DECAY_FLOOR):
        self.floor = floor

    def fit(self, X, y):
        t = self._times(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape != t.shape:
            raise ValidationError("X and y lengths differ")
        self.rate_ = fit_decay_rate(y, t, floor=self.floor)
        mask = y >= self.floor
        self.log_amplitude_ = float(np.mean(np.log(y[mask]) + self.rate_ * t[mask]))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "rate_")
        return np.exp(self.log_amplitude_ - self.rate_ * self._times(X))

    @staticmethod
    def _times(X):
        t = np.asarray(X, dtype=np.float64)
        if t.ndim == 2:
            if t.shape[1] != 1:
                raise ValidationError("X must hold a single time column")
            t = t[:, 0]
        if t.ndim != 1 or not np.all(np.isfinite(t)):
            raise ValidationError("X must be a finite vector of times")
        return t
