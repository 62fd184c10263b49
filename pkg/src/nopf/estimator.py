"""Scikit-learn-style wrapper around the predictor surrogate.

`PredictorOperatorRegressor` exposes the DeepONet training pipeline through
the familiar fit/predict/get_params surface so the surrogate composes with
model selection and pipeline tooling.  Design matrices are flat: a row of X
is [state (n) | input profile (g) | delay estimate (1)] and a row of y is
the marching-predictor profile flattened to (g * n,).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .surrogate import SurrogateArchitecture, forward_batch
from .training import Dataset, TrainConfig, eval_sup_error, train


class PredictorOperatorRegressor(BaseEstimator, RegressorMixin):
    """DeepONet regressor from delay-system queries to predictor profiles.

    Parameters mirror :class:`~nopf.surrogate.SurrogateArchitecture` and
    :class:`~nopf.training.TrainConfig`; see those for semantics.
    ``state_dim`` fixes how many leading columns of X form the state, the
    input grid size is inferred from the X width.
    """

    def __init__(self, state_dim=2, branch_layers=(128, 128, 128),
                 trunk_layers=(128, 128), latent_dim=48, activation="tanh",
                 learning_rate=1e-3, batch_size=256, epochs=1500,
                 adam_beta1=0.9, adam_beta2=0.999, adam_eps=1e-8,
                 patience=100, validation_fraction=0.1, target_epsilon=None,
                 seed=0):
        self.state_dim = state_dim
        self.branch_layers = branch_layers
        self.trunk_layers = trunk_layers
        self.latent_dim = latent_dim
        self.activation = activation
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.target_epsilon = target_epsilon
        self.seed = seed

    def _split(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n = int(self.state_dim)
        g = X.shape[1] - n - 1
        if g < 2:
            raise ValueError(f"X has {X.shape[1]} columns; need state_dim + "
                             f"grid samples + delay estimate with >= 2 grid samples")
        if y is None:
            return X, g, None
        y = check_array(y, dtype=np.float64)
        if y.shape != (X.shape[0], g * n):
            raise ValueError(f"y has shape {y.shape}, expected {(X.shape[0], g * n)} "
                             f"(profile of {g} nodes x {n} components per row)")
        return X, g, y

    def _dataset(self, X, g, y):
        n = int(self.state_dim)
        return Dataset(states=X[:, :n], profiles=X[:, n:n + g], d_hats=X[:, n + g],
                       targets=y.reshape(len(X), g, n), meta={})

    def fit(self, X, y):
        X, g, y = self._split(X, y)
        architecture = SurrogateArchitecture(
            state_dim=int(self.state_dim), input_grid_size=g,
            branch_layers=tuple(self.branch_layers),
            trunk_layers=tuple(self.trunk_layers),
            latent_dim=int(self.latent_dim), activation=self.activation)
        config = TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            epochs=self.epochs, adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2, adam_eps=self.adam_eps,
            seed=self.seed, patience=self.patience,
            validation_fraction=self.validation_fraction,
            target_epsilon=self.target_epsilon)
        self.params_, self.report_ = train(self._dataset(X, g, y), architecture, config)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X, g, _ = self._split(X)
        if g != self.params_.architecture.input_grid_size:
            raise ValueError(f"X implies a grid of {g} samples; the fitted "
                             f"surrogate consumes {self.params_.architecture.input_grid_size}")
        n = int(self.state_dim)
        s_points = np.linspace(0.0, 1.0, g)
        out = forward_batch(self.params_, X[:, :n], X[:, n:n + g], X[:, n + g],
                            s_points)
        return out.reshape(len(X), g * n)

    def sup_error(self, X, y):
        """Empirical sup-error report against labelled queries."""
        check_is_fitted(self, "params_")
        X, g, y = self._split(X, y)
        return eval_sup_error(self.params_, self._dataset(X, g, y))
