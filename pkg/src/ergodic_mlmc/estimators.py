"""scikit-learn style wrappers around the integrator and the multilevel driver.

Hyperparameters live in ``__init__`` unchanged so ``get_params``/``set_params``
and ``clone`` work; models and observables are passed by name or as objects.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .mlmc import MlmcConfig, run_mlmc
from .model import Observable, SdeModel, model_by_name, observable_by_name
from .stepping import default_policy, simulate_paths


def _resolve_model(model):
    return model if isinstance(model, SdeModel) else model_by_name(model)


class AdaptiveEulerMaruyama(TransformerMixin, BaseEstimator):
    """Map initial states (rows of ``X``) to adaptive EM states at ``horizon``.

    ``transform`` is stochastic but reproducible: row ``i`` always uses the
    stream ``(seed, 0, i)``.
    """

    def __init__(self, model="cubic", horizon=10.0, delta=2.0**-4, h_max=1.0, seed=0,
                 workers=1):
        self.model = model
        self.horizon = horizon
        self.delta = delta
        self.h_max = h_max
        self.seed = seed
        self.workers = workers

    def fit(self, X=None, y=None):
        self.model_ = _resolve_model(self.model)
        self.policy_ = default_policy(self.model_, self.h_max).scaled(self.delta)
        self.n_features_in_ = self.model_.dim_state
        if X is not None:
            check_array(X, ensure_min_features=self.n_features_in_)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        batch = simulate_paths(self.model_, self.policy_, self.horizon, len(X), self.seed,
                               x0=X, workers=self.workers)
        self.steps_ = batch.steps
        return batch.terminal


class InvariantMeasureMLMC(BaseEstimator):
    """Multilevel estimate of the invariant-measure expectation of ``observable``.

    ``fit`` ignores its data; the estimate is stored in ``estimate_``.
    """

    def __init__(self, model="cubic", observable="abs", epsilon=1e-2, refinement_factor=2,
                 mode="langevin", lambda_=1.0, error_split=(0.5, 0.25, 0.25),
                 min_samples_per_level=50, max_level=20, h_max=1.0, seed=0, workers=1):
        self.model = model
        self.observable = observable
        self.epsilon = epsilon
        self.refinement_factor = refinement_factor
        self.mode = mode
        self.lambda_ = lambda_
        self.error_split = error_split
        self.min_samples_per_level = min_samples_per_level
        self.max_level = max_level
        self.h_max = h_max
        self.seed = seed
        self.workers = workers

    def fit(self, X=None, y=None):
        model = _resolve_model(self.model)
        phi = (self.observable if isinstance(self.observable, Observable)
               else observable_by_name(self.observable))
        config = MlmcConfig(epsilon=self.epsilon, refinement_factor=self.refinement_factor,
                            mode=self.mode, lambda_=self.lambda_, max_level=self.max_level,
                            min_samples_per_level=self.min_samples_per_level,
                            error_split=self.error_split, workers=self.workers)
        policy = default_policy(model, self.h_max, self.refinement_factor)
        self.result_ = run_mlmc(model, policy, phi, config, seed=self.seed)
        self.estimate_ = self.result_.estimate
        self.levels_ = self.result_.levels
        self.n_levels_ = len(self.levels_)
        self.total_cost_ = self.result_.total_cost
        return self

    def predict(self, X=None):
        """The fitted estimate, broadcast to ``len(X)`` rows when ``X`` is given."""
        check_is_fitted(self, "estimate_")
        if X is None:
            return self.estimate_
        return np.full(len(X), self.estimate_)
