"""scikit-learn compatible choice-model estimators.

``X`` is an ``(n, m)`` 0/1 matrix of offered products and ``y`` the chosen
product index per row::

    >>> model = LowRankHaloMNL(rank=2, random_state=0).fit(X, y)
    >>> model.predict_proba(X)      # (n, m), zero off-assortment

``score`` is the mean log-likelihood (higher is better), so the estimators
drop into ``cross_val_score`` and grid searches unchanged.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .data import ChoiceDataError, ChoiceDataset
from .estimation import FitConfig, fit, nll
from .models import choice_log_probs, choice_probs

__all__ = [
    "check_assortments",
    "check_choice_data",
    "MNL",
    "MixtureMNL",
    "HaloMNL",
    "LowRankHaloMNL",
]


def check_assortments(X, n_products=None) -> np.ndarray:
    """Validate an offer matrix: 2-d, 0/1 entries, no empty rows, matching width."""
    X = check_array(X, dtype=None, ensure_all_finite=True)
    if not np.isin(X, (0, 1)).all():
        raise ChoiceDataError("assortment matrix entries must be 0 or 1")
    X = X.astype(np.int8)
    empty = ~X.any(axis=1)
    if empty.any():
        raise ChoiceDataError(f"transaction {int(np.argmax(empty))}: empty assortment")
    if n_products is not None and X.shape[1] != n_products:
        raise ChoiceDataError(f"X has {X.shape[1]} products, estimator was fit with {n_products}")
    return X


def check_choice_data(X, y, n_products=None) -> ChoiceDataset:
    """Validate ``(X, y)`` and wrap them as a :class:`ChoiceDataset`."""
    X = check_assortments(X, n_products)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ChoiceDataError("y must be 1-d with one choice per row of X")
    return ChoiceDataset(X.shape[1], X, y)


class _ChoiceModel(BaseEstimator):
    _family: str = ""

    def _config(self) -> FitConfig:
        return FitConfig(
            lambda_=self.reg_lambda,
            step_size=self.step_size,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.random_state,
            init_scale=self.init_scale,
            patience=self.patience,
            val_fraction=self.val_fraction,
            optimizer=self.optimizer,
            **self._extra_config(),
        )

    def _extra_config(self) -> dict:
        return {}

    def fit(self, X, y=None):
        if isinstance(X, ChoiceDataset):
            data = X
        else:
            data = check_choice_data(X, y)
        result = fit(self._family, data, self._config())
        self.params_ = result.params
        self.fit_result_ = result
        self.n_products_ = data.num_products
        self.n_features_in_ = data.num_products
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return choice_probs(self.params_, check_assortments(X, self.n_products_))

    def predict_log_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return choice_log_probs(self.params_, check_assortments(X, self.n_products_))

    def predict(self, X) -> np.ndarray:
        """Most likely product per assortment."""
        return self.predict_proba(X).argmax(axis=1)

    def cross_entropy(self, X, y=None) -> float:
        check_is_fitted(self, "params_")
        data = X if isinstance(X, ChoiceDataset) else check_choice_data(X, y, self.n_products_)
        return nll(self.params_, data)

    def score(self, X, y=None) -> float:
        """Mean log-likelihood per transaction."""
        return -self.cross_entropy(X, y)


class MNL(_ChoiceModel):
    _family = "mnl"

    def __init__(self, reg_lambda=1e-4, step_size=1e-2, epochs=100, batch_size=256,
                 random_state=0, init_scale=0.01, patience=10, val_fraction=0.1,
                 optimizer="adam"):
        self.reg_lambda = reg_lambda
        self.step_size = step_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.init_scale = init_scale
        self.patience = patience
        self.val_fraction = val_fraction
        self.optimizer = optimizer


class HaloMNL(MNL):
    """Full ``m x m`` Halo MNL."""

    _family = "halo"


class MixtureMNL(_ChoiceModel):
    _family = "mixture"

    def __init__(self, n_components=2, reg_lambda=1e-4, step_size=1e-2, epochs=100,
                 batch_size=256, random_state=0, init_scale=0.01, patience=10,
                 val_fraction=0.1, optimizer="adam"):
        self.n_components = n_components
        self.reg_lambda = reg_lambda
        self.step_size = step_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.init_scale = init_scale
        self.patience = patience
        self.val_fraction = val_fraction
        self.optimizer = optimizer

    def _extra_config(self):
        return {"mixture_k": self.n_components}


class LowRankHaloMNL(_ChoiceModel):
    """Halo MNL with ``H = diag(alpha) + U V^T``, i.e. a single self-attention head.

    Parameters
    ----------
    rank : int
        Number of columns of ``U`` and ``V``.
    diag_mode : {"additive", "replace"}
        How ``alpha`` is merged with the diagonal of ``U V^T``.
    reg_lambda : float
        Weight of the squared-norm penalty on ``alpha``, ``U`` and ``V``.
    """

    _family = "lowrank"

    def __init__(self, rank=2, diag_mode="additive", reg_lambda=1e-4, step_size=1e-2,
                 epochs=100, batch_size=256, random_state=0, init_scale=0.01, patience=10,
                 val_fraction=0.1, optimizer="adam"):
        self.rank = rank
        self.diag_mode = diag_mode
        self.reg_lambda = reg_lambda
        self.step_size = step_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.init_scale = init_scale
        self.patience = patience
        self.val_fraction = val_fraction
        self.optimizer = optimizer

    def _extra_config(self):
        return {"rank": self.rank, "diag_mode": self.diag_mode}
