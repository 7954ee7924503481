"""scikit-learn compatible classifier around formula training."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataset import DataSplit, LabeledWindow, fit_scale
from .formula import Formula, copy_formula
from .learn import TrainConfig, train
from .semantics import robustness_weighted
from .text import parse_template, to_text


class WSTLClassifier(ClassifierMixin, BaseEstimator):
    """Binary time-series classifier whose model is a weighted STL formula.

    Parameters
    ----------
    structure : str or Formula
        Formula structure to learn, e.g. ``"G[0,15](pred)"``. Text may use
        the template forms ``pred`` and omitted weight blocks.
    sigma, zeta : float
        Softmin temperature and loss sharpness.
    epochs, batch_size, learning_rate, optimizer, seed, scale
        Training options, see :class:`wstl.learn.TrainConfig`.
    gates : bool
        Train with gate variables and keep only weights whose gate stays
        open (see :func:`wstl.sparsify.train_gated`).
    lambda1, lambda2 : float
        Bi-modal and L1 gate regularizer weights, used when ``gates``.

    Attributes
    ----------
    formula_ : Formula
        Learned formula over raw (unscaled) features.
    history_ : list of EpochStats
    classes_ : ndarray of shape (2,)

    ``X`` has shape ``(n_samples, n_features, n_timesteps)``.
    """

    def __init__(self, structure="G[0,15](pred)", sigma=1.0, zeta=1.0, epochs=10, batch_size=8,
                 learning_rate=0.05, optimizer="adam", seed=0, scale=True, gates=False,
                 lambda1=0.0, lambda2=0.0):
        self.structure = structure
        self.sigma = sigma
        self.zeta = zeta
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.seed = seed
        self.scale = scale
        self.gates = gates
        self.lambda1 = lambda1
        self.lambda2 = lambda2

    def _structure(self, dim: int) -> Formula:
        if isinstance(self.structure, Formula):
            return copy_formula(self.structure)
        return parse_template(self.structure, dim)

    def fit(self, X, y):
        X, y = check_X_y(X, y, allow_nd=True, y_numeric=False)
        if X.ndim != 3:
            raise ValueError(f"X must have shape (n_samples, n_features, n_timesteps), got {X.shape}")
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two classes, got {len(self.classes_)}")
        # the larger label is the positive class (+1), e.g. 1 in {0, 1} or {-1, 1}
        signs = np.where(y == self.classes_[1], 1, -1)
        windows = [LabeledWindow(x, int(s)) for x, s in zip(X, signs)]
        cfg = TrainConfig(zeta=self.zeta, sigma=self.sigma, epochs=self.epochs, batch_size=self.batch_size,
                          learning_rate=self.learning_rate, optimizer=self.optimizer, seed=self.seed,
                          scale=self.scale)
        data = DataSplit(windows, [], fit_scale(windows, self.scale))
        structure = self._structure(X.shape[1])
        if self.gates:
            from .sparsify import train_gated

            self.formula_, self.gate_set_, self.history_ = train_gated(
                data, structure, cfg, self.lambda1, self.lambda2, seed=self.seed)
        else:
            self.formula_, self.history_ = train(data, structure, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        """Weighted robustness at time 0; nonnegative means the positive class."""
        check_is_fitted(self, "formula_")
        X = check_array(X, allow_nd=True)
        if X.ndim != 3 or X.shape[1] != self.n_features_in_:
            raise ValueError(f"X must have shape (n_samples, {self.n_features_in_}, n_timesteps), got {X.shape}")
        return robustness_weighted(X, self.formula_, 0, self.sigma)

    def predict(self, X):
        r = self.decision_function(X)
        return np.where(r >= 0, self.classes_[1], self.classes_[0])

    def to_text(self) -> str:
        check_is_fitted(self, "formula_")
        return to_text(self.formula_)
