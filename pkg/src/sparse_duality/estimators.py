"""scikit-learn style wrappers around the solvers.

Regressors normalize the columns of ``X`` internally and report ``coef_`` on
the original scale. Classifiers use ``X`` as given.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .classifier import (ClassifierOptions, fit_approx_l0_classifier, fit_type2_classifier,
                         predict_proba)
from .core import Dictionary
from .lambda_learn import LambdaOptions, learn_lambda_type1, learn_lambda_type2
from .penalties import PenaltyFamily
from .type1 import Type1Options, solve_type1
from .type2 import NoiselessOptions, Type2Options, solve_type2, solve_type2_noiseless


class _SparseRegressor(RegressorMixin, BaseEstimator):

    def _prepare(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        d = Dictionary.from_matrix(X)
        self.n_features_in_ = X.shape[1]
        return d, y

    def _finish(self, d, rep_x, gamma, report):
        self.coef_ = rep_x / d.column_norms
        self.gamma_ = gamma
        self.report_ = report
        self.n_iter_ = getattr(report, "iterations", 0)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_


class Type1Regressor(_SparseRegressor):
    """Penalized least squares ``||y - X w||^2 + lam * sum g(w_i)``.

    Parameters
    ----------
    penalty : str, default="lp:1"
        Penalty family, e.g. ``"lp:0.5"``, ``"logsum:0.01"``.
    lam : float or "learn", default=1.0
        Trade-off parameter; ``"learn"`` estimates it jointly with ``w``.
    max_iter : int, default=200
    """

    def __init__(self, penalty="lp:1", lam=1.0, max_iter=200):
        self.penalty = penalty
        self.lam = lam
        self.max_iter = max_iter

    def fit(self, X, y):
        d, y = self._prepare(X, y)
        pen = PenaltyFamily.parse(self.penalty)
        if isinstance(self.lam, str):
            if self.lam != "learn":
                raise ValueError(f"lam must be a positive number or 'learn', got {self.lam!r}")
            est = learn_lambda_type1(d, pen, y, LambdaOptions(max_iters=max(self.max_iter, 1)))
            self.lambda_ = est.lambda_star
            return self._finish(d, est.x_star, est.gamma, est)
        rep = solve_type1(d, pen, float(self.lam), y, Type1Options(max_iters=self.max_iter))
        self.lambda_ = float(self.lam)
        return self._finish(d, rep.x_hat, rep.gamma_hat, rep)


class Type2Regressor(_SparseRegressor):
    """Empirical Bayes sparse regression (posterior mean after learning ``gamma``).

    Parameters
    ----------
    penalty : str, default="ard"
    lam : float or "learn", default=0.1
        Noise variance; ``"learn"`` runs joint EM over ``gamma`` and ``lam``.
    update_rule : {"mackay", "em", "reweighted_l1"}, default="mackay"
    max_iter : int, default=500
    """

    def __init__(self, penalty="ard", lam=0.1, update_rule="mackay", max_iter=500):
        self.penalty = penalty
        self.lam = lam
        self.update_rule = update_rule
        self.max_iter = max_iter

    def fit(self, X, y):
        d, y = self._prepare(X, y)
        pen = PenaltyFamily.parse(self.penalty)
        if isinstance(self.lam, str):
            if self.lam != "learn":
                raise ValueError(f"lam must be a positive number or 'learn', got {self.lam!r}")
            est = learn_lambda_type2(d, pen, y, LambdaOptions(max_iters=self.max_iter))
            self.lambda_ = est.lambda_star
            return self._finish(d, est.x_star, est.gamma, est)
        rep = solve_type2(d, pen, float(self.lam), y,
                          Type2Options(update_rule=self.update_rule, max_iters=self.max_iter))
        self.lambda_ = float(self.lam)
        return self._finish(d, rep.x_hat, rep.gamma_hat, rep)


class SparseRecovery(_SparseRegressor):
    """Noiseless maximally sparse solution of ``X w = y`` by Type II reweighted l1.

    Parameters
    ----------
    q : float, default=1.0
        Exponent of the reweighting function.
    max_iter : int, default=30
    """

    def __init__(self, q=1.0, max_iter=30):
        self.q = q
        self.max_iter = max_iter

    def fit(self, X, y):
        d, y = self._prepare(X, y)
        rep = solve_type2_noiseless(d, y, q=self.q, opts=NoiselessOptions(max_iters=self.max_iter))
        return self._finish(d, rep.x_hat, rep.gamma_hat, rep)


class _SparseClassifier(ClassifierMixin, BaseEstimator):

    def _prepare(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        if self.classes_.size != 2:
            raise ValueError(f"binary labels required, got {self.classes_.size} classes")
        self.n_features_in_ = X.shape[1]
        return X, (y == self.classes_[1]).astype(float)

    def _finish(self, rep):
        self.coef_ = rep.x_hat
        self.gamma_ = rep.gamma_hat
        self.report_ = rep
        self.n_iter_ = rep.iterations
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        p = predict_proba(check_array(X), self.coef_)
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X) @ self.coef_

    def predict(self, X):
        return self.classes_[(self.predict_proba(X)[:, 1] >= 0.5).astype(int)]


class Type2LogisticClassifier(_SparseClassifier):
    """Logistic regression penalized by ``lam * g2``.

    No intercept is fitted; append a constant column to ``X`` if needed.
    """

    def __init__(self, penalty="ard", lam=4.0, max_iter=1000):
        self.penalty = penalty
        self.lam = lam
        self.max_iter = max_iter

    def fit(self, X, y):
        X, yb = self._prepare(X, y)
        rep = fit_type2_classifier((X, yb), PenaltyFamily.parse(self.penalty),
                                   ClassifierOptions(lam=self.lam, max_iters=self.max_iter))
        return self._finish(rep)


class ApproxL0Classifier(_SparseClassifier):
    """Logistic regression with the homotopy approximation to an ``l0`` penalty."""

    def __init__(self, alpha1=1.0, alpha2=1.0, alpha1_min=1e-6, alpha2_min=1e-6,
                 alpha_decay=0.3, stages=8, max_iter=1000):
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.alpha1_min = alpha1_min
        self.alpha2_min = alpha2_min
        self.alpha_decay = alpha_decay
        self.stages = stages
        self.max_iter = max_iter

    def fit(self, X, y):
        X, yb = self._prepare(X, y)
        opts = ClassifierOptions(alpha1=self.alpha1, alpha2=self.alpha2,
                                 alpha1_min=self.alpha1_min, alpha2_min=self.alpha2_min,
                                 alpha_decay=self.alpha_decay, stages=self.stages,
                                 max_iters=self.max_iter)
        return self._finish(fit_approx_l0_classifier((X, yb), opts))


__all__ = ["Type1Regressor", "Type2Regressor", "SparseRecovery", "Type2LogisticClassifier",
           "ApproxL0Classifier"]
