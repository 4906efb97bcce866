"""Bayesian LDA: Bayesian linear regression on class-coded targets with
evidence-maximized prior and noise precisions."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import linalg

from ._base import LinearDiscriminant, LinearModel, TrainingSet

BIAS_PRECISION = 1e-8


class ConvergenceWarning(UserWarning):
    pass


def fit_blda(train: TrainingSet, tol: float = 1e-4, max_iter: int = 100,
             alpha0: float = 1.0, beta0: float = 1.0) -> LinearModel:
    """Fit BLDA.

    Targets are ``n/n+`` for Target and ``-n/n-`` for NonTarget. The weight
    prior is isotropic with precision ``alpha``; the bias (a constant
    feature) gets a fixed, nearly flat prior. ``alpha`` and ``beta`` follow
    the evidence fixed-point updates until both change by less than ``tol``
    relatively. On non-convergence the last iterate is returned with
    ``meta["converged"] = False``.
    """
    X, y = train.X, train.y
    n, d = X.shape
    n_pos = np.count_nonzero(y == 1)
    t = np.where(y == 1, n / n_pos, -n / (n - n_pos))
    A = np.column_stack([X, np.ones(n)])
    gram = A.T @ A
    At = A.T @ t

    alpha, beta = float(alpha0), float(beta0)
    history = []
    converged = False
    m = np.zeros(d + 1)
    for it in range(1, max_iter + 1):
        prior = np.full(d + 1, alpha)
        prior[-1] = BIAS_PRECISION
        H = beta * gram
        H[np.diag_indices(d + 1)] += prior
        c, low = linalg.cho_factor(H)
        m = beta * linalg.cho_solve((c, low), At)
        cov_diag = np.diag(linalg.cho_solve((c, low), np.eye(d + 1)))
        resid = t - A @ m
        err = resid @ resid
        # well-determined parameters, counted over the weights only
        gamma_w = d - alpha * cov_diag[:d].sum()
        gamma_all = gamma_w + (1.0 - BIAS_PRECISION * cov_diag[-1])
        w_sq = m[:d] @ m[:d]
        new_alpha = gamma_w / w_sq if w_sq > 0 else alpha * 1e3
        new_beta = (n - gamma_all) / err if err > 0 else beta * 1e3
        new_alpha = float(np.clip(new_alpha, 1e-12, 1e12))
        new_beta = float(np.clip(new_beta, 1e-12, 1e12))
        history.append((new_alpha, new_beta))
        d_alpha = abs(new_alpha - alpha) / alpha
        d_beta = abs(new_beta - beta) / beta
        alpha, beta = new_alpha, new_beta
        if d_alpha < tol and d_beta < tol:
            converged = True
            break
    if converged:
        # posterior mean at the converged hyperparameters
        prior = np.full(d + 1, alpha)
        prior[-1] = BIAS_PRECISION
        H = beta * gram
        H[np.diag_indices(d + 1)] += prior
        m = beta * linalg.solve(H, At, assume_a="pos")
    else:
        warnings.warn(f"BLDA did not converge in {max_iter} iterations", ConvergenceWarning)
    meta = {"method": "blda", "alpha": alpha, "beta": beta, "n_iter": it,
            "converged": converged, "history": np.asarray(history)}
    return LinearModel(m[:d], m[d], meta)


class BLDA(LinearDiscriminant):
    """Bayesian LDA.

    Parameters
    ----------
    tol : float, default=1e-4
        Relative hyperparameter change that ends the evidence iteration.
    max_iter : int, default=100
    """

    def __init__(self, tol=1e-4, max_iter=100):
        self.tol = tol
        self.max_iter = max_iter

    def _fit_model(self, train):
        return fit_blda(train, self.tol, self.max_iter)
