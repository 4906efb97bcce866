"""LDA and its covariance-regularized variants (RLDA, shrinkage LDA)."""

from __future__ import annotations

import numpy as np
from scipy import linalg

from ._base import ClassifierError, LinearDiscriminant, LinearModel, TrainingSet


def pooled_covariance(train: TrainingSet) -> np.ndarray:
    """Pooled within-class covariance with the unbiased ``n - 2`` denominator."""
    Xc = _class_centered(train)
    return Xc.T @ Xc / (train.n - 2)


def _class_centered(train: TrainingSet) -> np.ndarray:
    mu_pos, mu_neg = train.class_means()
    return train.X - np.where((train.y == 1)[:, np.newaxis], mu_pos, mu_neg)


def shrink_covariance(cov: np.ndarray, gamma: float) -> np.ndarray:
    """Convex combination ``(1 - gamma) * cov + gamma * nu * I`` with ``nu = tr(cov)/d``."""
    d = cov.shape[0]
    nu = np.trace(cov) / d
    out = (1.0 - gamma) * cov
    out[np.diag_indices(d)] += gamma * nu
    return out


def ledoit_wolf_gamma(train: TrainingSet) -> float:
    """Analytic shrinkage intensity towards the scaled identity.

    Uses the closed form popularised for ERP classification: the sum of the
    estimated variances of the covariance entries divided by the squared
    distance between the sample covariance and its shrinkage target.
    """
    Xc = _class_centered(train)
    n, d = Xc.shape
    S = Xc.T @ Xc / (n - 1)
    nu = np.trace(S) / d
    # sum_kl var_i(z_ikl) with z_ikl = x_ik x_il, computed without n x d x d temporaries
    sq = Xc**2
    sum_z2 = np.sum((sq.T @ sq))
    mean_z = Xc.T @ Xc / n
    var_sum = (sum_z2 - n * np.sum(mean_z**2)) / (n - 1)
    target_dist = np.sum(S**2) - 2 * nu * np.trace(S) + d * nu**2
    if target_dist <= 0:
        return 1.0
    gamma = n / (n - 1) ** 2 * var_sum / target_dist
    return float(np.clip(gamma, 0.0, 1.0))


def _is_singular(cov: np.ndarray, rtol: float = 1e-10) -> bool:
    eig = linalg.eigvalsh(cov)
    return eig[-1] <= 0 or eig[0] <= rtol * eig[-1]


def lda_from_covariance(train: TrainingSet, cov: np.ndarray, meta=None) -> LinearModel:
    """LDA weights ``cov^-1 (mu+ - mu-)`` with the equal-prior midpoint bias."""
    if _is_singular(cov):
        raise ClassifierError("singular covariance")
    mu_pos, mu_neg = train.class_means()
    w = linalg.solve(cov, mu_pos - mu_neg, assume_a="pos")
    b = -w @ (mu_pos + mu_neg) / 2
    return LinearModel(w, b, meta or {})


def fit_lda(train: TrainingSet) -> LinearModel:
    return lda_from_covariance(train, pooled_covariance(train), {"method": "lda"})


def fit_rlda(train: TrainingSet, lam: float = 0.01) -> LinearModel:
    if not 0.0 <= lam <= 1.0:
        raise ClassifierError(f"lambda must lie in [0, 1], got {lam}")
    cov = shrink_covariance(pooled_covariance(train), lam)
    return lda_from_covariance(train, cov, {"method": "rlda", "lambda": float(lam)})


def fit_sklda(train: TrainingSet, gamma: float | str = 0.1) -> LinearModel:
    if isinstance(gamma, str):
        if gamma != "analytic":
            raise ClassifierError(f"gamma must be a number in [0, 1] or 'analytic', got {gamma!r}")
        gamma = ledoit_wolf_gamma(train)
    if not 0.0 <= gamma <= 1.0:
        raise ClassifierError(f"gamma must lie in [0, 1], got {gamma}")
    cov = shrink_covariance(pooled_covariance(train), gamma)
    return lda_from_covariance(train, cov, {"method": "sklda", "gamma": float(gamma)})


class LDA(LinearDiscriminant):
    """Plain Fisher LDA with equal priors."""

    def _fit_model(self, train):
        return fit_lda(train)


class RLDA(LinearDiscriminant):
    """Regularized LDA: covariance pulled towards a scaled identity by ``lam``.

    Parameters
    ----------
    lam : float, default=0.01
        Weight of the scaled-identity target, in [0, 1].
    """

    def __init__(self, lam=0.01):
        self.lam = lam

    def _fit_model(self, train):
        return fit_rlda(train, self.lam)


class SKLDA(LinearDiscriminant):
    """Shrinkage LDA.

    Parameters
    ----------
    gamma : float or "analytic", default=0.1
        Shrinkage intensity; ``"analytic"`` estimates it from the data.
    """

    def __init__(self, gamma=0.1):
        self.gamma = gamma

    def _fit_model(self, train):
        return fit_sklda(train, self.gamma)
