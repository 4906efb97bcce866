"""Stepwise LDA: forward/backward feature selection by partial F-tests on a
least-squares regression of the labels, followed by an OLS fit on the
selected features."""

from __future__ import annotations

import numpy as np
from scipy import stats

from ._base import ClassifierError, LinearDiscriminant, LinearModel, TrainingSet

_COLLINEAR_TOL = 1e-10


def _basis(X, selected):
    n = X.shape[0]
    A = np.column_stack([np.ones(n)] + [X[:, j] for j in selected])
    q, _ = np.linalg.qr(A)
    return q


def _entry_pvalues(X, y, selected, excluded):
    """Partial-F p-values for adding each excluded feature to ``selected``."""
    n = X.shape[0]
    q = _basis(X, selected)
    r = y - q @ (q.T @ y)
    rss = r @ r
    cand = X[:, excluded]
    cand = cand - q @ (q.T @ cand)
    norms = np.einsum("ij,ij->j", cand, cand)
    col_scale = np.einsum("ij,ij->j", X[:, excluded], X[:, excluded]) + 1.0
    usable = norms > _COLLINEAR_TOL * col_scale
    gain = np.zeros(len(excluded))
    gain[usable] = (cand[:, usable].T @ r) ** 2 / norms[usable]
    df = n - len(selected) - 2
    p = np.ones(len(excluded))
    if df > 0:
        rss_new = np.maximum(rss - gain, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            F = gain / (rss_new / df)
        ok = usable & (rss_new > 0)
        p[ok] = stats.f.sf(F[ok], 1, df)
        # exact fit: the candidate explains the entire residual
        p[usable & (rss_new <= 0) & (gain > 0)] = 0.0
    return p


def _ols(X, y, selected):
    n = X.shape[0]
    A = np.column_stack([np.ones(n)] + [X[:, j] for j in selected])
    beta, *_ = np.linalg.lstsq(A, y, rcond=None)
    return A, beta


def _removal_pvalues(X, y, selected):
    """Partial-F p-values for dropping each selected feature."""
    n = X.shape[0]
    A, beta = _ols(X, y, selected)
    resid = y - A @ beta
    rss = resid @ resid
    df = n - len(selected) - 1
    if df <= 0 or rss <= 0:
        return np.zeros(len(selected))
    _, R = np.linalg.qr(A)
    Rinv = np.linalg.solve(R, np.eye(R.shape[0]))
    diag = np.einsum("ij,ij->i", Rinv, Rinv)[1:]
    F = beta[1:] ** 2 / diag / (rss / df)
    return stats.f.sf(F, 1, df)


def stepwise_select(X, y, p_ins=0.1, p_rem=0.15, max_features=60, max_steps=None):
    """Forward/backward stepwise selection; returns the sorted selected indices.

    Each step inserts the excluded feature with the smallest entry p-value if
    it is below ``p_ins`` (ties go to the lowest index), then removes included
    features whose p-value exceeds ``p_rem``, worst first. Stops when a step
    changes nothing or a selection repeats.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = X.shape[1]
    selected: list[int] = []
    seen = {()}
    max_steps = max_steps or 4 * d + 10
    for _ in range(max_steps):
        changed = False
        if len(selected) < max_features:
            excluded = [j for j in range(d) if j not in selected]
            if excluded:
                p = _entry_pvalues(X, y, selected, excluded)
                best = int(np.argmin(p))
                if p[best] < p_ins:
                    selected.append(excluded[best])
                    changed = True
        while selected:
            p = _removal_pvalues(X, y, selected)
            worst = int(np.argmax(p))
            if p[worst] <= p_rem:
                break
            selected.pop(worst)
            changed = True
        key = tuple(sorted(selected))
        if not changed or (key in seen and key != ()):
            break
        seen.add(key)
    return sorted(selected)


def fit_swlda(train: TrainingSet, p_ins: float = 0.1, p_rem: float = 0.15,
              max_features: int = 60) -> LinearModel:
    if not 0 < p_ins < p_rem < 1:
        raise ClassifierError(
            f"need 0 < p_ins < p_rem < 1 (entry/removal criteria inconsistent), "
            f"got p_ins={p_ins}, p_rem={p_rem}"
        )
    if max_features < 1:
        raise ClassifierError("max_features must be >= 1")
    y = train.y.astype(np.float64)
    selected = stepwise_select(train.X, y, p_ins, p_rem, max_features)
    if not selected:
        raise ClassifierError("no discriminative features")
    _, beta = _ols(train.X, y, selected)
    w = np.zeros(train.d)
    w[selected] = beta[1:]
    if not np.any(w):
        raise ClassifierError("no discriminative features")
    meta = {"method": "swlda", "p_ins": p_ins, "p_rem": p_rem, "max_features": max_features,
            "selected": np.asarray(selected, dtype=np.int64)}
    return LinearModel(w, beta[0], meta, support=np.asarray(selected))


class SWLDA(LinearDiscriminant):
    """Stepwise LDA.

    Parameters
    ----------
    p_ins : float, default=0.1
        Entry p-value threshold.
    p_rem : float, default=0.15
        Removal p-value threshold; must exceed ``p_ins``.
    max_features : int, default=60
        Maximum number of active features.
    """

    def __init__(self, p_ins=0.1, p_rem=0.15, max_features=60):
        self.p_ins = p_ins
        self.p_rem = p_rem
        self.max_features = max_features

    def _fit_model(self, train):
        return fit_swlda(train, self.p_ins, self.p_rem, self.max_features)
