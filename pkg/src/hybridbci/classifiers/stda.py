"""Spatial-temporal discriminant analysis.

Each sample is viewed as a channels x timepoints matrix ``X``. Two
orthonormal projections, spatial ``Ws`` (C x ds) and temporal ``Wt``
(T x dt), are learned by alternating maximization of the Fisher trace ratio

    J(Ws, Wt) = sum_k n_k ||Ws' (M_k - M) Wt||^2 / sum_i ||Ws' (X_i - M_ci) Wt||^2

Fixing one projection turns J into a trace-ratio problem in the other, which
is solved exactly by the iteration ``W <- top eigenvectors of (Sb - J Sw)``.
Every half step therefore cannot decrease J. A final LDA on the ds*dt
projected features is folded back into one weight vector over the original
features.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from ._base import ClassifierError, LinearDiscriminant, LinearModel, TrainingSet
from .lda import fit_lda, fit_sklda


def _scatters(Mdiff, counts, Dev, P, side):
    """Between/within scatter for the free projection on ``side``.

    ``P`` is the fixed projection's outer product (T x T for the spatial
    side, C x C for the temporal side).
    """
    if side == "spatial":
        Sb = sum(n_k * Md @ P @ Md.T for Md, n_k in zip(Mdiff, counts))
        Sw = np.einsum("ict,ts,ids->cd", Dev, P, Dev, optimize=True)
    else:
        Sb = sum(n_k * Md.T @ P @ Md for Md, n_k in zip(Mdiff, counts))
        Sw = np.einsum("ict,cd,ids->ts", Dev, P, Dev, optimize=True)
    return Sb, Sw


def _trace_ratio(Sb, Sw, W):
    return np.trace(W.T @ Sb @ W) / np.trace(W.T @ Sw @ W)


def _solve_trace_ratio(Sb, Sw, p, W0=None, tol=1e-12, max_iter=100):
    """Orthonormal ``W`` (d x p) maximizing tr(W'SbW)/tr(W'SwW)."""
    lam = 0.0 if W0 is None else _trace_ratio(Sb, Sw, W0)
    W = W0
    for _ in range(max_iter):
        vals, vecs = linalg.eigh(Sb - lam * Sw)
        W_new = vecs[:, ::-1][:, :p]
        lam_new = _trace_ratio(Sb, Sw, W_new)
        if W is not None and lam_new < lam:
            # numerical noise at the optimum; keep the incumbent
            break
        W = W_new
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0):
            lam = lam_new
            break
        lam = lam_new
    return W, lam


def _subspace_change(A, B):
    return np.linalg.norm(A @ A.T - B @ B.T, ord=2)


def fit_stda(train: TrainingSet, ds: int = 2, dt: int = 2, tol: float = 1e-4,
             max_iter: int = 20, gamma_fallback: float = 0.1) -> LinearModel:
    if train.d_layout is None:
        raise ClassifierError("STDA needs the (channels, timepoints) layout of the features")
    C, T = train.d_layout
    if C * T + train.n_extra != train.d:
        raise ClassifierError(f"C*T = {C * T} does not match d = {train.d - train.n_extra}")
    if not (1 <= ds <= C and 1 <= dt <= T):
        raise ClassifierError(f"need 1 <= ds <= {C} and 1 <= dt <= {T}, got ds={ds}, dt={dt}")
    n_eeg = C * T
    Xm = train.X[:, :n_eeg].reshape(train.n, C, T)
    extra = train.X[:, n_eeg:]
    pos = train.y == 1
    M = Xm.mean(axis=0)
    M_pos, M_neg = Xm[pos].mean(axis=0), Xm[~pos].mean(axis=0)
    Dev = Xm - np.where(pos[:, None, None], M_pos, M_neg)
    Mdiff = (M_pos - M, M_neg - M)
    counts = (int(pos.sum()), int((~pos).sum()))
    if not np.any(Dev) and not np.any(Mdiff[0]):
        raise ClassifierError("degenerate scatter: all samples are identical")

    def ridge(S):
        scale = np.trace(S) / S.shape[0]
        if scale <= 0:
            raise ClassifierError("degenerate scatter: zero within-class variance")
        return S + 1e-10 * scale * np.eye(S.shape[0])

    # start: temporal projection fitted with the identity spatial projection
    Sb, Sw = _scatters(Mdiff, counts, Dev, np.eye(C), "temporal")
    Wt, _ = _solve_trace_ratio(Sb, ridge(Sw), dt)
    Ws = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        Sb, Sw = _scatters(Mdiff, counts, Dev, Wt @ Wt.T, "spatial")
        Ws_new, _ = _solve_trace_ratio(Sb, ridge(Sw), ds, Ws)
        Sb, Sw = _scatters(Mdiff, counts, Dev, Ws_new @ Ws_new.T, "temporal")
        Wt_new, _ = _solve_trace_ratio(Sb, ridge(Sw), dt, Wt)
        history.append(_trace_ratio(Sb, Sw, Wt_new))
        done = Ws is not None and max(_subspace_change(Ws, Ws_new),
                                      _subspace_change(Wt, Wt_new)) < tol
        Ws, Wt = Ws_new, Wt_new
        if done:
            break

    feats = np.einsum("ca,ict,tb->iab", Ws, Xm, Wt).reshape(train.n, ds * dt)
    inner_train = TrainingSet(np.column_stack([feats, extra]), train.y, train.trial_ids)
    try:
        inner = fit_lda(inner_train)
        inner_method = "lda"
    except ClassifierError:
        inner = fit_sklda(inner_train, gamma_fallback)
        inner_method = "sklda"
    V = inner.w[: ds * dt].reshape(ds, dt)
    w = np.concatenate([(Ws @ V @ Wt.T).ravel(), inner.w[ds * dt :]])
    meta = {"method": "stda", "ds": ds, "dt": dt, "spatial": Ws, "temporal": Wt,
            "fisher_history": np.asarray(history), "n_iter": n_iter, "inner": inner_method,
            "inner_w": inner.w}
    return LinearModel(w, inner.b, meta)


class STDA(LinearDiscriminant):
    """Spatial-temporal discriminant analysis.

    Parameters
    ----------
    n_channels : int, default=8
        Rows of the EEG block; timepoints are inferred from the feature count.
    n_extra : int, default=0
        Trailing non-EEG features (for example a fused dwell time) passed to
        the final LDA without projection.
    ds, dt : int, default=2
        Spatial and temporal projection dimensions.
    tol : float, default=1e-4
    max_iter : int, default=20
    """

    def __init__(self, n_channels=8, n_extra=0, ds=2, dt=2, tol=1e-4, max_iter=20):
        self.n_channels = n_channels
        self.n_extra = n_extra
        self.ds = ds
        self.dt = dt
        self.tol = tol
        self.max_iter = max_iter

    def _layout_kwargs(self, d):
        n_eeg = d - self.n_extra
        if n_eeg <= 0 or n_eeg % self.n_channels:
            raise ClassifierError(
                f"{d} features cannot be split into {self.n_channels} channels "
                f"plus {self.n_extra} extra"
            )
        return {"d_layout": (self.n_channels, n_eeg // self.n_channels), "n_extra": self.n_extra}

    def _fit_model(self, train):
        return fit_stda(train, self.ds, self.dt, self.tol, self.max_iter)
