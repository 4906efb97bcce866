"""Shared pieces of the discriminant classifiers: training-set validation,
the fitted linear model, and the scikit-learn estimator base class."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class ClassifierError(ValueError):
    """Raised when a discriminant fit cannot be carried out."""


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Feature matrix with labels in {+1 (Target), -1 (NonTarget)}.

    ``d_layout`` is the (channels, timepoints) shape of the leading EEG block
    for matrix-shaped methods; ``n_extra`` trailing features (for example a
    fused dwell time) sit after that block.
    """

    X: np.ndarray
    y: np.ndarray
    trial_ids: Optional[np.ndarray] = None
    d_layout: Optional[tuple[int, int]] = None
    n_extra: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim != 2:
            raise ClassifierError("X must be an n x d matrix")
        if y.shape != (X.shape[0],):
            raise ClassifierError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if not np.isin(y, (-1, 1)).all():
            raise ClassifierError("labels must be +1 (Target) or -1 (NonTarget)")
        if X.shape[0] < 4:
            raise ClassifierError(f"need at least 4 samples, got {X.shape[0]}")
        if not ((y == 1).any() and (y == -1).any()):
            raise ClassifierError("single-class input: both Target and NonTarget are required")
        if not np.isfinite(X).all():
            raise ClassifierError("non-finite values in X")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y.astype(np.int64))
        if self.trial_ids is None:
            object.__setattr__(self, "trial_ids", np.arange(X.shape[0]))
        if self.d_layout is not None:
            c, t = self.d_layout
            if c * t + self.n_extra != X.shape[1]:
                raise ClassifierError(
                    f"layout {c}x{t} (+{self.n_extra} extra) does not match d={X.shape[1]}"
                )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def class_means(self) -> tuple[np.ndarray, np.ndarray]:
        return self.X[self.y == 1].mean(axis=0), self.X[self.y == -1].mean(axis=0)


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Weight vector and bias; ``score(x) = w . x + b``, Target iff score > 0.

    ``support`` optionally lists the only non-zero weights (informational;
    a dense dot product over 129 features is cheaper than gathering a subset).
    """

    w: np.ndarray
    b: float
    meta: Mapping[str, Any] = field(default_factory=dict)
    support: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).ravel()
        if not np.isfinite(w).all() or not np.isfinite(self.b):
            raise ClassifierError("model weights must be finite")
        if not np.any(w):
            raise ClassifierError("degenerate model: all weights are zero")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))
        if self.support is not None:
            support = np.asarray(self.support, dtype=np.intp)
            object.__setattr__(self, "support", support)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    def score(self, x) -> np.ndarray | float:
        """Score one vector (returns a float) or a batch of rows."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise ClassifierError(f"dimension mismatch: model has d={self.d}, got {x.shape[-1]}")
        if not np.isfinite(x).all():
            raise ClassifierError("non-finite input")
        s = x @ self.w + self.b
        return float(s) if x.ndim == 1 else s

    def decide(self, x):
        return np.where(np.asarray(self.score(x)) > 0, 1, -1)


def score(model: LinearModel, x):
    return model.score(x)


MODEL_MAGIC = b"HBCIMODL"
MODEL_VERSION = 1


def _to_jsonable(value):
    if isinstance(value, np.ndarray):
        return {"__ndarray__": value.tolist(), "dtype": str(value.dtype)}
    if isinstance(value, Mapping):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _from_jsonable(value):
    if isinstance(value, dict):
        if "__ndarray__" in value:
            return np.asarray(value["__ndarray__"], dtype=value["dtype"])
        return {k: _from_jsonable(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_from_jsonable(v) for v in value]
    return value


def save_model(model: LinearModel, path) -> None:
    """Write a model as header JSON (bias, meta) plus a float64 weight block."""
    header = {
        "version": MODEL_VERSION,
        "d": model.d,
        "b": model.b,
        "meta": _to_jsonable(dict(model.meta)),
        "support": None if model.support is None else model.support.tolist(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(model.w, dtype="<f8").tobytes())


def load_model(path) -> LinearModel:
    raw = Path(path).read_bytes()
    if not raw.startswith(MODEL_MAGIC):
        raise ClassifierError(f"{path}: not a model file")
    version, n = struct.unpack_from("<II", raw, len(MODEL_MAGIC))
    if version != MODEL_VERSION:
        raise ClassifierError(f"{path}: unsupported model version {version}")
    start = len(MODEL_MAGIC) + 8
    header = json.loads(raw[start : start + n].decode("utf-8"))
    w = np.frombuffer(raw, dtype="<f8", count=header["d"], offset=start + n).copy()
    return LinearModel(w=w, b=header["b"], meta=_from_jsonable(header["meta"]),
                       support=header["support"])


class LinearDiscriminant(ClassifierMixin, BaseEstimator):
    """Base class for the binary linear discriminants.

    Subclasses implement ``_fit_model(train) -> LinearModel``. Labels may be
    any two values; the larger one (``classes_[1]``) is the Target class.
    """

    def _training_set(self, X, y) -> TrainingSet:
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ClassifierError(
                f"binary problem required, got {len(self.classes_)} class(es)"
            )
        signed = np.where(y == self.classes_[1], 1, -1)
        return TrainingSet(X, signed, **self._layout_kwargs(X.shape[1]))

    def _layout_kwargs(self, d: int) -> dict:
        return {}

    def fit(self, X, y):
        self.model_ = self._fit_model(self._training_set(X, y))
        self.coef_ = self.model_.w[np.newaxis, :]
        self.intercept_ = np.array([self.model_.b])
        self.n_features_in_ = self.model_.d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=False)
        return self.model_.score(X)

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]

    def _fit_model(self, train: TrainingSet) -> LinearModel:  # pragma: no cover
        raise NotImplementedError
