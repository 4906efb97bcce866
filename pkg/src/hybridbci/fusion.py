"""Feature-level fusion of EEG epochs with dwell times, z-scoring, class
balancing and trial-ordered splitting."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .gaze import GazeFeature, clamp_duration
from .preprocessing import Epoch, n_decimated
from .session import Label

STD_FLOOR = 1e-12


class Modality(str, enum.Enum):
    EEG = "eeg"
    EYE = "eye"
    FUSION = "fusion"


class FusionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledSample:
    features: np.ndarray
    label: Label
    trial_index: int
    modality: Modality
    icon_index: int = -1


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Column-oriented collection of labeled samples.

    Rows keep acquisition order unless reshuffled by :func:`balance_classes`;
    ``onset`` (raw sample index of the fixation) allows restoring it.
    """

    X: np.ndarray
    y: np.ndarray
    trial_index: np.ndarray
    modality: Modality
    icon_index: Optional[np.ndarray] = None
    onset: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.y)
        object.__setattr__(self, "X", np.asarray(self.X, dtype=np.float64).reshape(n, -1))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int64))
        object.__setattr__(self, "trial_index", np.asarray(self.trial_index, dtype=np.int64))
        icons = np.full(n, -1) if self.icon_index is None else self.icon_index
        onset = np.arange(n) if self.onset is None else self.onset
        object.__setattr__(self, "icon_index", np.asarray(icons, dtype=np.int64))
        object.__setattr__(self, "onset", np.asarray(onset, dtype=np.int64))
        object.__setattr__(self, "modality", Modality(self.modality))

    def __len__(self):
        return len(self.y)

    def __iter__(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            yield LabeledSample(self.X[i], Label(int(self.y[i])), int(self.trial_index[i]),
                                self.modality, int(self.icon_index[i]))

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        return SampleSet(self.X[idx], self.y[idx], self.trial_index[idx], self.modality,
                         self.icon_index[idx], self.onset[idx])

    def with_features(self, X) -> "SampleSet":
        return SampleSet(X, self.y, self.trial_index, self.modality, self.icon_index, self.onset)

    def in_acquisition_order(self) -> "SampleSet":
        return self.subset(np.lexsort((self.onset, self.trial_index)))

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.y == 1)), int(np.sum(self.y == -1))

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample]) -> "SampleSet":
        if not samples:
            raise FusionError("empty sample list")
        modality = samples[0].modality
        return cls(np.vstack([s.features for s in samples]), [int(s.label) for s in samples],
                   [s.trial_index for s in samples], modality, [s.icon_index for s in samples])


def _as_set(samples) -> SampleSet:
    return samples if isinstance(samples, SampleSet) else SampleSet.from_samples(list(samples))


def eeg_features(epoch: Epoch) -> np.ndarray:
    return np.asarray(epoch.data, dtype=np.float64).ravel()


def fuse(epoch: Epoch, gaze: GazeFeature, threshold_ms: Optional[float] = None
         ) -> LabeledSample:
    """Concatenate flattened EEG (channel-major) with the dwell time appended last."""
    if (epoch.trial_index, epoch.icon_index) != (gaze.trial_index, gaze.icon_index):
        raise FusionError(
            f"pairing mismatch: epoch {epoch.onset} vs gaze "
            f"{(gaze.trial_index, gaze.icon_index)}"
        )
    if epoch.label != gaze.label:
        raise FusionError(
            f"label mismatch for trial {epoch.trial_index}, icon {epoch.icon_index}: "
            f"epoch {epoch.label.name} vs gaze {gaze.label.name}"
        )
    if threshold_ms is not None:
        expected = n_decimated(threshold_ms, epoch.rate_hz)
        if epoch.n_times != expected:
            raise FusionError(
                f"dimension mismatch: {epoch.n_times} samples per channel, expected "
                f"{expected} for a {threshold_ms} ms threshold"
            )
    feats = np.append(eeg_features(epoch), gaze.duration_ms)
    return LabeledSample(feats, epoch.label, epoch.trial_index, Modality.FUSION,
                         epoch.icon_index)


def build_samples(epochs: Iterable[Epoch], gaze: Mapping[tuple[int, int], GazeFeature],
                  modality: Modality | str, threshold_ms: float,
                  onsets: Optional[Mapping[tuple[int, int], int]] = None) -> SampleSet:
    """Samples for one modality; dwell times are clamped at ``threshold_ms``.

    Epochs without a matching gaze feature are dropped.
    """
    modality = Modality(modality)
    rows, ys, trials, icons, order = [], [], [], [], []
    for ep in epochs:
        g = gaze.get((ep.trial_index, ep.icon_index))
        if g is None:
            continue
        g = GazeFeature(g.trial_index, g.icon_index, clamp_duration(g.duration_ms, threshold_ms),
                        g.label)
        if modality is Modality.FUSION:
            feats = fuse(ep, g, threshold_ms).features
        elif modality is Modality.EEG:
            feats = eeg_features(ep)
        else:
            if ep.label != g.label:
                raise FusionError(f"label mismatch for trial {ep.trial_index}")
            feats = np.array([g.duration_ms])
        rows.append(feats)
        ys.append(int(ep.label))
        trials.append(ep.trial_index)
        icons.append(ep.icon_index)
        order.append(onsets.get((ep.trial_index, ep.icon_index), len(order)) if onsets
                     else len(order))
    if not rows:
        raise FusionError("no epoch could be paired with a gaze feature")
    return SampleSet(np.vstack(rows), ys, trials, modality, icons, order)


class Normalizer(TransformerMixin, BaseEstimator):
    """Per-dimension z-scoring with the standard deviation floored at 1e-12."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise FusionError("empty training set")
        self.mean_ = X.mean(axis=0)
        self.scale_ = np.maximum(X.std(axis=0), STD_FLOOR)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=False)
        return (X - self.mean_) / self.scale_


def fit_normalizer(train) -> Normalizer:
    train = _as_set(train) if not isinstance(train, np.ndarray) else train
    X = train.X if isinstance(train, SampleSet) else train
    if len(X) == 0:
        raise FusionError("empty training set")
    return Normalizer().fit(X)


def apply_normalizer(norm: Normalizer, samples):
    if isinstance(samples, np.ndarray):
        return norm.transform(samples)
    if isinstance(samples, SampleSet):
        return samples.with_features(norm.transform(samples.X))
    out = _as_set(samples)
    return list(out.with_features(norm.transform(out.X)))


def balance_indices(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == -1)
    if len(pos) == 0 or len(neg) == 0:
        raise FusionError("single-class input: cannot balance")
    m = min(len(pos), len(neg))
    keep = np.concatenate([
        pos if len(pos) == m else rng.choice(pos, m, replace=False),
        neg if len(neg) == m else rng.choice(neg, m, replace=False),
    ])
    return keep[rng.permutation(len(keep))]


def balance_classes(samples, seed: int):
    """Subsample the majority class to the minority count, then shuffle (seeded)."""
    as_list = not isinstance(samples, SampleSet)
    s = _as_set(samples)
    out = s.subset(balance_indices(s.y, np.random.default_rng(seed)))
    return list(out) if as_list else out


def split_by_trials(samples, n_train_trials: int):
    """Trial-ordered split: trials ``< n_train_trials`` train, the rest test."""
    as_list = not isinstance(samples, SampleSet)
    s = _as_set(samples)
    max_trial = int(s.trial_index.max())
    if not 1 <= n_train_trials < max_trial:
        raise FusionError(
            f"n_train_trials={n_train_trials} must lie in [1, {max_trial}) so both sides "
            "are non-empty"
        )
    is_train = s.trial_index < n_train_trials
    train, test = s.subset(np.flatnonzero(is_train)), s.subset(np.flatnonzero(~is_train))
    return (list(train), list(test)) if as_list else (train, test)
