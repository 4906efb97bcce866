import numpy as np
import pytest

from hybridbci.pipeline import SessionFeatures
from hybridbci.session import (
    CLASSIFICATION_CHANNELS,
    EOG_CHANNELS,
    EegRecording,
    FixationEvent,
    IconLayout,
    Session,
)
from hybridbci.synthetic import GenParams, generate_session


@pytest.fixture(scope="session")
def default_session():
    return generate_session(GenParams())


@pytest.fixture(scope="session")
def default_features(default_session):
    return SessionFeatures(default_session)


def small_session(n_trials=20, n_samples=None, rate=500.0, seed=0, metadata=None):
    """Hand-built session: one target and one distractor fixation per trial."""
    rng = np.random.default_rng(seed)
    step = 100  # samples between consecutive fixation onsets
    n_samples = n_samples or 2 * n_trials * step + 600
    names = CLASSIFICATION_CHANNELS + ("T7",) + EOG_CHANNELS
    data = rng.standard_normal((len(names), n_samples)).astype(np.float32)
    layout = IconLayout(target_index=12)
    onsets, fixations = [], []
    for t in range(n_trials):
        for k, icon in enumerate((12, 3)):
            s = 100 + (2 * t + k) * step
            onsets.append((t, s, icon))
            cx, cy = layout.icon_center(icon)
            fixations.append(FixationEvent(s * 1000.0 / rate, 100.0 + 80 * (icon == 12),
                                           int(cx), int(cy), t))
    rec = EegRecording(rate, names, data, np.array(onsets))
    return Session(layout, rec, fixations, n_trials, metadata or {"kind": "small"})


def gaussian_classes(n, d, shift, seed=0, cov_scale=1.0):
    """Balanced two-class Gaussian data; Target mean shifted along every axis."""
    rng = np.random.default_rng(seed)
    y = np.repeat([1, -1], n // 2)
    X = cov_scale * rng.standard_normal((n, d))
    X[y == 1] += shift
    return X, y
