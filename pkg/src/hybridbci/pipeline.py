"""From a session to labeled feature sets, with per-threshold caching."""

from __future__ import annotations

from functools import cached_property

from .fusion import Modality, SampleSet, build_samples
from .gaze import session_gaze_features
from .preprocessing import EpochList, PreprocessingParams, clean_recording, epochs_from_clean
from .session import Session


class SessionFeatures:
    """Preprocess a session once and serve sample sets per modality/threshold.

    The continuous-data stage (filter, re-reference, EOG regression) runs on
    first use; epochs are cut and decimated once per threshold.
    """

    def __init__(self, session: Session, params: PreprocessingParams = PreprocessingParams()):
        self.session = session
        self.params = params
        self._epochs: dict[float, EpochList] = {}
        self._samples: dict[tuple[Modality, float], SampleSet] = {}

    @cached_property
    def clean(self):
        return clean_recording(self.session.eeg, self.params)

    @cached_property
    def gaze(self):
        return session_gaze_features(self.session)

    @cached_property
    def onsets(self):
        return {(int(t), int(i)): int(s) for t, s, i in self.session.eeg.stimulus_onsets}

    def epochs(self, window_ms: float) -> EpochList:
        window_ms = float(window_ms)
        if window_ms not in self._epochs:
            self._epochs[window_ms] = epochs_from_clean(
                self.clean, window_ms, self.session.layout.target_index, self.params)
        return self._epochs[window_ms]

    def samples(self, modality, threshold_ms: float = 500.0) -> SampleSet:
        key = (Modality(modality), float(threshold_ms))
        if key not in self._samples:
            self._samples[key] = build_samples(self.epochs(threshold_ms), self.gaze, key[0],
                                               key[1], self.onsets)
        return self._samples[key]

    def skipped(self, window_ms: float) -> int:
        return self.epochs(window_ms).n_skipped
