"""EEG preprocessing: band-pass filtering, re-referencing, EOG regression,
epoching and decimation.

Everything here is a pure function of its inputs. The offline pipeline and
the replay simulator share the same code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import signal

from .session import CLASSIFICATION_CHANNELS, EOG_CHANNELS, EegRecording, Label


class PreprocessingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FilterKernel:
    taps: np.ndarray
    sample_rate_hz: float
    band: tuple[float, float]

    @property
    def n_taps(self) -> int:
        return len(self.taps)

    @property
    def group_delay(self) -> int:
        return (len(self.taps) - 1) // 2

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response at ``freqs_hz``."""
        _, h = signal.freqz(self.taps, worN=np.atleast_1d(freqs_hz), fs=self.sample_rate_hz)
        return h


@dataclass(frozen=True, eq=False)
class Epoch:
    """One fixation-locked EEG segment over the classification channels.

    ``baseline`` keeps the corrected pre-stimulus samples while the epoch is
    still at the raw rate; it is dropped by :func:`decimate`.
    """

    channels: tuple[str, ...]
    data: np.ndarray
    rate_hz: float
    window_ms: float
    trial_index: int
    icon_index: int
    label: Label
    baseline: Optional[np.ndarray] = None

    @property
    def onset(self) -> tuple[int, int]:
        return self.trial_index, self.icon_index

    @property
    def n_times(self) -> int:
        return self.data.shape[1]


class EpochList(list):
    """List of epochs that also remembers which onsets had to be skipped."""

    def __init__(self, epochs=(), skipped=()):
        super().__init__(epochs)
        self.skipped = list(skipped)

    @property
    def n_skipped(self) -> int:
        return len(self.skipped)


def _windowed_sinc_lowpass(cutoff_hz, sample_rate_hz, n_taps):
    m = np.arange(n_taps) - (n_taps - 1) / 2
    fc = cutoff_hz / sample_rate_hz
    h = 2 * fc * np.sinc(2 * fc * m) * np.hamming(n_taps)
    # unit DC gain, so the band-pass difference has an exact zero at DC
    return h / h.sum()


def design_bandpass_fir(low_hz, high_hz, sample_rate_hz, n_taps=501) -> FilterKernel:
    """Hamming-windowed sinc band-pass kernel.

    Built as the difference of two unit-DC low-pass kernels, which gives a
    linear-phase filter with zero DC gain and unit gain in the passband.
    """
    if not 0 < low_hz < high_hz < sample_rate_hz / 2:
        raise PreprocessingError(
            f"invalid band edges ({low_hz}, {high_hz}) Hz for a {sample_rate_hz} Hz signal"
        )
    if n_taps % 2 == 0:
        raise PreprocessingError(f"tap count must be odd, got {n_taps}")
    if n_taps < 31:
        raise PreprocessingError(f"tap count must be >= 31, got {n_taps}")
    taps = _windowed_sinc_lowpass(high_hz, sample_rate_hz, n_taps) - _windowed_sinc_lowpass(
        low_hz, sample_rate_hz, n_taps
    )
    return FilterKernel(taps=taps, sample_rate_hz=float(sample_rate_hz),
                        band=(float(low_hz), float(high_hz)))


def filter_array(data: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Convolve each row with ``taps``, output aligned to the input timeline."""
    data = np.asarray(data, dtype=np.float64)
    if data.shape[-1] == 0:
        return data.copy()
    return signal.oaconvolve(data, taps[np.newaxis, :] if data.ndim == 2 else taps,
                             mode="same", axes=-1)


def apply_filter(recording: EegRecording, kernel: FilterKernel) -> EegRecording:
    if not math.isclose(recording.sample_rate_hz, kernel.sample_rate_hz):
        raise PreprocessingError(
            f"rate mismatch: recording at {recording.sample_rate_hz} Hz, kernel designed "
            f"for {kernel.sample_rate_hz} Hz"
        )
    out = filter_array(recording.data, kernel.taps)
    n = recording.n_samples
    edge = min(kernel.n_taps, n)
    notes = dict(recording.annotations)
    notes["filter_band_hz"] = list(kernel.band)
    notes["unreliable_samples"] = [[0, edge], [max(n - edge, 0), n]]
    return recording.replace(data=out, annotations=notes)


def rereference_average(recording: EegRecording) -> EegRecording:
    """Subtract the instantaneous mean of the scalp channels (EOG excluded)."""
    scalp = recording.scalp_mask()
    if scalp.sum() < 2:
        raise PreprocessingError("average reference needs at least two scalp channels")
    data = np.array(recording.data, dtype=np.float64)
    data[scalp] -= data[scalp].mean(axis=0, keepdims=True)
    return recording.replace(data=data)


def remove_eog(recording: EegRecording) -> EegRecording:
    """Regress HEOG/VEOG out of every scalp channel by least squares.

    The fitted coefficients (scalp channels x 2) are stored in the
    ``eog_coefficients`` annotation.
    """
    names = recording.channel_names
    missing = [ch for ch in EOG_CHANNELS if ch not in names]
    if missing:
        raise PreprocessingError(f"EOG channel(s) absent: {', '.join(missing)}")
    eog = np.array([recording.data[names.index(ch)] for ch in EOG_CHANNELS], dtype=np.float64)
    eog -= eog.mean(axis=1, keepdims=True)
    gram = eog @ eog.T
    scale = np.trace(gram)
    if scale <= 0 or np.linalg.eigvalsh(gram)[0] <= 1e-12 * scale:
        raise PreprocessingError("singular regressor: EOG channels are constant or collinear")
    scalp = recording.scalp_mask()
    data = np.array(recording.data, dtype=np.float64)
    x = data[scalp]
    coef = np.linalg.solve(gram, eog @ (x - x.mean(axis=1, keepdims=True)).T).T
    data[scalp] = x - coef @ eog
    notes = dict(recording.annotations)
    notes["eog_coefficients"] = coef.tolist()
    return recording.replace(data=data, annotations=notes)


def ms_to_samples(ms: float, rate_hz: float) -> int:
    return int(round(ms * rate_hz / 1000.0))


def extract_epochs(
    recording: EegRecording,
    window_ms: float = 500.0,
    baseline_ms: float = 100.0,
    target_index: int = 0,
    channels=CLASSIFICATION_CHANNELS,
) -> EpochList:
    """Cut one baseline-corrected epoch per stimulus onset.

    Onsets without ``baseline_ms`` of data before them or ``window_ms`` after
    them are skipped and listed in ``EpochList.skipped``.
    """
    if not 300 <= window_ms <= 800:
        raise PreprocessingError(f"window_ms must lie in [300, 800], got {window_ms}")
    if baseline_ms <= 0:
        raise PreprocessingError("baseline_ms must be positive")
    fs = recording.sample_rate_hz
    n_win = ms_to_samples(window_ms, fs)
    n_base = ms_to_samples(baseline_ms, fs)
    rows = [recording.channel_index(ch) for ch in channels]
    block = np.asarray(recording.data[rows], dtype=np.float64)
    epochs, skipped = [], []
    for trial, onset, icon in recording.stimulus_onsets:
        if onset - n_base < 0 or onset + n_win > recording.n_samples:
            skipped.append((int(trial), int(onset), int(icon)))
            continue
        base = block[:, onset - n_base : onset]
        mean = base.mean(axis=1, keepdims=True)
        epochs.append(
            Epoch(
                channels=tuple(channels),
                data=block[:, onset : onset + n_win] - mean,
                rate_hz=fs,
                window_ms=float(window_ms),
                trial_index=int(trial),
                icon_index=int(icon),
                label=Label.TARGET if icon == target_index else Label.NONTARGET,
                baseline=base - mean,
            )
        )
    return EpochList(epochs, skipped)


def n_decimated(window_ms: float, target_rate_hz: float) -> int:
    return int(math.floor(window_ms * target_rate_hz / 1000.0 + 1e-9))


def decimate(epoch: Epoch, target_rate_hz: float = 32.0, n_taps: int = 101) -> Epoch:
    """Low-pass at 0.4 x ``target_rate_hz`` and resample at the target rate.

    Samples are taken at ``k / target_rate_hz`` seconds after onset, linearly
    interpolated between raw samples; ``floor(window * rate)`` samples are kept.
    """
    if target_rate_hz >= epoch.rate_hz:
        raise PreprocessingError(
            f"target rate {target_rate_hz} Hz must be below the source rate {epoch.rate_hz} Hz"
        )
    pre = epoch.baseline if epoch.baseline is not None else np.empty((epoch.data.shape[0], 0))
    series = np.concatenate([pre, epoch.data], axis=1)
    half = (n_taps - 1) // 2
    taps = _windowed_sinc_lowpass(0.4 * target_rate_hz, epoch.rate_hz, n_taps)
    padded = np.pad(series, ((0, 0), (half, half)), mode="reflect" if series.shape[1] > half
                    else "edge")
    smooth = signal.oaconvolve(padded, taps[np.newaxis, :], mode="valid", axes=1)
    smooth = smooth[:, pre.shape[1]:]
    n_out = n_decimated(epoch.window_ms, target_rate_hz)
    positions = np.arange(n_out) * epoch.rate_hz / target_rate_hz
    grid = np.arange(smooth.shape[1])
    data = np.vstack([np.interp(positions, grid, row) for row in smooth])
    return replace(epoch, data=data, rate_hz=float(target_rate_hz), baseline=None)


@dataclass(frozen=True)
class PreprocessingParams:
    low_hz: float = 1.0
    high_hz: float = 40.0
    n_taps: int = 501
    baseline_ms: float = 100.0
    target_rate_hz: float = 32.0
    eog_regression: bool = True


def clean_recording(recording: EegRecording, params: PreprocessingParams = PreprocessingParams()
                    ) -> EegRecording:
    """Continuous-data stage: band-pass, average reference, EOG regression."""
    kernel = design_bandpass_fir(params.low_hz, params.high_hz, recording.sample_rate_hz,
                                 params.n_taps)
    out = rereference_average(apply_filter(recording, kernel))
    if params.eog_regression:
        out = remove_eog(out)
    return out


def epochs_from_clean(clean: EegRecording, window_ms: float, target_index: int,
                      params: PreprocessingParams = PreprocessingParams()) -> EpochList:
    """Epoch a cleaned recording and decimate every epoch."""
    raw = extract_epochs(clean, window_ms, params.baseline_ms, target_index)
    return EpochList((decimate(ep, params.target_rate_hz) for ep in raw), raw.skipped)
