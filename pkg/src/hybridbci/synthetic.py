"""Synthetic sessions with known ground truth.

Each fixation evokes a class-dependent ERP (a parietal positivity around
300 ms and an occipito-temporal negativity around 170 ms; non-target
responses are the target shapes scaled by ``contrast``). Responses are
stamped into a continuous 500 Hz recording on top of colored background
noise, and two EOG channels leak into the scalp channels with known
coefficients. Dwell times are lognormal with class-dependent medians.

Consecutive fixation onsets are spaced by a fixed interval plus jitter, so
epoch windows never contain the response to the next fixation and the only
class information in the EEG comes from the ERP templates.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .preprocessing import ms_to_samples
from .session import (
    CLASSIFICATION_CHANNELS,
    EOG_CHANNELS,
    EegRecording,
    FixationEvent,
    IconLayout,
    Label,
    Session,
)

SCALP_CHANNELS = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6", "T7", "C3",
    "Cz", "C4", "T8", "CP5", "CP1", "CP2", "CP6", "P7", "P3", "Pz", "P4", "P8", "PO7",
    "PO3", "PO4", "PO8", "Oz",
)
CHANNEL_NAMES = SCALP_CHANNELS + EOG_CHANNELS

# relative weights of the late positivity and the early negativity
LATE_GAIN = {
    "Fz": 0.2, "Cz": 0.5, "Pz": 1.0, "Oz": 0.6, "P3": 0.8, "P4": 0.8, "PO7": 0.6, "PO8": 0.6,
    "CP1": 0.6, "CP2": 0.6, "PO3": 0.7, "PO4": 0.7, "P7": 0.3, "P8": 0.3,
}
EARLY_GAIN = {
    "PO7": 1.0, "PO8": 1.0, "Oz": 0.6, "P3": 0.3, "P4": 0.3, "P7": 0.7, "P8": 0.7,
    "PO3": 0.5, "PO4": 0.5,
}
# EOG leakage into the scalp, strongest frontally
HEOG_LEAK = {"Fp1": 0.3, "Fp2": -0.3, "F7": 0.25, "F8": -0.25, "F3": 0.1, "F4": -0.1,
             "T7": 0.1, "T8": -0.1}
VEOG_LEAK = {"Fp1": 0.5, "Fp2": 0.5, "F3": 0.2, "Fz": 0.2, "F4": 0.2, "F7": 0.15,
             "F8": 0.15, "FC1": 0.1, "FC2": 0.1, "Cz": 0.05}


class GenParamsError(ValueError):
    pass


@dataclass(frozen=True)
class GenParams:
    """Generator settings. Defaults are calibrated so the default session
    sits near the offline operating point of the reference study: dwell
    time alone about 0.85 accuracy, EEG alone about 0.78 with RLDA."""

    n_trials: int = 240
    seed: int = 0
    sample_rate_hz: float = 500.0
    erp_amplitude_uv: float = 5.0
    erp_latency_ms: float = 300.0
    erp_width_ms: float = 80.0
    early_component_amplitude_uv: float = -3.0
    early_component_latency_ms: float = 170.0
    early_component_width_ms: float = 40.0
    contrast: float = 0.2
    amplitude_jitter: float = 0.3
    latency_jitter_ms: float = 20.0
    late_gain: dict = field(default_factory=lambda: dict(LATE_GAIN))
    early_gain: dict = field(default_factory=lambda: dict(EARLY_GAIN))
    noise_sigma_uv: float = 5.0
    noise_model: str = "pink"
    noise_exponent: float = 1.0
    n_common_sources: int = 6
    common_source_fraction: float = 0.5
    target_duration_median_ms: float = 450.0
    nontarget_duration_median_ms: float = 250.0
    duration_sigma: float = 0.28
    min_duration_ms: float = 60.0
    nontarget_fixations_min: int = 1
    nontarget_fixations_extra_mean: float = 1.3
    target_fixations: int = 1
    fixation_interval_ms: float = 1000.0
    fixation_interval_jitter_ms: float = 200.0
    trial_lead_ms: float = 400.0
    fixation_scatter_px: float = 10.0
    eog_amplitude_uv: float = 40.0
    target_index: int = 12

    def __post_init__(self):
        for name in ("sample_rate_hz", "erp_width_ms", "early_component_width_ms",
                     "target_duration_median_ms", "nontarget_duration_median_ms",
                     "duration_sigma", "fixation_interval_ms", "trial_lead_ms",
                     "min_duration_ms"):
            if not getattr(self, name) > 0:
                raise GenParamsError(f"{name} must be > 0")
        for name in ("noise_sigma_uv", "amplitude_jitter", "latency_jitter_ms",
                     "eog_amplitude_uv", "fixation_interval_jitter_ms", "fixation_scatter_px",
                     "nontarget_fixations_extra_mean"):
            if getattr(self, name) < 0:
                raise GenParamsError(f"{name} must be >= 0")
        if self.n_trials < 20:
            raise GenParamsError("n_trials must be >= 20")
        if self.noise_model not in ("white", "pink"):
            raise GenParamsError(f"noise_model must be 'white' or 'pink', got {self.noise_model!r}")
        if self.erp_latency_ms + self.erp_width_ms > 800:
            raise GenParamsError("ERP latency + width must fit inside an 800 ms epoch")
        if self.fixation_interval_ms < 900:
            raise GenParamsError("fixation_interval_ms must leave room for an 800 ms epoch")
        if self.trial_lead_ms < 100:
            raise GenParamsError("trial_lead_ms must cover the 100 ms baseline")
        if not 0 <= self.common_source_fraction <= 1:
            raise GenParamsError("common_source_fraction must lie in [0, 1]")
        for gains in (self.late_gain, self.early_gain):
            unknown = set(gains) - set(SCALP_CHANNELS)
            if unknown:
                raise GenParamsError(f"gain profile names unknown channel(s) {sorted(unknown)}")

    def with_(self, **changes) -> "GenParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "GenParams":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise GenParamsError(f"unknown generator parameter(s): {', '.join(sorted(unknown))}")
        return cls(**raw)


def _gauss(t_ms, latency, width):
    return np.exp(-0.5 * ((t_ms - latency) / width) ** 2)


def _scalp_template(params: GenParams, label: Label, channels, n_samples,
                    latency_shift_ms=0.0, scale=1.0) -> np.ndarray:
    t = np.arange(n_samples) * 1000.0 / params.sample_rate_hz
    late = params.erp_amplitude_uv * _gauss(t, params.erp_latency_ms + latency_shift_ms,
                                            params.erp_width_ms)
    early = params.early_component_amplitude_uv * _gauss(
        t, params.early_component_latency_ms + latency_shift_ms, params.early_component_width_ms)
    g_late = np.array([params.late_gain.get(ch, 0.0) for ch in channels])[:, None]
    g_early = np.array([params.early_gain.get(ch, 0.0) for ch in channels])[:, None]
    wave = g_late * late + g_early * early
    factor = scale * (1.0 if label == Label.TARGET else params.contrast)
    return factor * wave


def erp_template(params: GenParams, label: Label, window_ms: float = 800.0) -> np.ndarray:
    """Noise-free response over the eight classification channels (raw rate)."""
    n = ms_to_samples(window_ms, params.sample_rate_hz)
    return _scalp_template(params, Label(label), CLASSIFICATION_CHANNELS, n)


def colored_noise(rng: np.random.Generator, n_channels: int, n_samples: int,
                  sample_rate_hz: float, exponent: float) -> np.ndarray:
    """Unit-RMS noise with power spectral density proportional to 1/f**exponent."""
    white = rng.standard_normal((n_channels, n_samples))
    if exponent == 0:
        return white
    spec = np.fft.rfft(white, axis=1)
    freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate_hz)
    shape = np.maximum(freqs, 0.1) ** (-exponent / 2)
    shape[0] = 0.0
    out = np.fft.irfft(spec * shape, n=n_samples, axis=1)
    out /= out.std(axis=1, keepdims=True)
    return out


def _draw_durations(rng, median, sigma, size, floor):
    d = rng.lognormal(np.log(median), sigma, size)
    return np.maximum(np.round(d), floor)


def generate_session(params: GenParams = GenParams()) -> Session:
    rng = np.random.default_rng(params.seed)
    fs = params.sample_rate_hz
    layout = IconLayout(target_index=params.target_index)
    centers = layout.icon_centers()
    distractors = [i for i in range(layout.n_icons) if i != layout.target_index]
    max_interval = params.fixation_interval_ms + params.fixation_interval_jitter_ms

    # timeline of fixations
    plan = []  # (trial, onset_sample, icon, duration_ms, x, y)
    t_ms = 0.0
    for trial in range(params.n_trials):
        t_ms += params.trial_lead_ms
        n_nt = params.nontarget_fixations_min + rng.poisson(params.nontarget_fixations_extra_mean)
        n_nt = min(n_nt, len(distractors))
        icons = list(rng.choice(distractors, n_nt, replace=False))
        icons += [layout.target_index] * params.target_fixations
        icons = [icons[i] for i in rng.permutation(len(icons))]
        for icon in icons:
            is_target = icon == layout.target_index
            median = (params.target_duration_median_ms if is_target
                      else params.nontarget_duration_median_ms)
            interval = params.fixation_interval_ms + rng.uniform(
                0, params.fixation_interval_jitter_ms)
            duration = _draw_durations(rng, median, params.duration_sigma, 1,
                                       params.min_duration_ms)[0]
            duration = min(duration, interval - 50.0)
            onset = ms_to_samples(t_ms, fs)
            jitter = np.clip(rng.normal(0, params.fixation_scatter_px, 2), -40, 40)
            x, y = np.round(centers[icon] + jitter).astype(int)
            plan.append((trial, onset, int(icon), float(duration), int(x), int(y)))
            t_ms = onset * 1000.0 / fs + interval
    n_samples = ms_to_samples(t_ms + max_interval, fs)

    scalp = list(SCALP_CHANNELS)
    n_scalp = len(scalp)
    if params.noise_model == "pink":
        exponent = params.noise_exponent
    else:
        exponent = 0.0
    own = colored_noise(rng, n_scalp, n_samples, fs, exponent)
    if params.n_common_sources > 0 and params.common_source_fraction > 0:
        sources = colored_noise(rng, params.n_common_sources, n_samples, fs, exponent)
        mixing = rng.normal(size=(n_scalp, params.n_common_sources))
        mixing /= np.linalg.norm(mixing, axis=1, keepdims=True)
        common = mixing @ sources
        a = np.sqrt(params.common_source_fraction)
        noise = a * common + np.sqrt(1 - params.common_source_fraction) * own
    else:
        noise = own
    data = params.noise_sigma_uv * noise
    del own, noise

    # evoked responses
    n_resp = ms_to_samples(800.0 + 4 * params.erp_width_ms, fs)
    for trial, onset, icon, duration, x, y in plan:
        label = Label.TARGET if icon == layout.target_index else Label.NONTARGET
        scale = max(0.0, 1.0 + params.amplitude_jitter * rng.standard_normal())
        shift = params.latency_jitter_ms * rng.standard_normal()
        wave = _scalp_template(params, label, scalp, n_resp, shift, scale)
        stop = min(onset + n_resp, n_samples)
        data[:, onset:stop] += wave[:, : stop - onset]

    # ocular channels: gaze-position steps plus slow drift, leaking into the scalp
    heog = np.zeros(n_samples)
    veog = np.zeros(n_samples)
    cx0, cy0 = layout.screen_w_px / 2, layout.screen_h_px / 2
    for k, (_, onset, _, _, x, y) in enumerate(plan):
        stop = plan[k + 1][1] if k + 1 < len(plan) else n_samples
        heog[onset:stop] = (x - cx0) / layout.spacing_px
        veog[onset:stop] = (y - cy0) / layout.spacing_px
    drift = colored_noise(rng, 2, n_samples, fs, 2.0)
    heog = params.eog_amplitude_uv * (0.5 * heog + 0.3 * drift[0])
    veog = params.eog_amplitude_uv * (0.5 * veog + 0.3 * drift[1])
    for name, coef in HEOG_LEAK.items():
        data[scalp.index(name)] += coef * heog
    for name, coef in VEOG_LEAK.items():
        data[scalp.index(name)] += coef * veog

    eeg = np.vstack([data, heog, veog]).astype(np.float32)
    onsets = np.array([(trial, onset, icon) for trial, onset, icon, *_ in plan], dtype=np.int64)
    fixations = [
        FixationEvent(onset * 1000.0 / fs, duration, x, y, trial)
        for trial, onset, icon, duration, x, y in plan
    ]
    recording = EegRecording(fs, CHANNEL_NAMES, eeg, onsets)
    metadata = {"generator": "hybridbci.synthetic", "seed": str(params.seed)}
    return Session(layout, recording, fixations, params.n_trials, metadata)
