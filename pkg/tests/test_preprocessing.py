import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridbci.preprocessing import (
    Epoch,
    PreprocessingError,
    apply_filter,
    decimate,
    design_bandpass_fir,
    extract_epochs,
    filter_array,
    n_decimated,
    rereference_average,
    remove_eog,
)
from hybridbci.session import CLASSIFICATION_CHANNELS, EOG_CHANNELS, EegRecording, Label

FS = 500.0
NAMES = CLASSIFICATION_CHANNELS + EOG_CHANNELS


def recording(data, onsets=(), names=NAMES):
    return EegRecording(FS, names, np.asarray(data), np.asarray(onsets).reshape(-1, 3))


def sine(freq, seconds=20.0, fs=FS):
    t = np.arange(int(seconds * fs)) / fs
    return np.sin(2 * np.pi * freq * t)


def rms_gain(kernel, freq):
    """Gain by filtering a pure sine and comparing RMS away from the edges."""
    x = sine(freq, seconds=60.0 if freq < 1 else 20.0)
    y = filter_array(x, kernel.taps)
    edge = kernel.n_taps
    return np.sqrt(np.mean(y[edge:-edge] ** 2) / np.mean(x[edge:-edge] ** 2))


@pytest.fixture(scope="module")
def kernel():
    return design_bandpass_fir(1, 40, FS, 501)


def test_kernel_shape(kernel):
    assert kernel.n_taps == 501
    assert kernel.group_delay == 250
    np.testing.assert_allclose(kernel.taps, kernel.taps[::-1], atol=0)


def test_passband_and_stopbands_by_sine_rms(kernel):
    assert abs(rms_gain(kernel, 10.0) - 1) <= 0.05
    assert 20 * np.log10(rms_gain(kernel, 0.2)) <= -20
    assert 20 * np.log10(rms_gain(kernel, 60.0)) <= -20


def test_dc_gain_below_minus_20_db(kernel):
    assert abs(kernel.taps.sum()) < 10 ** (-20 / 20)


def test_frequency_response_agrees_with_sine_oracle(kernel):
    for f in (5.0, 10.0, 20.0, 60.0):
        assert abs(abs(kernel.response(f)[0]) - rms_gain(kernel, f)) < 0.01


@pytest.mark.parametrize("low, high, taps", [(40, 1, 501), (1, 40, 500), (1, 300, 501), (1, 40, 21)])
def test_design_rejects_bad_arguments(low, high, taps):
    with pytest.raises(PreprocessingError):
        design_bandpass_fir(low, high, FS, taps)


def test_apply_filter_zero_and_impulse(kernel):
    n = 3000
    zero = recording(np.zeros((len(NAMES), n)))
    assert not apply_filter(zero, kernel).data.any()
    data = np.zeros((len(NAMES), n))
    data[:, 1500] = 1.0
    out = apply_filter(recording(data), kernel).data
    np.testing.assert_allclose(out[0, 1250:1751], kernel.taps, atol=1e-12)
    assert abs(out[0, :1250]).max() < 1e-12 and abs(out[0, 1751:]).max() < 1e-12


def test_apply_filter_marks_edges_and_checks_rate(kernel):
    out = apply_filter(recording(np.zeros((len(NAMES), 2000))), kernel)
    assert out.annotations["unreliable_samples"] == [[0, 501], [1499, 2000]]
    wrong = EegRecording(250.0, NAMES, np.zeros((len(NAMES), 100)), np.zeros((0, 3)))
    with pytest.raises(PreprocessingError, match="rate mismatch"):
        apply_filter(wrong, kernel)


def test_two_sine_decomposition(kernel):
    x10, x01 = sine(10.0), sine(0.1)
    data = np.tile(x10 + x01, (len(NAMES), 1))
    out = apply_filter(recording(data), kernel).data[0]
    mid = slice(2000, -2000)
    err = np.sqrt(np.mean((out[mid] - x10[mid]) ** 2)) / np.sqrt(np.mean(x10[mid] ** 2))
    assert err < 0.10


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_filter_linearity(a, b, seed):
    k = design_bandpass_fir(1, 40, FS, 101)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 2, 600))
    lhs = filter_array(a * x + b * y, k.taps)
    rhs = a * filter_array(x, k.taps) + b * filter_array(y, k.taps)
    scale = max(np.abs(lhs).max(), 1e-12)
    assert np.abs(lhs - rhs).max() <= 1e-6 * scale + 1e-12


def test_rereference_pair_example():
    # A=1, B=3; the eight classification channels sit at the pair mean 2, so
    # the scalp average is 2 and the pair maps to [-1, 1]
    names = ("A", "B") + NAMES
    data = np.full((len(names), 1), 2.0)
    data[0, 0], data[1, 0] = 1.0, 3.0
    data[-2:] = 99.0  # EOG excluded from the average
    out = rereference_average(EegRecording(FS, names, data, np.zeros((0, 3)))).data
    np.testing.assert_allclose(out[:2, 0], [-1.0, 1.0])
    assert (out[-2:] == 99.0).all()


def test_rereference_random_60_channels_idempotent():
    rng = np.random.default_rng(1)
    names = tuple(f"E{i}" for i in range(50)) + NAMES
    rec = EegRecording(FS, names, rng.standard_normal((len(names), 200)), np.zeros((0, 3)))
    once = rereference_average(rec)
    scalp = once.scalp_mask()
    assert np.abs(once.data[scalp].mean(axis=0)).max() < 1e-9
    np.testing.assert_array_equal(once.data[~scalp], rec.data[~scalp])
    twice = rereference_average(once)
    np.testing.assert_allclose(twice.data, once.data, atol=1e-12)


def test_eog_regression_recovers_planted_coefficient():
    rng = np.random.default_rng(3)
    n = 20000
    heog = rng.standard_normal(n)
    veog = rng.standard_normal(n)
    data = np.zeros((len(NAMES), n))
    data[NAMES.index("HEOG")] = heog
    data[NAMES.index("VEOG")] = veog
    signal_part = 2 * veog
    noise = rng.standard_normal(n) * np.std(signal_part) / 10  # SNR 10 in amplitude
    data[0] = signal_part + noise
    data[1] = rng.standard_normal(n)
    out = remove_eog(recording(data))
    coef = np.array(out.annotations["eog_coefficients"])
    assert abs(coef[0, 1] - 2) <= 0.05
    assert abs(coef[0, 0]) <= 0.05
    # residuals are orthogonal to the (centered) EOG regressors
    eog = np.vstack([heog - heog.mean(), veog - veog.mean()])
    proj = np.linalg.solve(eog @ eog.T, eog @ out.data[0])
    assert np.abs(proj).max() <= 1e-6 * max(np.abs(coef).max(), 1)


def test_eog_orthogonal_channel_unchanged():
    n = 1000
    t = np.arange(n)
    data = np.zeros((len(NAMES), n))
    data[NAMES.index("HEOG")] = np.sin(2 * np.pi * t / 100)
    data[NAMES.index("VEOG")] = np.cos(2 * np.pi * t / 100)
    data[0] = np.sin(2 * np.pi * t / 50)  # orthogonal over whole periods
    out = remove_eog(recording(data))
    np.testing.assert_allclose(out.data[0], data[0], atol=1e-6)


def test_eog_singular_regressor():
    with pytest.raises(PreprocessingError, match="singular regressor"):
        remove_eog(recording(np.zeros((len(NAMES), 100))))


def test_epoch_shapes_baseline_and_labels():
    rng = np.random.default_rng(0)
    data = rng.standard_normal((len(NAMES), 3000)) + 50.0
    rec = recording(data, [(0, 500, 12), (1, 1500, 3)])
    epochs = extract_epochs(rec, 500, 100, target_index=12)
    assert len(epochs) == 2 and epochs.n_skipped == 0
    ep = epochs[0]
    assert ep.data.shape == (8, 250)
    assert ep.channels == CLASSIFICATION_CHANNELS
    assert ep.label is Label.TARGET and epochs[1].label is Label.NONTARGET
    assert np.abs(ep.baseline.mean(axis=1)).max() < 1e-6
    # baseline oracle: raw segment minus the mean of the 50 preceding samples
    expected = data[0, 500:750] - data[0, 450:500].mean()
    np.testing.assert_allclose(ep.data[0], expected)


def test_constant_channels_give_zero_epochs():
    rec = recording(np.full((len(NAMES), 2000), 7.0), [(0, 800, 1)])
    assert not extract_epochs(rec)[0].data.any()


def test_boundary_onset_skipped_and_counted():
    n = 3000
    rec = recording(np.zeros((len(NAMES), n)), [(0, 1000, 1), (1, n - 5, 2)])
    epochs = extract_epochs(rec)
    assert len(epochs) == 1 and epochs.n_skipped == 1
    assert len(epochs) == len(rec.stimulus_onsets) - epochs.n_skipped


def test_window_outside_range_rejected():
    rec = recording(np.zeros((len(NAMES), 2000)), [(0, 800, 1)])
    with pytest.raises(PreprocessingError):
        extract_epochs(rec, 250)


@pytest.mark.parametrize("window, expected", [(300, 9), (350, 11), (400, 12), (450, 14),
                                              (500, 16), (550, 17), (600, 19), (650, 20),
                                              (700, 22), (750, 24), (800, 25)])
def test_decimated_length_floor_rule(window, expected):
    assert expected == int(window * 32 // 1000)
    rec = recording(np.random.default_rng(0).standard_normal((len(NAMES), 3000)),
                    [(0, 1000, 1)])
    ep = decimate(extract_epochs(rec, window)[0], 32.0)
    assert ep.n_times == n_decimated(window, 32.0) == expected
    assert ep.data.size == 8 * expected


def test_500ms_gives_128_features():
    rec = recording(np.zeros((len(NAMES), 3000)), [(0, 1000, 1)])
    ep = decimate(extract_epochs(rec, 500)[0])
    assert ep.data.shape == (8, 16) and ep.data.size == 128 and ep.rate_hz == 32.0


def test_decimate_preserves_slow_signal_and_rejects_upsampling():
    t = np.arange(3000) / FS
    slow = np.tile(np.sin(2 * np.pi * 2.0 * t), (len(NAMES), 1))
    ep = extract_epochs(recording(slow, [(0, 1000, 1)]), 500)[0]
    dec = decimate(ep, 32.0)
    k = np.arange(16)
    ref = np.sin(2 * np.pi * 2.0 * (1000 / FS + k / 32.0)) - slow[0, 950:1000].mean()
    np.testing.assert_allclose(dec.data[0], ref, atol=0.05)
    with pytest.raises(PreprocessingError):
        decimate(ep, 600.0)


def test_epoch_is_frozen():
    ep = Epoch(CLASSIFICATION_CHANNELS, np.zeros((8, 16)), 32.0, 500.0, 0, 1, Label.NONTARGET)
    with pytest.raises(Exception):
        ep.trial_index = 3
