# Eryn Wells <eryn@erynwells.me>

import numpy as np
import pytest
import scipy.io.wavfile
import scipy.signal

from latentcodec.entropy import SpeechHeader
from latentcodec.errors import FormatError
from latentcodec.pipeline import PipelineError, SpeechPipeline, SpeechPipelineConfig
from latentcodec.pipeline.speech import (
    denormalize,
    griffin_lim,
    istft,
    log_normalize,
    mel_filterbank,
    mel_project,
    mel_unproject,
    read_wav,
    split_patches,
    stft,
    training_patches,
    write_wav)


def _small_config(**kwargs) -> SpeechPipelineConfig:
    settings = dict(sample_rate=8000, frame_size=128, stride=32, mel_bins=24, patch_frames=32, griffin_lim_iters=20)
    settings.update(kwargs)
    return SpeechPipelineConfig(**settings)


def _tones(cfg: SpeechPipelineConfig, seconds: float = 0.5) -> np.ndarray:
    t = np.arange(int(cfg.sample_rate * seconds)) / cfg.sample_rate
    return 0.3 * np.sin(2 * np.pi * 440 * t) + 0.2 * np.sin(2 * np.pi * 1250 * t + 0.4)


def test_default_geometry():
    cfg = SpeechPipelineConfig()
    assert cfg.spectrum_bins == 257
    assert cfg.patch_samples == 16384
    assert cfg.overlap == 0.75
    assert cfg.frame_count(511) == 0
    assert cfg.frame_count(512) == 1
    assert cfg.frame_count(16000) == 122
    assert cfg.frames_length(122) == 121 * 128 + 512


def test_stft_shape_and_inverse():
    cfg = _small_config()
    samples = _tones(cfg)
    spectrum = stft(samples, cfg)
    frames = cfg.frame_count(samples.size)

    assert spectrum.shape == (65, frames)

    rebuilt = istft(spectrum, cfg)
    assert rebuilt.size == cfg.frames_length(frames)
    interior = slice(cfg.frame_size, rebuilt.size - cfg.frame_size)
    assert np.allclose(rebuilt[interior], samples[interior], atol=1e-8)


def test_stft_rejects_short_or_multichannel_input():
    cfg = _small_config()
    with pytest.raises(PipelineError):
        stft(np.zeros(cfg.frame_size - 1), cfg)
    with pytest.raises(PipelineError):
        stft(np.zeros((2, 1000)), cfg)


def test_mel_filterbank():
    cfg = _small_config()
    filterbank = mel_filterbank(cfg)
    assert filterbank.shape == (24, 65)
    assert np.all(filterbank >= 0)
    assert not filterbank.flags.writeable


def _one_sided_energy(spectrum: np.ndarray, frame_size: int) -> np.ndarray:
    '''Per-frame Σ|X|²/N over the full spectrum, from the bins up to Nyquist'''
    power = np.abs(spectrum) ** 2
    weights = np.full(power.shape[0], 2.0)
    weights[0] = 1.0
    if frame_size % 2 == 0:
        weights[-1] = 1.0
    return weights @ power / frame_size


@pytest.mark.parametrize('window', ['hann', 'boxcar'])
def test_stft_preserves_frame_energy(window):
    cfg = _small_config(window=window)
    samples = _tones(cfg, 0.1) + 0.05 * np.random.default_rng(2).standard_normal(800)
    spectrum = stft(samples, cfg)

    taper = scipy.signal.get_window(window, cfg.frame_size, fftbins=True)
    for frame in range(spectrum.shape[1]):
        start = frame * cfg.stride
        windowed = samples[start:start + cfg.frame_size] * taper
        energy = float(np.sum(windowed ** 2))
        assert _one_sided_energy(spectrum[:, frame], cfg.frame_size) == pytest.approx(energy, rel=1e-6)


@pytest.mark.parametrize('window, spread', [('boxcar', 0), ('hann', 1)])
def test_stft_of_a_bin_centered_sine_peaks_at_that_bin(window, spread):
    cfg = _small_config(window=window)
    k = 10
    n = np.arange(cfg.frame_size)
    samples = np.sin(2 * np.pi * k * n / cfg.frame_size)
    magnitude = np.abs(stft(samples, cfg))[:, 0]

    assert int(np.argmax(magnitude)) == k
    off_peak = np.delete(magnitude, np.arange(k - spread, k + spread + 1))
    assert np.all(off_peak <= 1e-6 * magnitude[k])


def test_stft_is_linear():
    cfg = _small_config()
    x = _tones(cfg, 0.1)
    y = np.random.default_rng(4).standard_normal(x.size)
    combined = stft(2.0 * x - 0.5 * y, cfg)
    assert np.allclose(combined, 2.0 * stft(x, cfg) - 0.5 * stft(y, cfg), atol=1e-10)


def _htk_filterbank(cfg: SpeechPipelineConfig) -> np.ndarray:
    '''Triangular filters built straight from the HTK mel formula'''
    top = 2595.0 * np.log10(1.0 + (cfg.sample_rate / 2.0) / 700.0)
    edges = 700.0 * (10.0 ** (np.linspace(0.0, top, cfg.mel_bins + 2) / 2595.0) - 1.0)
    frequencies = np.arange(cfg.spectrum_bins) * cfg.sample_rate / cfg.frame_size

    filterbank = np.zeros((cfg.mel_bins, cfg.spectrum_bins))
    for m in range(cfg.mel_bins):
        lower, center, upper = edges[m:m + 3]
        for b, f in enumerate(frequencies):
            filterbank[m, b] = max(0.0, min((f - lower) / (center - lower), (upper - f) / (upper - center)))
    return filterbank


def test_mel_projection_of_a_flat_spectrum_sums_each_filter():
    cfg = _small_config()
    expected = _htk_filterbank(cfg)
    mel = mel_project(np.ones((cfg.spectrum_bins, 3)), cfg)

    assert np.allclose(mel_filterbank(cfg), expected, atol=1e-9)
    assert np.allclose(mel, expected.sum(axis=1)[:, np.newaxis], atol=1e-9)
    assert np.array_equal(mel_project(np.zeros((cfg.spectrum_bins, 2)), cfg), np.zeros((cfg.mel_bins, 2)))


def test_nnls_unprojection_is_consistent_with_projection():
    cfg = _small_config(mel_inversion='nnls')
    magnitude = np.abs(stft(_tones(cfg, 0.1), cfg))
    mel = mel_project(magnitude, cfg)
    assert np.allclose(mel_project(mel_unproject(mel, cfg), cfg), mel, atol=1e-8 * mel.max())


@pytest.mark.parametrize('inversion', ['transpose', 'pinv', 'nnls'])
def test_unprojection_is_nonnegative(inversion):
    cfg = _small_config(mel_inversion=inversion)
    mel = np.random.default_rng(0).uniform(0, 1, (24, 5))
    linear = mel_unproject(mel, cfg)
    assert linear.shape == (65, 5)
    assert np.all(linear >= 0)


def test_log_normalize_anchors():
    mel = np.array([[3.7, 3.7 * np.exp(-8.0), 0.0, 3.7 * np.exp(-20.0)]])
    patch, gain = log_normalize(mel, 8.0)

    assert gain <= 3.7
    assert gain == float(np.float32(gain))
    assert patch[0, 0] == 1.0
    assert patch[0, 1] == pytest.approx(-1.0, abs=1e-6)
    assert patch[0, 2] == -1.0
    assert patch[0, 3] == -1.0


def test_log_normalize_round_trip_above_truncation():
    mel = np.random.default_rng(1).uniform(0.1, 2.0, (8, 6))
    patch, gain = log_normalize(mel, 8.0)
    assert np.all((patch >= -1) & (patch <= 1))
    assert np.allclose(denormalize(patch, gain, 8.0), mel)


def test_log_normalize_rejects_bad_input():
    with pytest.raises(PipelineError):
        log_normalize(np.zeros((2, 2)), 8.0)
    with pytest.raises(PipelineError):
        log_normalize(np.array([[1.0, -0.1]]), 8.0)


def test_griffin_lim_error_never_increases():
    cfg = _small_config()
    magnitude = np.abs(stft(_tones(cfg), cfg))
    samples, errors = griffin_lim(magnitude, cfg, 100)

    assert len(errors) == 100
    assert np.all(np.diff(errors) <= 1e-9)
    assert errors[-1] < 0.15
    assert samples.size == cfg.frames_length(magnitude.shape[1])


def test_split_patches_pads_with_silence():
    spectrogram = np.arange(40, dtype=np.float64).reshape(4, 10)
    patches = split_patches(spectrogram, 4, 4)

    assert patches.shape == (3, 4, 4)
    assert np.array_equal(patches[0], spectrogram[:, :4])
    assert np.array_equal(patches[2][:, :2], spectrogram[:, 8:])
    assert np.all(patches[2][:, 2:] == -1.0)


def test_training_patches_overlap():
    cfg = SpeechPipelineConfig()
    patches = training_patches(np.zeros((128, 300)), cfg)
    assert patches.shape == (3, 128, 140)


def test_wav_round_trip(tmp_path):
    samples = np.linspace(-0.5, 0.5, 1000)
    path = tmp_path / 'speech.wav'
    write_wav(path, samples, 8000)
    loaded, rate = read_wav(path)

    assert rate == 8000
    assert np.allclose(loaded, samples, atol=1 / 32768)


def test_wav_errors(tmp_path):
    stereo = tmp_path / 'stereo.wav'
    scipy.io.wavfile.write(stereo, 8000, np.zeros((100, 2), dtype=np.int16))
    with pytest.raises(PipelineError):
        read_wav(stereo)

    garbage = tmp_path / 'garbage.wav'
    garbage.write_bytes(b'definitely not a wav file')
    with pytest.raises(FormatError):
        read_wav(garbage)


def test_pipeline_rejects_other_sample_rates(tmp_path):
    path = tmp_path / 'speech.wav'
    write_wav(path, np.zeros(1000), 22050)
    with pytest.raises(PipelineError):
        SpeechPipeline(_small_config()).read(path)


def test_analyze_and_synthesize():
    cfg = _small_config()
    pipeline = SpeechPipeline(cfg)
    samples = _tones(cfg)
    patches, header = pipeline.analyze(samples)

    frames = cfg.frame_count(samples.size)
    assert patches.shape == (-(-frames // 32), 24, 32)
    assert header.sample_count == samples.size
    assert header.gain > 0
    assert patches.max() == 1.0

    rebuilt = pipeline.synthesize(patches, header)
    assert rebuilt.shape == samples.shape
    assert np.all(np.abs(rebuilt) <= 1.0)


def test_analyze_rejects_silence():
    with pytest.raises(PipelineError):
        SpeechPipeline(_small_config()).analyze(np.zeros(4000))


def test_rate_in_kilobits_per_second():
    pipeline = SpeechPipeline(SpeechPipelineConfig())
    header = SpeechHeader(16000, 512, 128, 128, 128, 8.0, 64000, 1.0)
    assert pipeline.rate_unit == 'kbps'
    assert pipeline.rate(4 * 512 * 4, header, 4) == pytest.approx(2.048)


def test_evaluate_identical_signals():
    cfg = _small_config()
    samples = _tones(cfg)
    assert SpeechPipeline(cfg).evaluate(samples, samples)['spectral_psnr'] == float('inf')


def test_invalid_configurations():
    for cfg in (_small_config(stride=256), _small_config(window='hamming'), _small_config(mel_inversion='lsq')):
        with pytest.raises(PipelineError):
            cfg.validate()
