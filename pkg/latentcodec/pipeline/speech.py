# Eryn Wells <eryn@erynwells.me>

'''
Speech pre- and post-processing.

Analysis: samples → STFT magnitude → mel spectrogram → log-magnitude with a
limited dynamic range, scaled to [−1, 1] → fixed-size patches. Synthesis runs
the chain backwards, estimating the discarded phase with Griffin-Lim.

Spectrograms are laid out `(bins, frames)`.
'''

import dataclasses
import functools
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import librosa
import numpy as np
import scipy.io.wavfile
import scipy.optimize

from .. import log
from ..entropy import SignalType, SpeechHeader
from ..errors import FormatError, InputError
from .base import Path, PipelineError, SignalPipeline, psnr

WINDOWS = ('hann', 'boxcar')
MEL_INVERSIONS = ('transpose', 'pinv', 'nnls')


@dataclass
class SpeechPipelineConfig:
    '''
    ### Attributes
    `sample_rate` : `int`
        Samples per second. Inputs at any other rate are rejected.
    `frame_size` : `int`
        STFT frame length in samples
    `stride` : `int`
        Hop between frames in samples
    `mel_bins` : `int`
    `patch_frames` : `int`
        Frames in one compressed patch
    `dynamic_range` : `float`
        The log-magnitude is truncated to [−r, 0] below the utterance maximum
    `window` : `str`
        Analysis window, `hann` or `boxcar`
    `patch_seconds` : `float`
        Duration a patch accounts for in bitrate reports
    `mel_inversion` : `str`
        How mel spectra are mapped back to linear frequency: `transpose`, `pinv` or `nnls`
    `griffin_lim_iters` : `int`
    `training_patch_frames`, `training_overlap` : `int`
        Geometry of overlapping training patches
    '''

    sample_rate: int = 16000
    frame_size: int = 512
    stride: int = 128
    mel_bins: int = 128
    patch_frames: int = 128
    dynamic_range: float = 8.0
    window: str = 'hann'
    patch_seconds: float = 1.0
    mel_inversion: str = 'transpose'
    griffin_lim_iters: int = 100
    training_patch_frames: int = 140
    training_overlap: int = 12

    @property
    def spectrum_bins(self) -> int:
        return self.frame_size // 2 + 1

    @property
    def patch_samples(self) -> int:
        '''Samples spanned by the frame hops of one patch'''
        return self.patch_frames * self.stride

    @property
    def overlap(self) -> float:
        '''Fraction of each frame shared with the next'''
        return 1.0 - self.stride / self.frame_size

    def frame_count(self, sample_count: int) -> int:
        '''Number of whole frames in `sample_count` samples'''
        if sample_count < self.frame_size:
            return 0
        return 1 + (sample_count - self.frame_size) // self.stride

    def frames_length(self, frame_count: int) -> int:
        '''Number of samples `frame_count` frames cover'''
        return (frame_count - 1) * self.stride + self.frame_size

    def validate(self):
        for name in ('sample_rate', 'frame_size', 'stride', 'mel_bins', 'patch_frames', 'training_patch_frames'):
            if getattr(self, name) <= 0:
                raise PipelineError(f'speech.{name} must be positive, got {getattr(self, name)}')
        if self.stride > self.frame_size:
            raise PipelineError(f'speech.stride {self.stride} exceeds speech.frame_size {self.frame_size}')
        if not self.dynamic_range > 0:
            raise PipelineError(f'speech.dynamic_range must be positive, got {self.dynamic_range}')
        if not self.patch_seconds > 0:
            raise PipelineError(f'speech.patch_seconds must be positive, got {self.patch_seconds}')
        if self.window not in WINDOWS:
            raise PipelineError(f'speech.window must be one of {", ".join(WINDOWS)}, got {self.window!r}')
        if self.mel_inversion not in MEL_INVERSIONS:
            raise PipelineError(
                f'speech.mel_inversion must be one of {", ".join(MEL_INVERSIONS)}, got {self.mel_inversion!r}')
        if self.griffin_lim_iters < 0:
            raise PipelineError(f'speech.griffin_lim_iters must be nonnegative, got {self.griffin_lim_iters}')
        if not 0 <= self.training_overlap < self.training_patch_frames:
            raise PipelineError(f'speech.training_overlap must be in [0, {self.training_patch_frames})')

    def with_header(self, header: SpeechHeader) -> 'SpeechPipelineConfig':
        '''This configuration with the analysis geometry of a compressed utterance'''
        return dataclasses.replace(self,
                                   sample_rate=header.sample_rate,
                                   frame_size=header.frame_size,
                                   stride=header.stride,
                                   mel_bins=header.mel_bins,
                                   patch_frames=header.patch_frames,
                                   dynamic_range=float(header.dynamic_range))


# Spectral analysis

def stft(samples: np.ndarray, cfg: SpeechPipelineConfig) -> np.ndarray:
    '''
    Short-time Fourier transform without padding: frame `i` covers samples
    `[i·stride, i·stride + frame_size)`.

    ### Returns
    A complex array shaped `(frame_size // 2 + 1, frames)`
    '''
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise PipelineError(f'speech must be a single channel, got shape {samples.shape}')
    if samples.size < cfg.frame_size:
        raise PipelineError(f'{samples.size} samples is shorter than one {cfg.frame_size}-sample frame')
    if not np.all(np.isfinite(samples)):
        raise PipelineError('speech samples must be finite')

    return librosa.stft(samples, n_fft=cfg.frame_size, hop_length=cfg.stride, win_length=cfg.frame_size,
                        window=cfg.window, center=False)


def istft(spectrogram: np.ndarray, cfg: SpeechPipelineConfig) -> np.ndarray:
    '''The least-squares signal whose STFT is closest to `spectrogram`'''
    frames = spectrogram.shape[1]
    return librosa.istft(spectrogram, hop_length=cfg.stride, win_length=cfg.frame_size, n_fft=cfg.frame_size,
                         window=cfg.window, center=False, length=cfg.frames_length(frames))


@functools.lru_cache(maxsize=8)
def _mel_filterbank(sample_rate: int, frame_size: int, mel_bins: int) -> np.ndarray:
    with warnings.catch_warnings():
        # Narrow low-frequency filters can fall between FFT bins and come out empty
        warnings.simplefilter('ignore', UserWarning)
        filterbank = librosa.filters.mel(sr=sample_rate, n_fft=frame_size, n_mels=mel_bins, fmin=0.0,
                                         fmax=sample_rate / 2.0, htk=True, norm=None, dtype=np.float64)
    filterbank.setflags(write=False)
    return filterbank


def mel_filterbank(cfg: SpeechPipelineConfig) -> np.ndarray:
    '''Triangular filters spaced evenly on the HTK mel scale from 0 Hz to Nyquist, shaped `(mel_bins, spectrum_bins)`'''
    return _mel_filterbank(cfg.sample_rate, cfg.frame_size, cfg.mel_bins)


def mel_project(spectrogram: np.ndarray, cfg: SpeechPipelineConfig) -> np.ndarray:
    '''Apply the mel filterbank to every frame of a magnitude spectrogram'''
    spectrogram = np.asarray(spectrogram, dtype=np.float64)
    if spectrogram.shape[0] != cfg.spectrum_bins:
        raise PipelineError(f'spectrogram has {spectrogram.shape[0]} bins, expected {cfg.spectrum_bins}')
    return mel_filterbank(cfg) @ spectrogram


def mel_unproject(mel: np.ndarray, cfg: SpeechPipelineConfig) -> np.ndarray:
    '''
    Estimate the linear-frequency magnitude behind a mel spectrogram. The
    estimate is never negative.

    `transpose` spreads each mel value back over its filter, scaled by the
    filter's energy. `pinv` applies the pseudo-inverse of the filterbank.
    `nnls` solves a nonnegative least-squares problem per frame.
    '''
    mel = np.asarray(mel, dtype=np.float64)
    if mel.shape[0] != cfg.mel_bins:
        raise PipelineError(f'mel spectrogram has {mel.shape[0]} bins, expected {cfg.mel_bins}')

    filterbank = mel_filterbank(cfg)
    match cfg.mel_inversion:
        case 'transpose':
            energy = np.sum(filterbank * filterbank, axis=1)
            scale = np.divide(1.0, energy, out=np.zeros_like(energy), where=energy > 0)
            linear = filterbank.T @ (mel * scale[:, np.newaxis])
        case 'pinv':
            linear = np.linalg.pinv(filterbank) @ mel
        case 'nnls':
            columns = [scipy.optimize.nnls(filterbank, frame)[0] for frame in mel.T]
            linear = np.stack(columns, axis=1) if columns else np.zeros((cfg.spectrum_bins, 0))
        case _:
            raise PipelineError(f'unknown mel inversion {cfg.mel_inversion!r}')

    return np.maximum(linear, 0.0)


# Log-magnitude normalization

def log_normalize(mel: np.ndarray, dynamic_range: float, gain: Optional[float] = None) -> Tuple[np.ndarray, float]:
    '''
    Map a mel spectrogram to [−1, 1]: divide by the gain, take the log, truncate
    to [−r, 0], then scale and shift.

    ### Parameters
    `gain` : `float`
        The divisor. Defaults to the largest element, rounded to a 32-bit float
        no larger than it, so that element maps to exactly 1.

    ### Returns
    A tuple `(patch, gain)`
    '''
    mel = np.asarray(mel, dtype=np.float64)
    if np.any(mel < 0) or not np.all(np.isfinite(mel)):
        raise PipelineError('mel magnitudes must be finite and nonnegative')

    if gain is None:
        peak = float(mel.max(initial=0.0))
        if peak <= 0:
            raise PipelineError('cannot normalize an all-zero spectrogram')
        rounded = np.float32(peak)
        if float(rounded) > peak:
            rounded = np.nextafter(rounded, np.float32(0))
        gain = float(rounded)

    with np.errstate(divide='ignore'):
        levels = np.log(mel / gain)
    levels = np.clip(levels, -dynamic_range, 0.0)
    return 2.0 * levels / dynamic_range + 1.0, gain


def denormalize(patch: np.ndarray, gain: float, dynamic_range: float) -> np.ndarray:
    '''Invert `log_normalize()`. Values truncated by it come back as gain·e^(−r).'''
    levels = (np.clip(np.asarray(patch, dtype=np.float64), -1.0, 1.0) - 1.0) * dynamic_range / 2.0
    return gain * np.exp(levels)


# Phase recovery

def griffin_lim(magnitude: np.ndarray, cfg: SpeechPipelineConfig, iterations: int) -> Tuple[np.ndarray, List[float]]:
    '''
    Estimate a signal whose STFT magnitude matches `magnitude`, starting from
    zero phase and alternating between the consistent signal and the target
    magnitude.

    ### Returns
    A tuple `(samples, errors)`. `errors` holds the relative spectral magnitude
    error of each iterate, which never increases.
    '''
    magnitude = np.asarray(magnitude, dtype=np.float64)
    if magnitude.ndim != 2 or magnitude.shape[0] != cfg.spectrum_bins or magnitude.shape[1] < 1:
        raise PipelineError(f'expected a ({cfg.spectrum_bins}, frames) magnitude spectrogram, got {magnitude.shape}')

    scale = float(np.linalg.norm(magnitude))
    phase = np.ones_like(magnitude, dtype=np.complex128)
    samples = istft(magnitude * phase, cfg)
    errors = []
    for _ in range(iterations):
        rebuilt = stft(samples, cfg)
        errors.append(float(np.linalg.norm(np.abs(rebuilt) - magnitude)) / scale if scale else 0.0)
        phase = np.exp(1j * np.angle(rebuilt))
        samples = istft(magnitude * phase, cfg)

    if errors:
        log.PIPELINE.debug('Griffin-Lim: %d iterations, spectral error %.4g', iterations, errors[-1])
    return samples, errors


# Patching

def split_patches(spectrogram: np.ndarray, frames: int, hop: int) -> np.ndarray:
    '''
    Cut `(bins, T)` into patches of `frames` frames starting every `hop` frames.
    The last patch is padded with −1, the normalized level of silence.
    '''
    bins, total = spectrogram.shape
    count = max(1, -(-max(total - frames, 0) // hop) + 1)
    padded = np.full((bins, (count - 1) * hop + frames), -1.0)
    padded[:, :total] = spectrogram
    return np.stack([padded[:, i * hop:i * hop + frames] for i in range(count)])


def training_patches(patch: np.ndarray, cfg: SpeechPipelineConfig) -> np.ndarray:
    '''Overlapping patches of a normalized spectrogram, the way training data is cut'''
    return split_patches(patch, cfg.training_patch_frames, cfg.training_patch_frames - cfg.training_overlap)


# WAV files

def read_wav(path: Path) -> Tuple[np.ndarray, int]:
    '''
    Read a mono WAV file.

    ### Returns
    A tuple `(samples, sample_rate)` with samples scaled to [−1, 1)
    '''
    try:
        sample_rate, data = scipy.io.wavfile.read(path)
    except OSError as error:
        raise InputError(f'cannot read {path}: {error.strerror}', module='pipeline') from error
    except ValueError as error:
        raise FormatError(f'{path} is not a supported WAV file: {error}', module='pipeline') from error

    if data.ndim != 1:
        raise PipelineError(f'{path} has {data.shape[1]} channels; only mono is supported')
    match data.dtype:
        case np.int16:
            samples = data.astype(np.float64) / 32768.0
        case np.float32 | np.float64:
            samples = data.astype(np.float64)
        case _:
            raise FormatError(f'{path} has unsupported sample type {data.dtype}', module='pipeline')
    return samples, int(sample_rate)


def write_wav(path: Path, samples: np.ndarray, sample_rate: int):
    '''Write 16-bit PCM mono'''
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0), -32768, 32767).astype(np.int16)
    try:
        scipy.io.wavfile.write(path, sample_rate, pcm)
    except OSError as error:
        raise InputError(f'cannot write {path}: {error.strerror}', module='pipeline') from error


class SpeechPipeline(SignalPipeline):
    '''WAV files in, one normalized mel patch per `patch_frames` frames'''

    signal_type = SignalType.SPEECH

    def __init__(self, config: SpeechPipelineConfig):
        config.validate()
        self.config = config

    @property
    def rate_unit(self) -> str:
        return 'kbps'

    def read(self, path: Path) -> np.ndarray:
        samples, sample_rate = read_wav(path)
        if sample_rate != self.config.sample_rate:
            raise PipelineError(f'{path} is sampled at {sample_rate} Hz, expected {self.config.sample_rate} Hz')
        return samples

    def write(self, path: Path, signal: np.ndarray):
        write_wav(path, signal, self.config.sample_rate)

    def spectrogram(self, samples: np.ndarray, gain: Optional[float] = None) -> Tuple[np.ndarray, float]:
        '''The normalized log-mel spectrogram of `samples`, and the gain it was normalized by'''
        cfg = self.config
        mel = mel_project(np.abs(stft(samples, cfg)), cfg)
        return log_normalize(mel, cfg.dynamic_range, gain)

    def analyze(self, signal: np.ndarray) -> Tuple[np.ndarray, SpeechHeader]:
        cfg = self.config
        signal = np.asarray(signal, dtype=np.float64)
        patch, gain = self.spectrogram(signal)
        header = SpeechHeader(sample_rate=cfg.sample_rate, frame_size=cfg.frame_size, stride=cfg.stride,
                              mel_bins=cfg.mel_bins, patch_frames=cfg.patch_frames,
                              dynamic_range=cfg.dynamic_range, sample_count=signal.size, gain=gain)
        patches = split_patches(patch, cfg.patch_frames, cfg.patch_frames)
        log.PIPELINE.debug('Cut %d frames into %d patches, gain %g', patch.shape[1], patches.shape[0], gain)
        return patches, header

    def synthesize(self, patches: np.ndarray, header: SpeechHeader) -> np.ndarray:
        cfg = self.config.with_header(header)
        patches = np.asarray(patches, dtype=np.float64)
        patches = patches.reshape(patches.shape[0], cfg.mel_bins, cfg.patch_frames)

        frames = cfg.frame_count(header.sample_count)
        if frames < 1 or frames > patches.shape[0] * cfg.patch_frames:
            raise PipelineError(f'{patches.shape[0]} patches cannot hold {header.sample_count} samples')
        patch = np.concatenate(list(patches), axis=1)[:, :frames]

        magnitude = mel_unproject(denormalize(patch, header.gain, cfg.dynamic_range), cfg)
        samples, _ = griffin_lim(magnitude, cfg, cfg.griffin_lim_iters)

        output = np.zeros(header.sample_count)
        length = min(samples.size, output.size)
        output[:length] = samples[:length]
        return np.clip(output, -1.0, 1.0)

    def rate(self, bits: int, header: SpeechHeader, patch_count: int) -> float:
        return bits / (patch_count * self.config.patch_seconds) / 1000.0

    def evaluate(self, original: np.ndarray, reconstruction: np.ndarray) -> Dict[str, float]:
        '''PSNR between normalized log-mel spectrograms, both normalized by the original's gain'''
        original = np.asarray(original, dtype=np.float64)
        reconstruction = np.asarray(reconstruction, dtype=np.float64)
        if original.shape != reconstruction.shape:
            raise PipelineError(f'signal lengths differ: {original.shape} and {reconstruction.shape}')

        reference, gain = self.spectrogram(original)
        rebuilt, _ = self.spectrogram(reconstruction, gain)
        return {'spectral_psnr': psnr(reference, rebuilt, 2.0)}
