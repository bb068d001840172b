# Eryn Wells <eryn@erynwells.me>

'''
Image pre- and post-processing, and binary portable pixmap I/O.

Images are `uint8` arrays laid out channels first, `(C, H, W)`. Before
compression they're resized to the generator's resolution and mapped to
[−1, 1].
'''

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import scipy.ndimage

from .. import log
from ..entropy import ImageHeader, SignalType
from ..errors import FormatError, InputError
from ..objectives import ImageObjectiveConfig, msssim
from .base import Path, PipelineError, SignalPipeline, psnr


class ImageFormatError(FormatError):
    '''A malformed portable pixmap'''

    module = 'pipeline'

    def __init__(self, offset: int, message: str):
        super().__init__(f'{message} at byte {offset}')
        self.offset = offset


@dataclass
class ImagePipelineConfig:
    '''
    ### Attributes
    `width`, `height` : `int`
        Resolution the generator works at
    `channels` : `int`
        1 for grayscale, 3 for RGB
    '''

    width: int = 768
    height: int = 512
    channels: int = 3

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.channels, self.height, self.width)


# Portable pixmaps

_WHITESPACE = b' \t\n\r\v\f'


def _read_token(data: bytes, offset: int) -> Tuple[bytes, int]:
    '''Read one whitespace-delimited header token, skipping comments. Returns the token and the offset after it.'''
    while offset < len(data):
        if data[offset] in _WHITESPACE:
            offset += 1
        elif data[offset] == ord('#'):
            while offset < len(data) and data[offset] not in b'\r\n':
                offset += 1
        else:
            break

    start = offset
    while offset < len(data) and data[offset] not in _WHITESPACE and data[offset] != ord('#'):
        offset += 1
    if start == offset:
        raise ImageFormatError(offset, 'unexpected end of header')
    return data[start:offset], offset


def _read_integer(data: bytes, offset: int, name: str) -> Tuple[int, int]:
    token, end = _read_token(data, offset)
    if not token.isdigit():
        raise ImageFormatError(end - len(token), f'{name} is not a number')
    value = int(token)
    if value <= 0:
        raise ImageFormatError(end - len(token), f'{name} must be positive')
    return value, end


def parse_pixmap(data: bytes) -> np.ndarray:
    '''
    Parse a binary PPM (`P6`) or PGM (`P5`) image with 8 bits per sample.

    ### Returns
    A `uint8` array shaped `(C, H, W)`

    ### Raises
    `ImageFormatError` naming the byte offset of the problem
    '''
    match data[:2]:
        case b'P6':
            channels = 3
        case b'P5':
            channels = 1
        case _:
            raise ImageFormatError(0, 'not a binary PPM or PGM image')

    width, offset = _read_integer(data, 2, 'width')
    height, offset = _read_integer(data, offset, 'height')
    maxval, offset = _read_integer(data, offset, 'maximum value')
    if maxval > 255:
        raise ImageFormatError(offset, f'only 8-bit images are supported, maximum value is {maxval}')
    if offset >= len(data) or data[offset] not in _WHITESPACE:
        raise ImageFormatError(offset, 'expected whitespace before pixel data')
    offset += 1

    expected = width * height * channels
    available = len(data) - offset
    if available < expected:
        raise ImageFormatError(len(data), f'pixel data is truncated, expected {expected} bytes, found {available}')
    if available > expected:
        raise ImageFormatError(offset + expected, f'{available - expected} unexpected bytes after pixel data')

    pixels = np.frombuffer(data, dtype=np.uint8, count=expected, offset=offset)
    if pixels.max(initial=0) > maxval:
        raise ImageFormatError(offset + int(np.argmax(pixels > maxval)), f'sample exceeds maximum value {maxval}')
    if maxval != 255:
        pixels = np.round(pixels.astype(np.float64) * 255.0 / maxval).astype(np.uint8)

    return pixels.reshape(height, width, channels).transpose(2, 0, 1).copy()


def format_pixmap(image: np.ndarray) -> bytes:
    '''Serialize a `(C, H, W)` `uint8` image as binary PPM, or PGM for one channel'''
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise PipelineError(f'images must be shaped (1 or 3, H, W), got {image.shape}')
    if image.dtype != np.uint8:
        raise PipelineError(f'images must be 8-bit, got {image.dtype}')

    channels, height, width = image.shape
    magic = b'P6' if channels == 3 else b'P5'
    header = magic + f'\n{width} {height}\n255\n'.encode('ascii')
    return header + image.transpose(1, 2, 0).tobytes()


def read_pixmap(path: Path) -> np.ndarray:
    try:
        with open(path, 'rb') as image_file:
            data = image_file.read()
    except OSError as error:
        raise InputError(f'cannot read {path}: {error.strerror}', module='pipeline') from error
    return parse_pixmap(data)


def write_pixmap(path: Path, image: np.ndarray):
    data = format_pixmap(image)
    try:
        with open(path, 'wb') as image_file:
            image_file.write(data)
    except OSError as error:
        raise InputError(f'cannot write {path}: {error.strerror}', module='pipeline') from error


# Normalization

def normalize(image: np.ndarray) -> np.ndarray:
    '''Map 8-bit samples to [−1, 1]'''
    return np.asarray(image, dtype=np.float64) / 127.5 - 1.0


def denormalize(signal: np.ndarray) -> np.ndarray:
    '''Map [−1, 1] back to 8-bit samples, clipping anything outside'''
    return np.clip(np.round((np.asarray(signal, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def resize(image: np.ndarray, height: int, width: int) -> np.ndarray:
    '''Bilinear resize of a `(C, H, W)` float image'''
    image = np.asarray(image, dtype=np.float64)
    if image.shape[1:] == (height, width):
        return image.copy()
    factors = (1.0, height / image.shape[1], width / image.shape[2])
    resized = scipy.ndimage.zoom(image, factors, order=1, mode='nearest', grid_mode=True)
    assert resized.shape[1:] == (height, width), f'resized to {resized.shape}, wanted {(height, width)}'
    return resized


class ImagePipeline(SignalPipeline):
    '''Portable pixmaps in, one generator-resolution patch per image'''

    signal_type = SignalType.IMAGE

    def __init__(self, config: ImagePipelineConfig):
        if min(config.width, config.height) <= 0:
            raise PipelineError(f'image resolution must be positive, got {config.width}x{config.height}')
        if config.channels not in (1, 3):
            raise PipelineError(f'images have 1 or 3 channels, got {config.channels}')
        self.config = config

    @property
    def rate_unit(self) -> str:
        return 'bpp'

    def read(self, path: Path) -> np.ndarray:
        return read_pixmap(path)

    def write(self, path: Path, signal: np.ndarray):
        write_pixmap(path, signal)

    def analyze(self, signal: np.ndarray) -> Tuple[np.ndarray, ImageHeader]:
        config = self.config
        signal = np.asarray(signal)
        if signal.ndim != 3 or signal.shape[0] != config.channels:
            raise PipelineError(f'expected an image with {config.channels} channels, got shape {signal.shape}')

        _, height, width = signal.shape
        header = ImageHeader(width=width, height=height, channels=config.channels,
                             target_width=config.width, target_height=config.height)
        log.PIPELINE.debug('Resizing %dx%d image to %dx%d', width, height, config.width, config.height)
        patch = resize(normalize(signal), config.height, config.width)
        return patch[np.newaxis], header

    def synthesize(self, patches: np.ndarray, header: ImageHeader) -> np.ndarray:
        patches = np.asarray(patches, dtype=np.float64)
        if patches.shape[0] != 1:
            raise PipelineError(f'an image is made of one patch, got {patches.shape[0]}')
        patch = patches[0].reshape(header.channels, header.target_height, header.target_width)
        return denormalize(resize(np.clip(patch, -1.0, 1.0), header.height, header.width))

    def rate(self, bits: int, header: ImageHeader, patch_count: int) -> float:
        return bits / header.pixel_count

    def evaluate(self, original: np.ndarray, reconstruction: np.ndarray) -> Dict[str, float]:
        '''PSNR over 8-bit samples, and MS-SSIM with as many scales as the image size allows, up to five'''
        original = np.asarray(original)
        reconstruction = np.asarray(reconstruction)
        if original.shape != reconstruction.shape:
            raise PipelineError(f'image shapes differ: {original.shape} and {reconstruction.shape}')

        metrics = {'psnr': psnr(original, reconstruction, 255.0)}

        cfg = ImageObjectiveConfig()
        while cfg.msssim_scales > 1 and min(original.shape[1:]) < cfg.minimum_size:
            cfg.msssim_scales -= 1
        if min(original.shape[1:]) >= cfg.minimum_size:
            metrics['msssim'] = msssim(normalize(original), normalize(reconstruction), cfg)
            metrics['msssim_scales'] = cfg.msssim_scales
        else:
            log.PIPELINE.info('Image is too small for MS-SSIM: %s', original.shape)

        return metrics
