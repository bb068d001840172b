# Eryn Wells <eryn@erynwells.me>

'''
Non-uniform scalar quantization of latent vectors.

One codebook is shared by every latent dimension. Its centers come from 1-D
K-means over a corpus of unquantized latents, and Q(·) maps each element to the
nearest center.
'''

import struct
from dataclasses import dataclass, field
from os import PathLike
from typing import List, Optional, Union

import numpy as np

from . import log
from .autodiff.layers import as_weights
from .binary import ByteReader, TruncatedDataError
from .errors import FormatError, InputError, NumericError

MIN_LEVELS = 2
MAX_LEVELS = 65536
DUPLICATE_TOLERANCE = 1e-9
MEMBERSHIP_TOLERANCE = 1e-9


class CodebookError(InputError):
    '''Centers or samples that can't make a valid codebook'''
    module = 'quant'


class CodebookFormatError(FormatError):
    '''A codebook block that doesn't parse'''
    module = 'quant'


class NonFiniteLatentError(NumericError):
    module = 'quant'


class Codebook:
    '''
    A sorted set of quantization centers.

    ### Attributes
    `centers` : `np.ndarray`
        Strictly increasing centers, each exactly representable in single precision
    '''

    def __init__(self, centers):
        centers = as_weights(np.ravel(centers))
        if not MIN_LEVELS <= centers.size <= MAX_LEVELS:
            raise CodebookError(f'codebook needs between {MIN_LEVELS} and {MAX_LEVELS} levels, got {centers.size}')
        if not np.all(np.isfinite(centers)):
            raise CodebookError('codebook centers must be finite')
        if np.any(np.diff(centers) <= DUPLICATE_TOLERANCE):
            raise CodebookError('codebook centers must be strictly increasing')

        self.centers = centers
        self.centers.flags.writeable = False
        self._midpoints = (centers[:-1] + centers[1:]) / 2.0

    @classmethod
    def uniform(cls, levels: int, low: float, high: float) -> 'Codebook':
        '''Evenly spaced centers from `low` to `high` inclusive'''
        return cls(np.linspace(low, high, levels))

    @property
    def levels(self) -> int:
        '''The number of centers, K'''
        return self.centers.size

    @property
    def bits_per_symbol(self) -> int:
        '''Bits per element of a fixed-length code: ceil(log2 K)'''
        return max(1, int(self.levels - 1).bit_length())

    def __len__(self):
        return self.levels

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return np.array_equal(self.centers, other.centers)

    def __hash__(self):
        return hash(self.centers.tobytes())

    def __repr__(self):
        return f'{self.__class__.__name__}(levels={self.levels}, range=[{self.centers[0]}, {self.centers[-1]}])'

    def nearest_indices(self, z) -> np.ndarray:
        '''Index of the nearest center of every element. Ties go to the smaller center.'''
        z = np.asarray(z, dtype=np.float64)
        if np.any(np.isnan(z)):
            raise NonFiniteLatentError('cannot quantize NaN')
        return np.searchsorted(self._midpoints, z, side='left')

    def project(self, z) -> np.ndarray:
        '''Q(z): replace every element with its nearest center'''
        return self.centers[self.nearest_indices(z)]

    def distances(self, z) -> np.ndarray:
        '''Absolute distance of every element to its nearest center'''
        z = np.asarray(z, dtype=np.float64)
        return np.abs(z - self.project(z))

    def symbol_indices(self, quantized) -> np.ndarray:
        '''
        The center index of every element of an already quantized vector.

        ### Raises
        `CodebookError` if some element isn't one of the centers
        '''
        quantized = np.asarray(quantized, dtype=np.float64)
        indices = self.nearest_indices(quantized)
        off_center = np.abs(self.centers[indices] - quantized) > MEMBERSHIP_TOLERANCE
        if np.any(off_center):
            position = int(np.flatnonzero(off_center.ravel())[0])
            raise CodebookError(f'element {position} ({quantized.ravel()[position]}) is not a codebook center')
        return indices.astype(np.int64)

    def values(self, indices) -> np.ndarray:
        '''The centers named by `indices`'''
        indices = np.asarray(indices)
        if indices.size and (indices.min() < 0 or indices.max() >= self.levels):
            raise CodebookError(f'symbol index out of range [0, {self.levels})')
        return self.centers[indices]

    def to_bytes(self) -> bytes:
        '''The codebook block: K as u16 (0 for 65536), then K little-endian f32 centers'''
        return struct.pack('<H', self.levels % MAX_LEVELS) + self.centers.astype('<f4').tobytes()

    @classmethod
    def read(cls, reader: ByteReader) -> 'Codebook':
        '''Read a codebook block from `reader`'''
        offset = reader.offset
        try:
            levels = reader.u16() or MAX_LEVELS
            centers = np.frombuffer(reader.take(4 * levels), dtype='<f4').astype(np.float64)
        except TruncatedDataError as error:
            raise CodebookFormatError(f'codebook block at offset {offset} is truncated') from error
        try:
            return cls(centers)
        except CodebookError as error:
            raise CodebookFormatError(f'codebook block at offset {offset}: {error.message}') from error

    @classmethod
    def from_bytes(cls, data: bytes) -> 'Codebook':
        reader = ByteReader(bytes(data))
        codebook = cls.read(reader)
        if reader.remaining:
            raise CodebookFormatError(f'{reader.remaining} unexpected bytes after the codebook block')
        return codebook


def project(codebook: Codebook, z) -> np.ndarray:
    return codebook.project(z)


def symbol_indices(codebook: Codebook, quantized) -> np.ndarray:
    return codebook.symbol_indices(quantized)


@dataclass
class KMeansResult:
    '''
    Outcome of fitting a codebook.

    ### Attributes
    `codebook` : `Codebook`
    `distortion_history` : `List[float]`
        Mean squared distance to the nearest center, before the first iteration and after each one
    `occupancy` : `np.ndarray`
        Number of samples nearest to each center
    `iterations` : `int`
    `converged` : `bool`
        Whether the assignments reached a fixpoint before the iteration limit
    '''
    codebook: Codebook
    distortion_history: List[float] = field(default_factory=list)
    occupancy: Optional[np.ndarray] = None
    iterations: int = 0
    converged: bool = False

    @property
    def distortion(self) -> float:
        return self.distortion_history[-1]


def _initial_centers(samples: np.ndarray, levels: int) -> np.ndarray:
    centers = np.quantile(samples, (np.arange(levels) + 0.5) / levels)
    if np.all(np.diff(centers) > 0):
        return centers
    distinct = np.unique(samples)
    return distinct[np.round(np.linspace(0, distinct.size - 1, levels)).astype(int)]


def _assign(samples: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return np.searchsorted((centers[:-1] + centers[1:]) / 2.0, samples, side='left')


def _separate(centers: np.ndarray) -> np.ndarray:
    '''
    Round centers to single precision, moving any center that lands within
    `DUPLICATE_TOLERANCE` of its predecessor up to the next representable value
    past it.
    '''
    centers = as_weights(np.sort(centers))
    for i in range(1, centers.size):
        floor = centers[i - 1] + DUPLICATE_TOLERANCE
        if centers[i] > floor:
            continue
        value = np.float32(floor)
        while float(value) <= floor:
            value = np.nextafter(value, np.float32(np.inf))
        log.QUANT.debug('Center %d collides with %g in single precision; moved to %g', i, centers[i - 1], value)
        centers[i] = float(value)
    return centers


def kmeans(samples, levels: int, max_iters: int = 100, seed: int = 0,
           sample_limit: Optional[int] = None) -> KMeansResult:
    '''
    Fit a codebook of `levels` centers to `samples` with Lloyd's algorithm.

    Centers start at evenly spaced sample quantiles. Each iteration moves every
    center to the mean of its samples and reassigns samples to their nearest
    center. A center that loses all of its samples moves to the sample farthest
    from its current center. Final centers are rounded to single precision;
    centers that coincide after rounding are pushed apart by the smallest
    representable step, so distinct samples always yield a valid codebook.

    ### Parameters
    `samples` : array-like
        Unquantized latent values. Any shape; flattened.
    `levels` : `int`
        Number of centers, K
    `max_iters` : `int`
        Iteration limit
    `seed` : `int`
        Seed for subsampling when `sample_limit` is smaller than the corpus
    `sample_limit` : `Optional[int]`
        Fit on at most this many randomly chosen samples

    ### Raises
    `CodebookError` when `levels` is out of range or there are fewer distinct samples than levels
    '''
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if not MIN_LEVELS <= levels <= MAX_LEVELS:
        raise CodebookError(f'K must be between {MIN_LEVELS} and {MAX_LEVELS}, got {levels}')
    if not np.all(np.isfinite(samples)):
        raise NonFiniteLatentError('latent corpus contains non-finite values')
    if sample_limit is not None and samples.size > sample_limit:
        rng = np.random.default_rng(seed)
        samples = rng.choice(samples, size=sample_limit, replace=False)

    distinct = np.unique(samples).size
    if distinct < levels:
        raise CodebookError(f'{distinct} distinct samples cannot support {levels} levels')

    samples = np.sort(samples)
    centers = _initial_centers(samples, levels)
    assignment = _assign(samples, centers)
    history = [float(np.mean((samples - centers[assignment]) ** 2))]

    converged = False
    iterations = 0
    while iterations < max_iters:
        iterations += 1

        counts = np.bincount(assignment, minlength=levels)
        sums = np.bincount(assignment, weights=samples, minlength=levels)
        occupied = counts > 0
        centers = np.where(occupied, sums / np.maximum(counts, 1), centers)

        for empty in np.flatnonzero(~occupied):
            distance = np.abs(samples - centers[assignment])
            farthest = int(np.argmax(distance))
            log.QUANT.debug('Re-seeding empty center %d at sample %g', empty, samples[farthest])
            centers[empty] = samples[farthest]
            assignment[farthest] = empty
        centers = np.sort(centers)

        new_assignment = _assign(samples, centers)
        history.append(float(np.mean((samples - centers[new_assignment]) ** 2)))

        if np.array_equal(new_assignment, assignment) and occupied.all():
            converged = True
            break
        assignment = new_assignment

    codebook = Codebook(_separate(centers))
    occupancy = np.bincount(codebook.nearest_indices(samples), minlength=levels)

    log.QUANT.info('Fit %d levels to %d samples in %d iterations, distortion %g',
                   levels, samples.size, iterations, history[-1])

    return KMeansResult(codebook=codebook,
                        distortion_history=history,
                        occupancy=occupancy,
                        iterations=iterations,
                        converged=converged)


def fit_codebook(samples, levels: int, max_iters: int = 100, seed: int = 0) -> Codebook:
    '''Fit a codebook with 1-D K-means. See `kmeans()`.'''
    return kmeans(samples, levels, max_iters=max_iters, seed=seed).codebook


def read_codebook_file(path: Union[str, PathLike]) -> Codebook:
    '''Load a standalone `.bpcb` codebook file'''
    try:
        with open(path, 'rb') as codebook_file:
            data = codebook_file.read()
    except OSError as error:
        raise InputError(f'cannot read codebook file {path}: {error.strerror}', module='quant') from error
    return Codebook.from_bytes(data)


def write_codebook_file(path: Union[str, PathLike], codebook: Codebook):
    try:
        with open(path, 'wb') as codebook_file:
            codebook_file.write(codebook.to_bytes())
    except OSError as error:
        raise InputError(f'cannot write codebook file {path}: {error.strerror}', module='quant') from error
