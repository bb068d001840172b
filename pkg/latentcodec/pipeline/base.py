# Eryn Wells <eryn@erynwells.me>

'''
The interface every signal pipeline implements, and signal metrics shared by
all of them.
'''

from os import PathLike
from typing import Dict, Tuple, Union

import numpy as np

from ..entropy import SignalType
from ..entropy.container import SignalHeader
from ..errors import InputError

Path = Union[str, PathLike]


class PipelineError(InputError):
    '''A signal the pipeline can't process'''
    module = 'pipeline'


def psnr_from_mse(error: float, peak: float) -> float:
    '''10·log10(peak² / error), or `inf` for zero error'''
    if error == 0.0:
        return float('inf')
    return 10.0 * float(np.log10(peak * peak / error))


def psnr(x: np.ndarray, y: np.ndarray, peak: float) -> float:
    '''
    Peak signal-to-noise ratio in decibels, 10·log10(peak² / MSE).

    ### Returns
    The ratio, or `inf` when `x` and `y` are identical
    '''
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise PipelineError(f'signal shapes differ: {x.shape} and {y.shape}')
    if not peak > 0:
        raise PipelineError(f'peak must be positive, got {peak}')

    difference = x - y
    return psnr_from_mse(float(np.mean(difference * difference)), peak)


class SignalPipeline:
    '''
    Abstract base class for turning signal files into generator-shaped patches
    and back. Subclasses implement every method.
    '''

    signal_type: SignalType

    @property
    def rate_unit(self) -> str:
        '''The unit `rate()` reports in'''
        raise NotImplementedError()

    def read(self, path: Path) -> np.ndarray:
        '''Read a signal file'''
        raise NotImplementedError()

    def write(self, path: Path, signal: np.ndarray):
        '''Write a signal file'''
        raise NotImplementedError()

    def analyze(self, signal: np.ndarray) -> Tuple[np.ndarray, SignalHeader]:
        '''
        Preprocess a signal for compression.

        ### Returns
        A tuple `(patches, header)`. `patches` stacks the normalized pieces of the
        signal along its first axis; `header` records what `synthesize()` needs to
        undo the preprocessing.
        '''
        raise NotImplementedError()

    def synthesize(self, patches: np.ndarray, header: SignalHeader) -> np.ndarray:
        '''Rebuild a signal from generator outputs, one per patch'''
        raise NotImplementedError()

    def rate(self, bits: int, header: SignalHeader, patch_count: int) -> float:
        '''The bitrate of `bits` bits spent on a signal, in `rate_unit`s'''
        raise NotImplementedError()

    def evaluate(self, original: np.ndarray, reconstruction: np.ndarray) -> Dict[str, float]:
        '''Quality metrics of `reconstruction` against `original`, by name'''
        raise NotImplementedError()
