# Eryn Wells <eryn@erynwells.me>

'''
Seeded synthetic networks with known structure.

Synthetic generators stand in for trained ones in tests and benchmarks. The
orthonormal-linear generator has the closed-form unconstrained optimum
z* = Aᵀx for the MSE objective, which makes it the reference instance for
everything downstream.
'''

from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np
import scipy.fft

from ..autodiff.layers import Conv2d, Dense, Layer, LeakyReLU, Reshape, Tanh
from ..errors import InputError
from . import GeneratorModel


class SyntheticSpecError(InputError):
    '''A synthetic model whose dimensions can't be satisfied'''
    module = 'model'


class SyntheticKind(Enum):
    '''Kinds of synthetic generator'''
    ORTHONORMAL_LINEAR = 'orthonormal-linear'
    DCT_DECODER = 'dct-decoder'
    RANDOM_MLP = 'random-mlp'


@dataclass(frozen=True)
class SyntheticModelSpec:
    '''
    Everything needed to construct a synthetic generator.

    ### Attributes
    `kind` : `SyntheticKind`
        Which construction to use
    `latent_dim` : `int`
        Dimension of the latent vector
    `signal_shape` : `Tuple[int, ...]`
        Shape of the generator output
    `depth` : `int`
        Number of dense layers of a random MLP. A depth of 1 is a random linear map.
    `width` : `int`
        Hidden layer width of a random MLP
    `seed` : `int`
        Seed for every random draw
    '''

    kind: SyntheticKind
    latent_dim: int
    signal_shape: Tuple[int, ...]
    depth: int = 2
    width: int = 32
    seed: int = 0

    @property
    def signal_size(self) -> int:
        return int(np.prod(self.signal_shape))


def _output_layers(weight: np.ndarray, signal_shape: Sequence[int]) -> List[Layer]:
    layers: List[Layer] = [Dense(weight)]
    if len(signal_shape) > 1:
        layers.append(Reshape(signal_shape))
    return layers


def orthonormal_matrix(rows: int, columns: int, seed: int) -> np.ndarray:
    '''A `rows`×`columns` matrix with orthonormal columns, drawn from the Haar distribution.'''
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((rows, columns)))
    return q * np.sign(np.diag(r))


def dct_basis(size: int, count: int) -> np.ndarray:
    '''The first `count` orthonormal type-II DCT basis vectors of length `size`, as columns.'''
    return scipy.fft.dct(np.eye(size), type=2, norm='ortho', axis=0)[:count].T


def make_synthetic(spec: SyntheticModelSpec) -> GeneratorModel:
    '''
    Build the generator described by `spec`. The result is a pure function of
    `spec`.
    '''
    kind = SyntheticKind(spec.kind)
    latent_dim = spec.latent_dim
    signal_size = spec.signal_size

    if latent_dim < 1 or signal_size < 1:
        raise SyntheticSpecError(f'latent dimension {latent_dim} and signal size {signal_size} must be positive')

    match kind:
        case SyntheticKind.ORTHONORMAL_LINEAR:
            if signal_size < latent_dim:
                raise SyntheticSpecError(
                    f'orthonormal-linear needs signal size >= latent dimension, got {signal_size} < {latent_dim}')
            layers = _output_layers(orthonormal_matrix(signal_size, latent_dim, spec.seed), spec.signal_shape)
        case SyntheticKind.DCT_DECODER:
            if signal_size < latent_dim:
                raise SyntheticSpecError(
                    f'dct-decoder needs signal size >= latent dimension, got {signal_size} < {latent_dim}')
            layers = _output_layers(dct_basis(signal_size, latent_dim), spec.signal_shape)
        case SyntheticKind.RANDOM_MLP:
            if spec.depth < 1 or spec.width < 1:
                raise SyntheticSpecError(f'random-mlp needs positive depth and width, got {spec.depth}, {spec.width}')
            rng = np.random.default_rng(spec.seed)
            sizes = [latent_dim] + [spec.width] * (spec.depth - 1) + [signal_size]
            layers = []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                if layers:
                    layers.append(Tanh())
                weight = rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)
                bias = 0.1 * rng.standard_normal(fan_out)
                layers.append(Dense(weight, bias))
            if len(spec.signal_shape) > 1:
                layers.append(Reshape(spec.signal_shape))

    return GeneratorModel(layers, (latent_dim,))


def pseudo_inverse_encoder(generator: GeneratorModel) -> GeneratorModel:
    '''
    The exact least-squares encoder of an affine generator, one made of a single
    dense layer optionally followed by a reshape: E(x) = A⁺(x − b).
    '''
    dense = [layer for layer in generator.layers if isinstance(layer, Dense)]
    others = [layer for layer in generator.layers if not isinstance(layer, (Dense, Reshape))]
    if len(dense) != 1 or others or not isinstance(generator.layers[0], Dense):
        raise SyntheticSpecError('pseudo-inverse encoders exist only for single dense layer generators')

    pinv = np.linalg.pinv(dense[0].weight)
    layers: List[Layer] = []
    if len(generator.output_shape) > 1:
        layers.append(Reshape((generator.output_size,)))
    layers.append(Dense(pinv, -pinv @ dense[0].bias))
    return GeneratorModel(layers, generator.output_shape)


def linear_discriminator(signal_shape: Sequence[int], seed: int, scale: float = 1.0) -> GeneratorModel:
    '''A discriminator that scores a signal with a fixed random linear functional.'''
    size = int(np.prod(signal_shape))
    rng = np.random.default_rng(seed)
    weight = scale * rng.standard_normal((1, size)) / np.sqrt(size)
    layers: List[Layer] = []
    if len(signal_shape) > 1:
        layers.append(Reshape((size,)))
    layers.append(Dense(weight))
    return GeneratorModel(layers, signal_shape)


def conv_feature_network(signal_shape: Sequence[int], seed: int,
                         channels: int = 4, depth: int = 2, kernel_size: int = 3) -> GeneratorModel:
    '''
    A random convolutional feature extractor over `(C, H, W)` signals. A 2-D
    signal shape is treated as a single channel.
    '''
    shape = tuple(int(d) for d in signal_shape)
    layers: List[Layer] = []
    if len(shape) == 2:
        layers.append(Reshape((1,) + shape))
        shape = (1,) + shape
    if len(shape) != 3:
        raise SyntheticSpecError(f'feature networks take 2-D or 3-D signals, got shape {shape}')

    rng = np.random.default_rng(seed)
    in_channels = shape[0]
    for index in range(depth):
        if index:
            layers.append(LeakyReLU(0.2))
        fan_in = in_channels * kernel_size * kernel_size
        weight = rng.standard_normal((channels, in_channels, kernel_size, kernel_size)) / np.sqrt(fan_in)
        layers.append(Conv2d(weight, np.zeros(channels), stride=1, padding=kernel_size // 2))
        in_channels = channels

    return GeneratorModel(layers, tuple(int(d) for d in signal_shape))
