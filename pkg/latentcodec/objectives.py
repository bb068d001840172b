# Eryn Wells <eryn@erynwells.me>

'''
Compression objectives F(x, G(z)).

Every objective here is a function of the target signal `x` and the generator
output `y`, and knows its own gradient with respect to `y`. `evaluate()` chains
that gradient through the generator to get the gradient with respect to the
latent vector.
'''

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.signal

from . import log
from .autodiff import backward_input, forward
from .autodiff.layers import Conv2d
from .errors import InputError
from .model import GeneratorModel


class ObjectiveError(InputError):
    '''Inputs an objective can't be evaluated on'''
    module = 'objectives'


Gradient = np.ndarray
ValueAndGradient = Tuple[float, Gradient]


def _check_shapes(x: np.ndarray, y: np.ndarray):
    if x.shape != y.shape:
        raise ObjectiveError(f'signal shapes differ: {x.shape} and {y.shape}')


def mse_and_gradient(x: np.ndarray, y: np.ndarray) -> ValueAndGradient:
    '''Mean squared error and its gradient with respect to `y`'''
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_shapes(x, y)
    difference = y - x
    return float(np.mean(difference * difference)), 2.0 * difference / difference.size


def mse(x: np.ndarray, y: np.ndarray) -> float:
    '''Mean over all elements of the squared difference'''
    return mse_and_gradient(x, y)[0]


# MS-SSIM

@dataclass
class ImageObjectiveConfig:
    '''
    Parameters of the image objective: −D(G(z)) + λ₃·(MS-SSIM loss + γ·MSE).

    ### Attributes
    `kind` : `str`
        `combined` for the full objective, `mse` for plain MSE
    `lambda3` : `float`
        Weight of the distortion term
    `gamma` : `float`
        Weight of MSE inside the distortion term
    `msssim_scales` : `int`
        Number of MS-SSIM scales
    `data_range` : `float`
        Dynamic range L of the signal, 2 for signals in [−1, 1]
    `use_discriminator` : `bool`
        Include the −D(G(z)) term
    `discriminator` : `Optional[GeneratorModel]`
        The discriminator, which takes a signal and produces a single score
    '''

    kind: str = 'combined'
    lambda3: float = 1.0
    gamma: float = 0.1
    msssim_scales: int = 5
    data_range: float = 2.0
    k1: float = 0.01
    k2: float = 0.03
    window_size: int = 11
    window_sigma: float = 1.5
    use_discriminator: bool = False
    discriminator: Optional[GeneratorModel] = None

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2

    @property
    def minimum_size(self) -> int:
        '''Smallest image side MS-SSIM accepts with this many scales'''
        return 2 ** (self.msssim_scales - 1) * self.window_size


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    '''A normalized 2-D Gaussian window'''
    window = scipy.signal.windows.gaussian(size, std=sigma)
    window = np.outer(window, window)
    return window / window.sum()


def _as_channels(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    match image.ndim:
        case 2:
            return image[np.newaxis]
        case 3:
            return image
        case _:
            raise ObjectiveError(f'MS-SSIM takes (H, W) or (C, H, W) images, got shape {image.shape}')


def _downsample(image: np.ndarray) -> np.ndarray:
    channels, height, width = image.shape
    h, w = height // 2, width // 2
    return image[:, :2 * h, :2 * w].reshape(channels, h, 2, w, 2).mean(axis=(2, 4))


def _downsample_adjoint(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    upsampled = np.repeat(np.repeat(grad, 2, axis=1), 2, axis=2) / 4.0
    result = np.zeros(shape)
    result[:, :upsampled.shape[1], :upsampled.shape[2]] = upsampled
    return result


class _ScaleStatistics:
    '''Local statistics of one MS-SSIM scale and what's needed to differentiate them'''

    def __init__(self, x: np.ndarray, y: np.ndarray, window: np.ndarray, c1: float, c2: float):
        self.x = x
        self.y = y
        self.window = window

        mu_x = self._filter(x)
        mu_y = self._filter(y)
        sigma_xx = self._filter(x * x) - mu_x * mu_x
        sigma_yy = self._filter(y * y) - mu_y * mu_y
        sigma_xy = self._filter(x * y) - mu_x * mu_y

        self.mu_x = mu_x
        self.mu_y = mu_y
        self.luminance_denominator = mu_x * mu_x + mu_y * mu_y + c1
        self.luminance_numerator = 2.0 * mu_x * mu_y + c1
        self.contrast_denominator = sigma_xx + sigma_yy + c2
        self.contrast_numerator = 2.0 * sigma_xy + c2

        self.luminance = self.luminance_numerator / self.luminance_denominator
        self.contrast_structure = self.contrast_numerator / self.contrast_denominator

    def _filter(self, image: np.ndarray) -> np.ndarray:
        return scipy.signal.convolve(image, self.window[np.newaxis], mode='valid')

    def _filter_adjoint(self, grad: np.ndarray) -> np.ndarray:
        return scipy.signal.convolve(grad, self.window[np.newaxis], mode='full')

    def luminance_gradient(self, weight: float) -> np.ndarray:
        '''Gradient with respect to y of `weight` times the mean luminance term'''
        d_mu_y = weight / self.luminance.size * (
            2.0 * self.mu_x * self.luminance_denominator
            - self.luminance_numerator * 2.0 * self.mu_y) / self.luminance_denominator ** 2
        return self._filter_adjoint(d_mu_y)

    def contrast_structure_gradient(self, weight: float) -> np.ndarray:
        '''Gradient with respect to y of `weight` times the mean contrast-structure term'''
        scale = weight / self.contrast_structure.size
        denominator = self.contrast_denominator
        numerator = self.contrast_numerator

        d_e_xy = scale * 2.0 / denominator
        d_e_yy = -scale * numerator / denominator ** 2
        d_mu_y = -d_e_xy * self.mu_x - 2.0 * d_e_yy * self.mu_y

        return (self.x * self._filter_adjoint(d_e_xy)
                + 2.0 * self.y * self._filter_adjoint(d_e_yy)
                + self._filter_adjoint(d_mu_y))


def _msssim(x: np.ndarray, y: np.ndarray, cfg: ImageObjectiveConfig,
            with_gradient: bool) -> Tuple[float, Optional[np.ndarray]]:
    x = _as_channels(x)
    y = _as_channels(y)
    _check_shapes(x, y)

    scales = cfg.msssim_scales
    if scales < 1:
        raise ObjectiveError(f'MS-SSIM needs at least one scale, got {scales}')
    if min(x.shape[1:]) < cfg.minimum_size:
        raise ObjectiveError(
            f'image of size {x.shape[2]}x{x.shape[1]} is too small for {scales} MS-SSIM scales; '
            f'each side must be at least {cfg.minimum_size}')

    window = gaussian_window(cfg.window_size, cfg.window_sigma)

    statistics: List[_ScaleStatistics] = []
    xs, ys = x, y
    for scale in range(scales):
        if scale:
            xs, ys = _downsample(xs), _downsample(ys)
        statistics.append(_ScaleStatistics(xs, ys, window, cfg.c1, cfg.c2))

    # Per-scale means are clamped at zero so the index stays in [0, 1].
    factors = [max(float(np.mean(s.contrast_structure)), 0.0) for s in statistics]
    factors.append(max(float(np.mean(statistics[-1].luminance)), 0.0))
    index = float(np.prod(factors))

    if not with_gradient:
        return index, None

    def product_without(skip: int) -> float:
        return float(np.prod([f for i, f in enumerate(factors) if i != skip]))

    grad = np.zeros_like(statistics[-1].y)
    for scale in reversed(range(scales)):
        stats = statistics[scale]
        if scale < scales - 1:
            grad = _downsample_adjoint(grad, stats.y.shape)
        if factors[scale] > 0:
            grad = grad + stats.contrast_structure_gradient(product_without(scale))
        if scale == scales - 1 and factors[-1] > 0:
            grad = grad + stats.luminance_gradient(product_without(len(factors) - 1))

    return index, grad


def msssim(x: np.ndarray, y: np.ndarray, cfg: Optional[ImageObjectiveConfig] = None) -> float:
    '''
    Multi-scale structural similarity of two images, in [0, 1].

    Local statistics come from a Gaussian window applied in valid mode;
    consecutive scales are related by 2×2 average pooling. The index is the mean
    luminance term of the coarsest scale times the mean contrast-structure terms
    of every scale, all exponents 1.
    '''
    return _msssim(x, y, cfg or ImageObjectiveConfig(), with_gradient=False)[0]


def msssim_loss_and_gradient(x: np.ndarray, y: np.ndarray, cfg: ImageObjectiveConfig) -> ValueAndGradient:
    '''1 − MS-SSIM and its gradient with respect to `y`'''
    index, grad = _msssim(x, y, cfg, with_gradient=True)
    grad = np.reshape(grad, np.shape(y))
    return 1.0 - index, -grad


# Network-based terms

def discriminator_term_and_gradient(discriminator: GeneratorModel, y: np.ndarray) -> ValueAndGradient:
    '''−D(y) and its gradient with respect to `y`'''
    y = np.asarray(y, dtype=np.float64)
    if y.shape != discriminator.input_shape:
        raise ObjectiveError(f'discriminator takes {discriminator.input_shape}, signal is {y.shape}')
    if discriminator.output_size != 1:
        raise ObjectiveError(f'discriminator must produce one score, produces {discriminator.output_shape}')

    score, tape = forward(discriminator, y)
    value = -float(score.reshape(()))
    tape.close(value, output_gradient=-np.ones_like(score))
    return value, backward_input(tape)


def discriminator_term(discriminator: GeneratorModel, y: np.ndarray) -> float:
    '''The adversarial term −D(y)'''
    return discriminator_term_and_gradient(discriminator, y)[0]


@dataclass
class SpeechObjectiveConfig:
    '''
    Parameters of the speech objective: feature loss + λ₄·MSE.

    ### Attributes
    `kind` : `str`
        `combined` for the full objective, `feature` for feature loss alone, `mse` for plain MSE
    `lambda4` : `float`
        Weight of the MSE term
    `feature_net` : `Optional[GeneratorModel]`
        Network whose convolution activations are compared
    `feature_layer_indices` : `List[int]`
        Positions of the compared convolution layers. Empty means every convolution layer.
    '''

    kind: str = 'combined'
    lambda4: float = 10.0
    feature_net: Optional[GeneratorModel] = None
    feature_layer_indices: List[int] = field(default_factory=list)

    def resolved_layer_indices(self) -> List[int]:
        '''The configured feature layers, checked against the feature network'''
        if self.feature_net is None:
            raise ObjectiveError('speech objective needs a feature network')
        layers = self.feature_net.layers
        indices = self.feature_layer_indices or self.feature_net.conv_layer_indices
        for index in indices:
            if not 0 <= index < len(layers):
                raise ObjectiveError(f'feature layer index {index} out of range for {len(layers)} layers')
            if not isinstance(layers[index], Conv2d):
                raise ObjectiveError(f'feature layer {index} is {layers[index]!r}, not a convolution')
        if not indices:
            raise ObjectiveError('feature network has no convolution layers')
        return list(indices)


def feature_loss_and_gradient(x: np.ndarray, y: np.ndarray, cfg: SpeechObjectiveConfig) -> ValueAndGradient:
    '''
    Sum over the configured convolution layers of the mean squared distance
    between the activations of `x` and `y`, with its gradient with respect to `y`.
    '''
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_shapes(x, y)
    indices = cfg.resolved_layer_indices()

    _, x_tape = forward(cfg.feature_net, x)
    _, y_tape = forward(cfg.feature_net, y)

    value = 0.0
    node_gradients = {}
    for index in indices:
        term, grad = mse_and_gradient(x_tape.activation(index), y_tape.activation(index))
        value += term
        node_gradients[index] = grad

    y_tape.close(value, node_gradients=node_gradients)
    return value, backward_input(y_tape)


def feature_loss(x: np.ndarray, y: np.ndarray, cfg: SpeechObjectiveConfig) -> float:
    return feature_loss_and_gradient(x, y, cfg)[0]


# Composite objectives

class SignalObjective:
    '''Abstract objective F(x, y) over target signal `x` and generator output `y`.'''

    def value_and_gradient(self, x: np.ndarray, y: np.ndarray) -> ValueAndGradient:
        '''The objective value and its gradient with respect to `y`'''
        raise NotImplementedError()

    def __call__(self, x: np.ndarray, y: np.ndarray) -> float:
        return self.value_and_gradient(x, y)[0]

    def evaluate(self, x: np.ndarray, z: np.ndarray, generator: GeneratorModel) -> ValueAndGradient:
        '''
        Evaluate F(x, G(z)).

        ### Returns
        The objective value and its gradient with respect to `z`
        '''
        y, tape = forward(generator, z)
        value, grad_y = self.value_and_gradient(x, y)
        tape.close(value, output_gradient=grad_y)
        return value, backward_input(tape)


class MseObjective(SignalObjective):
    '''Plain mean squared error'''

    def value_and_gradient(self, x: np.ndarray, y: np.ndarray) -> ValueAndGradient:
        return mse_and_gradient(x, y)

    def __repr__(self):
        return f'{self.__class__.__name__}()'


class ImageObjective(SignalObjective):
    '''−D(y) + λ₃·(1 − MS-SSIM(x, y) + γ·MSE(x, y)), the discriminator term only when enabled'''

    def __init__(self, cfg: ImageObjectiveConfig):
        if cfg.kind not in ('combined', 'mse'):
            raise ObjectiveError(f'unknown image objective kind {cfg.kind!r}')
        if cfg.use_discriminator and cfg.discriminator is None:
            raise ObjectiveError('image objective is configured to use a discriminator but none was given')
        self.cfg = cfg
        log.OBJECTIVES.debug('Configured %r', self)

    def value_and_gradient(self, x: np.ndarray, y: np.ndarray) -> ValueAndGradient:
        cfg = self.cfg
        if cfg.kind == 'mse':
            return mse_and_gradient(x, y)

        msssim_value, msssim_grad = msssim_loss_and_gradient(x, y, cfg)
        mse_value, mse_grad = mse_and_gradient(x, y)
        value = cfg.lambda3 * (msssim_value + cfg.gamma * mse_value)
        grad = cfg.lambda3 * (msssim_grad + cfg.gamma * mse_grad)

        if cfg.use_discriminator:
            adversarial_value, adversarial_grad = discriminator_term_and_gradient(cfg.discriminator, y)
            value += adversarial_value
            grad = grad + adversarial_grad

        return value, grad

    def __repr__(self):
        return f'{self.__class__.__name__}({self.cfg.kind}, lambda3={self.cfg.lambda3}, gamma={self.cfg.gamma})'


class SpeechObjective(SignalObjective):
    '''Feature loss + λ₄·MSE(x, y)'''

    def __init__(self, cfg: SpeechObjectiveConfig):
        if cfg.kind not in ('combined', 'feature', 'mse'):
            raise ObjectiveError(f'unknown speech objective kind {cfg.kind!r}')
        if cfg.kind != 'mse':
            cfg.resolved_layer_indices()
        self.cfg = cfg
        log.OBJECTIVES.debug('Configured %r', self)

    def value_and_gradient(self, x: np.ndarray, y: np.ndarray) -> ValueAndGradient:
        cfg = self.cfg
        match cfg.kind:
            case 'mse':
                return mse_and_gradient(x, y)
            case 'feature':
                return feature_loss_and_gradient(x, y, cfg)

        feature_value, feature_grad = feature_loss_and_gradient(x, y, cfg)
        mse_value, mse_grad = mse_and_gradient(x, y)
        return feature_value + cfg.lambda4 * mse_value, feature_grad + cfg.lambda4 * mse_grad

    def __repr__(self):
        return f'{self.__class__.__name__}({self.cfg.kind}, lambda4={self.cfg.lambda4})'


def image_objective(x: np.ndarray, z: np.ndarray, generator: GeneratorModel, cfg: ImageObjectiveConfig) -> float:
    return ImageObjective(cfg).evaluate(x, z, generator)[0]


def speech_objective(x: np.ndarray, z: np.ndarray, generator: GeneratorModel, cfg: SpeechObjectiveConfig) -> float:
    return SpeechObjective(cfg).evaluate(x, z, generator)[0]

