# Eryn Wells <eryn@erynwells.me>

'''
Fixed-weight layers. Every layer knows how to compute its output shape, run
forward while producing a cache, and map a gradient with respect to its output
back to a gradient with respect to its input. Weight gradients are never
computed.

Data layout is channels-first: convolution layers take `(C, H, W)` arrays,
dense layers take flat vectors, and `Reshape` bridges the two.
'''

from enum import IntEnum
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..errors import InputError

Shape = Tuple[int, ...]


class LayerKind(IntEnum):
    '''Kind tags, as stored in model files'''
    DENSE = 1
    CONV2D = 2
    TRANSPOSED_CONV2D = 3
    RELU = 4
    LEAKY_RELU = 5
    TANH = 6
    SIGMOID = 7
    FROZEN_AFFINE_NORM = 8
    RESIDUAL_ADD = 9
    RESHAPE = 10


class ShapeError(InputError):
    '''
    An array shape that doesn't agree with what a layer expects.

    ### Attributes
    `layer_index` : `Optional[int]`
        Position of the offending layer in its model, when known
    '''

    module = 'autodiff'

    def __init__(self, message: str, layer_index: Optional[int] = None):
        if layer_index is not None:
            message = f'layer {layer_index}: {message}'
        super().__init__(message)
        self.layer_index = layer_index


class LayerSpecError(InputError):
    '''Weights or hyperparameters that can't describe a valid layer'''
    module = 'autodiff'


def as_weights(array: Any) -> np.ndarray:
    '''
    Convert `array` to a float64 array whose values are exactly representable as
    IEEE-754 single precision, which is how weights are stored on disk.
    '''
    return np.ascontiguousarray(np.asarray(array, dtype=np.float32).astype(np.float64))


class Layer:
    '''Abstract fixed-weight layer.'''

    kind: LayerKind

    @property
    def weights(self) -> Tuple[np.ndarray, ...]:
        '''The weight arrays of this layer, in storage order'''
        return ()

    def output_shape(self, input_shape: Shape) -> Shape:
        '''Compute the output shape for an input of `input_shape`, raising ShapeError if it isn't accepted.'''
        raise NotImplementedError()

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        '''Apply the layer. Returns the output and a cache for `backward`.'''
        raise NotImplementedError()

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        '''Map the gradient with respect to the output to the gradient with respect to the input.'''
        raise NotImplementedError()

    def __repr__(self):
        return f'{self.__class__.__name__}()'


class Dense(Layer):
    '''y = Wx + b over flat vectors. W has shape `(out_features, in_features)`.'''

    kind = LayerKind.DENSE

    def __init__(self, weight: Any, bias: Optional[Any] = None):
        self.weight = as_weights(weight)
        if self.weight.ndim != 2:
            raise LayerSpecError(f'dense weight must be 2-D, got shape {self.weight.shape}')
        out_features = self.weight.shape[0]
        self.bias = as_weights(bias) if bias is not None else np.zeros(out_features)
        if self.bias.shape != (out_features,):
            raise LayerSpecError(f'dense bias must have shape ({out_features},), got {self.bias.shape}')

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    @property
    def weights(self) -> Tuple[np.ndarray, ...]:
        return (self.weight, self.bias)

    def output_shape(self, input_shape: Shape) -> Shape:
        if tuple(input_shape) != (self.in_features,):
            raise ShapeError(f'dense layer expects ({self.in_features},), got {tuple(input_shape)}')
        return (self.out_features,)

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        return self.weight @ x + self.bias, None

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        return self.weight.T @ grad

    def __repr__(self):
        return f'{self.__class__.__name__}({self.in_features} -> {self.out_features})'


def _conv2d(x: np.ndarray, weight: np.ndarray, stride: int, padding: int) -> np.ndarray:
    '''Cross-correlate `x` of shape (C_in, H, W) with `weight` of shape (C_out, C_in, kh, kw).'''
    _, _, kh, kw = weight.shape
    padded = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return np.einsum('chwij,ocij->ohw', windows, weight, optimize=True)


def _conv2d_adjoint(grad: np.ndarray, weight: np.ndarray, stride: int, padding: int,
                    input_shape: Shape) -> np.ndarray:
    '''The adjoint of `_conv2d` with respect to its input, producing an array of `input_shape`.'''
    channels, height, width = input_shape
    _, _, kh, kw = weight.shape
    out_h, out_w = grad.shape[1:]

    patches = np.einsum('ohw,ocij->chwij', grad, weight, optimize=True)

    padded = np.zeros((channels, height + 2 * padding, width + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            padded[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += patches[:, :, :, i, j]

    return padded[:, padding:padding + height, padding:padding + width]


def _check_conv_hyperparameters(stride: int, padding: int):
    if stride < 1:
        raise LayerSpecError(f'stride must be positive, got {stride}')
    if padding < 0:
        raise LayerSpecError(f'padding must be nonnegative, got {padding}')


class Conv2d(Layer):
    '''
    Two-dimensional cross-correlation with zero padding.

    ### Attributes
    `weight` : `np.ndarray`
        Kernel of shape `(out_channels, in_channels, kh, kw)`
    `bias` : `np.ndarray`
        One value per output channel
    '''

    kind = LayerKind.CONV2D

    def __init__(self, weight: Any, bias: Optional[Any] = None, *, stride: int = 1, padding: int = 0):
        self.weight = as_weights(weight)
        if self.weight.ndim != 4:
            raise LayerSpecError(f'conv2d weight must be 4-D, got shape {self.weight.shape}')
        _check_conv_hyperparameters(stride, padding)
        self.bias = as_weights(bias) if bias is not None else np.zeros(self.weight.shape[0])
        if self.bias.shape != (self.weight.shape[0],):
            raise LayerSpecError(f'conv2d bias must have shape ({self.weight.shape[0]},)')
        self.stride = stride
        self.padding = padding

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel_size(self) -> Tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    @property
    def weights(self) -> Tuple[np.ndarray, ...]:
        return (self.weight, self.bias)

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3 or input_shape[0] != self.in_channels:
            raise ShapeError(f'conv2d expects ({self.in_channels}, H, W), got {tuple(input_shape)}')
        kh, kw = self.kernel_size
        out_h = (input_shape[1] + 2 * self.padding - kh) // self.stride + 1
        out_w = (input_shape[2] + 2 * self.padding - kw) // self.stride + 1
        if out_h < 1 or out_w < 1:
            raise ShapeError(f'conv2d kernel {kh}x{kw} does not fit input {tuple(input_shape)}')
        return (self.out_channels, out_h, out_w)

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        y = _conv2d(x, self.weight, self.stride, self.padding) + self.bias[:, None, None]
        return y, x.shape

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        return _conv2d_adjoint(grad, self.weight, self.stride, self.padding, cache)

    def __repr__(self):
        kh, kw = self.kernel_size
        return (f'{self.__class__.__name__}({self.in_channels} -> {self.out_channels}, '
                f'kernel={kh}x{kw}, stride={self.stride}, padding={self.padding})')


class TransposedConv2d(Layer):
    '''
    The adjoint of `Conv2d` with the same stride and padding, plus a bias.

    The weight has shape `(in_channels, out_channels, kh, kw)`: it is the kernel
    of the convolution that maps this layer's output shape back to its input
    shape. `output_padding` adds rows and columns at the far edge so that every
    output size reachable by a strided convolution can be produced.
    '''

    kind = LayerKind.TRANSPOSED_CONV2D

    def __init__(self, weight: Any, bias: Optional[Any] = None, *,
                 stride: int = 1, padding: int = 0, output_padding: int = 0):
        self.weight = as_weights(weight)
        if self.weight.ndim != 4:
            raise LayerSpecError(f'transposed conv2d weight must be 4-D, got shape {self.weight.shape}')
        _check_conv_hyperparameters(stride, padding)
        if not 0 <= output_padding < stride:
            raise LayerSpecError(f'output padding must be in [0, stride), got {output_padding}')
        self.bias = as_weights(bias) if bias is not None else np.zeros(self.weight.shape[1])
        if self.bias.shape != (self.weight.shape[1],):
            raise LayerSpecError(f'transposed conv2d bias must have shape ({self.weight.shape[1]},)')
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding

    @property
    def in_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> Tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    @property
    def weights(self) -> Tuple[np.ndarray, ...]:
        return (self.weight, self.bias)

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3 or input_shape[0] != self.in_channels:
            raise ShapeError(f'transposed conv2d expects ({self.in_channels}, H, W), got {tuple(input_shape)}')
        kh, kw = self.kernel_size
        out_h = (input_shape[1] - 1) * self.stride - 2 * self.padding + kh + self.output_padding
        out_w = (input_shape[2] - 1) * self.stride - 2 * self.padding + kw + self.output_padding
        if out_h < 1 or out_w < 1:
            raise ShapeError(f'transposed conv2d produces an empty output for input {tuple(input_shape)}')
        return (self.out_channels, out_h, out_w)

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        shape = self.output_shape(x.shape)
        y = _conv2d_adjoint(x, self.weight, self.stride, self.padding, shape)
        return y + self.bias[:, None, None], None

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        return _conv2d(grad, self.weight, self.stride, self.padding)

    def __repr__(self):
        kh, kw = self.kernel_size
        return (f'{self.__class__.__name__}({self.in_channels} -> {self.out_channels}, '
                f'kernel={kh}x{kw}, stride={self.stride}, padding={self.padding})')


class _Elementwise(Layer):
    '''Shape-preserving activation'''

    def output_shape(self, input_shape: Shape) -> Shape:
        return tuple(input_shape)


class ReLU(_Elementwise):
    '''max(x, 0). At 0 the gradient takes the x ≤ 0 branch and is 0.'''

    kind = LayerKind.RELU

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        return np.where(cache, grad, 0.0)


class LeakyReLU(_Elementwise):
    '''
    x for x > 0, slope * x otherwise. At the kink the gradient takes the x ≤ 0
    branch, the one ReLU zeroes, so it is `slope` there.
    '''

    kind = LayerKind.LEAKY_RELU

    def __init__(self, slope: float = 0.2):
        self.slope = float(np.float32(slope))

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        mask = x > 0
        return np.where(mask, x, self.slope * x), mask

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        return np.where(cache, grad, self.slope * grad)

    def __repr__(self):
        return f'{self.__class__.__name__}(slope={self.slope})'


class Tanh(_Elementwise):
    kind = LayerKind.TANH

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        y = np.tanh(x)
        return y, y

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        return grad * (1.0 - cache * cache)


class Sigmoid(_Elementwise):
    kind = LayerKind.SIGMOID

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        y = expit(x)
        return y, y

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        return grad * cache * (1.0 - cache)


class FrozenAffineNorm(Layer):
    '''
    A normalization layer with frozen statistics: `scale[c] * x + shift[c]` per
    channel, where the channel axis is the first axis of the input.
    '''

    kind = LayerKind.FROZEN_AFFINE_NORM

    def __init__(self, scale: Any, shift: Any):
        self.scale = as_weights(scale)
        self.shift = as_weights(shift)
        if self.scale.ndim != 1 or self.scale.shape != self.shift.shape:
            raise LayerSpecError('affine norm scale and shift must be 1-D arrays of equal length')
        if np.any(self.scale == 0):
            raise LayerSpecError('affine norm scale entries must be nonzero')

    @property
    def channels(self) -> int:
        return self.scale.shape[0]

    @property
    def weights(self) -> Tuple[np.ndarray, ...]:
        return (self.scale, self.shift)

    def _broadcast(self, values: np.ndarray, ndim: int) -> np.ndarray:
        return values.reshape((self.channels,) + (1,) * (ndim - 1))

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) < 1 or input_shape[0] != self.channels:
            raise ShapeError(f'affine norm expects {self.channels} channels, got {tuple(input_shape)}')
        return tuple(input_shape)

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        return self._broadcast(self.scale, x.ndim) * x + self._broadcast(self.shift, x.ndim), None

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        return self._broadcast(self.scale, grad.ndim) * grad


class Residual(Layer):
    '''A residual block: `x + f(x)`, where `f` is a chain of inner layers that preserves shape.'''

    kind = LayerKind.RESIDUAL_ADD

    def __init__(self, layers: Sequence[Layer]):
        self.layers: List[Layer] = list(layers)
        if not self.layers:
            raise LayerSpecError('residual block needs at least one inner layer')

    def output_shape(self, input_shape: Shape) -> Shape:
        shape = tuple(input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if shape != tuple(input_shape):
            raise ShapeError(f'residual branch maps {tuple(input_shape)} to {shape}')
        return shape

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        caches = []
        h = x
        for layer in self.layers:
            h, cache = layer.forward(h)
            caches.append(cache)
        return x + h, caches

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        inner = grad
        for layer, layer_cache in zip(reversed(self.layers), reversed(cache)):
            inner = layer.backward(inner, layer_cache)
        return grad + inner

    def __repr__(self):
        return f'{self.__class__.__name__}({self.layers!r})'


class Reshape(Layer):
    '''Reinterpret the input with a new shape of the same size'''

    kind = LayerKind.RESHAPE

    def __init__(self, shape: Sequence[int]):
        self.shape: Shape = tuple(int(d) for d in shape)
        if not self.shape or any(d < 1 for d in self.shape):
            raise LayerSpecError(f'invalid reshape target {self.shape}')

    def output_shape(self, input_shape: Shape) -> Shape:
        if int(np.prod(input_shape)) != int(np.prod(self.shape)):
            raise ShapeError(f'cannot reshape {tuple(input_shape)} to {self.shape}')
        return self.shape

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Any]:
        return x.reshape(self.shape), x.shape

    def backward(self, grad: np.ndarray, cache: Any) -> np.ndarray:
        return grad.reshape(cache)

    def __repr__(self):
        return f'{self.__class__.__name__}({self.shape})'


def infer_shapes(layers: Sequence[Layer], input_shape: Shape) -> List[Shape]:
    '''
    Chain shapes through `layers`.

    ### Returns
    A list of `len(layers) + 1` shapes: the input shape followed by each layer's output shape

    ### Raises
    `ShapeError` naming the index of the first layer that rejects its input
    '''
    shapes = [tuple(input_shape)]
    for index, layer in enumerate(layers):
        try:
            shapes.append(layer.output_shape(shapes[-1]))
        except ShapeError as error:
            raise ShapeError(error.message, layer_index=index) from error
    return shapes
