# Eryn Wells <eryn@erynwells.me>

'''
The `.bpgm` weight file format. See docs/formats.md for the byte layout.

All integers are little-endian; weights are IEEE-754 single precision; the file
ends with the 64-bit FNV-1a digest of everything before it, which doubles as
the model identifier.
'''

import struct
from os import PathLike
from typing import List, Tuple, Union

import numpy as np

from .. import log
from ..autodiff.layers import (
    Conv2d,
    Dense,
    FrozenAffineNorm,
    Layer,
    LayerKind,
    LayerSpecError,
    LeakyReLU,
    ReLU,
    Reshape,
    Residual,
    ShapeError,
    Sigmoid,
    Tanh,
    TransposedConv2d)
from ..binary import ByteReader, TruncatedDataError, fnv1a64
from ..errors import FormatError, InputError
from . import GeneratorModel

MAGIC = b'BPGM'
VERSION = 1


class ModelFormatError(FormatError):
    '''A byte sequence that isn't a valid model file'''
    module = 'model'


class BadMagicError(ModelFormatError):
    pass


class UnsupportedVersionError(ModelFormatError):
    pass


class ShapeChainError(ModelFormatError):
    pass


class DigestMismatchError(ModelFormatError):
    pass


def _weight_blob(*arrays: np.ndarray) -> bytes:
    return b''.join(np.ascontiguousarray(a, dtype='<f4').tobytes() for a in arrays)


def _encode_layer(layer: Layer) -> bytes:
    match layer:
        case Dense():
            hyper = struct.pack('<II', layer.in_features, layer.out_features)
            blob = _weight_blob(layer.weight, layer.bias)
        case Conv2d():
            kh, kw = layer.kernel_size
            hyper = struct.pack('<HHBBBB', layer.in_channels, layer.out_channels, kh, kw,
                                layer.stride, layer.padding)
            blob = _weight_blob(layer.weight, layer.bias)
        case TransposedConv2d():
            kh, kw = layer.kernel_size
            hyper = struct.pack('<HHBBBBB', layer.in_channels, layer.out_channels, kh, kw,
                                layer.stride, layer.padding, layer.output_padding)
            blob = _weight_blob(layer.weight, layer.bias)
        case LeakyReLU():
            hyper = struct.pack('<f', layer.slope)
            blob = b''
        case FrozenAffineNorm():
            hyper = struct.pack('<I', layer.channels)
            blob = _weight_blob(layer.scale, layer.shift)
        case Residual():
            header = struct.pack('<BHQ', layer.kind, len(layer.layers), 0)
            return header + b''.join(_encode_layer(inner) for inner in layer.layers)
        case Reshape():
            hyper = struct.pack(f'<B{len(layer.shape)}I', len(layer.shape), *layer.shape)
            blob = b''
        case ReLU() | Tanh() | Sigmoid():
            hyper = b''
            blob = b''
        case _:
            raise InputError(f'cannot serialize layer {layer!r}', module='model')

    return struct.pack('<B', layer.kind) + hyper + struct.pack('<Q', len(blob)) + blob


def save_model(model: GeneratorModel) -> bytes:
    '''Serialize `model` into `.bpgm` bytes.'''
    try:
        body = b''.join([
            MAGIC,
            struct.pack('<BH', VERSION, len(model.layers)),
            struct.pack(f'<B{len(model.input_shape)}I', len(model.input_shape), *model.input_shape),
        ] + [_encode_layer(layer) for layer in model.layers])
    except struct.error as error:
        raise InputError(f'model does not fit the container format: {error}', module='model') from error
    return body + fnv1a64(body)


def _read_weights(reader: ByteReader, *shapes: Tuple[int, ...]) -> List[np.ndarray]:
    blob_length = reader.u64()
    expected = 4 * sum(int(np.prod(shape)) for shape in shapes)
    if blob_length != expected:
        raise ModelFormatError(
            f'weight blob at offset {reader.offset - 8} is {blob_length} bytes, expected {expected}')
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        raw = reader.take(4 * count)
        arrays.append(np.frombuffer(raw, dtype='<f4').astype(np.float64).reshape(shape))
    return arrays


def _decode_layer(reader: ByteReader) -> Layer:
    offset = reader.offset
    tag = reader.u8()
    try:
        kind = LayerKind(tag)
    except ValueError as error:
        raise ModelFormatError(f'unknown layer kind {tag} at offset {offset}') from error

    match kind:
        case LayerKind.DENSE:
            in_features, out_features = reader.unpack('II')
            weight, bias = _read_weights(reader, (out_features, in_features), (out_features,))
            return Dense(weight, bias)
        case LayerKind.CONV2D:
            in_ch, out_ch, kh, kw, stride, padding = reader.unpack('HHBBBB')
            weight, bias = _read_weights(reader, (out_ch, in_ch, kh, kw), (out_ch,))
            return Conv2d(weight, bias, stride=stride, padding=padding)
        case LayerKind.TRANSPOSED_CONV2D:
            in_ch, out_ch, kh, kw, stride, padding, output_padding = reader.unpack('HHBBBBB')
            weight, bias = _read_weights(reader, (in_ch, out_ch, kh, kw), (out_ch,))
            return TransposedConv2d(weight, bias, stride=stride, padding=padding, output_padding=output_padding)
        case LayerKind.LEAKY_RELU:
            slope = reader.f32()
            _read_weights(reader)
            return LeakyReLU(slope)
        case LayerKind.FROZEN_AFFINE_NORM:
            channels = reader.u32()
            scale, shift = _read_weights(reader, (channels,), (channels,))
            return FrozenAffineNorm(scale, shift)
        case LayerKind.RESIDUAL_ADD:
            count = reader.u16()
            _read_weights(reader)
            return Residual([_decode_layer(reader) for _ in range(count)])
        case LayerKind.RESHAPE:
            rank = reader.u8()
            shape = reader.unpack(f'{rank}I')
            _read_weights(reader)
            return Reshape(shape)
        case LayerKind.RELU:
            _read_weights(reader)
            return ReLU()
        case LayerKind.TANH:
            _read_weights(reader)
            return Tanh()
        case LayerKind.SIGMOID:
            _read_weights(reader)
            return Sigmoid()

    raise ModelFormatError(f'unhandled layer kind {kind!r}')


def load_model(data: bytes) -> GeneratorModel:
    '''
    Parse `.bpgm` bytes.

    ### Raises
    `BadMagicError`, `UnsupportedVersionError`, `DigestMismatchError` (also for
    truncated input), `ShapeChainError`, or `ModelFormatError` for any other
    malformed field
    '''
    data = bytes(data)
    if data[:4] != MAGIC:
        raise BadMagicError(f'bad magic {data[:4]!r}, expected {MAGIC!r}')
    if len(data) < 5:
        raise DigestMismatchError('model file truncated after magic')
    if data[4] != VERSION:
        raise UnsupportedVersionError(f'unsupported model format version {data[4]}')
    if len(data) < 4 + 1 + 2 + 8 or fnv1a64(data[:-8]) != data[-8:]:
        raise DigestMismatchError('model digest does not match its contents')

    reader = ByteReader(data[:-8], offset=5)
    try:
        layer_count = reader.u16()
        rank = reader.u8()
        input_shape = reader.unpack(f'{rank}I')
        layers = [_decode_layer(reader) for _ in range(layer_count)]
    except TruncatedDataError as error:
        raise ModelFormatError(f'model file truncated: {error}') from error
    except LayerSpecError as error:
        raise ModelFormatError(f'invalid layer: {error.message}') from error

    if reader.remaining:
        raise ModelFormatError(f'{reader.remaining} unexpected bytes at offset {reader.offset}')

    try:
        model = GeneratorModel(layers, input_shape)
    except ShapeError as error:
        raise ShapeChainError(f'layer shapes do not chain: {error.message}') from error

    log.MODEL.info('Loaded model %s with %d layers', data[-8:].hex(), layer_count)
    return model


def read_model_file(path: Union[str, PathLike]) -> GeneratorModel:
    '''Load a model from a `.bpgm` file'''
    try:
        with open(path, 'rb') as model_file:
            data = model_file.read()
    except OSError as error:
        raise InputError(f'cannot read model file {path}: {error.strerror}', module='model') from error
    return load_model(data)


def write_model_file(path: Union[str, PathLike], model: GeneratorModel):
    '''Write a model to a `.bpgm` file'''
    try:
        with open(path, 'wb') as model_file:
            model_file.write(model.to_bytes())
    except OSError as error:
        raise InputError(f'cannot write model file {path}: {error.strerror}', module='model') from error
