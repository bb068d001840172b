# Eryn Wells <eryn@erynwells.me>

'''
The `.bpgc` compressed signal container. See docs/formats.md for the byte
layout.

Parsing checks every field in file order and the digest last, and every
failure is a `ContainerError` that names the field and its byte offset.
'''

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Union

import numpy as np

from .. import log
from ..binary import ByteReader, TruncatedDataError, fnv1a64
from ..errors import CodecError, FormatError, InputError
from ..quantization import Codebook
from .huffman import BitstreamError, HuffmanTable, decode, encode

MAGIC = b'BPGC'
VERSION = 1
MODEL_ID_SIZE = 8
DIGEST_SIZE = 8


class ContainerError(FormatError):
    '''
    A malformed container.

    ### Attributes
    `field` : `str`
        Name of the offending field
    `offset` : `int`
        Byte offset at which the field starts
    '''

    module = 'entropy'

    def __init__(self, field: str, offset: int, message: str):
        super().__init__(f'{field} at offset {offset}: {message}')
        self.field = field
        self.offset = offset


class SignalType(IntEnum):
    IMAGE = 1
    SPEECH = 2


class CodingMode(IntEnum):
    '''How symbol indices are coded: Huffman, or fixed ceil(log2 K) bits each'''
    HUFFMAN = 0
    FIXED = 1


def _require(condition: bool, field: str, offset: int, message: str):
    if not condition:
        raise ContainerError(field, offset, message)


@dataclass(frozen=True)
class ImageHeader:
    '''Geometry of a compressed image: its original size and the size the generator works at'''

    width: int
    height: int
    channels: int
    target_width: int
    target_height: int

    FORMAT = '<IIBII'

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def to_bytes(self) -> bytes:
        return struct.pack(self.FORMAT, self.width, self.height, self.channels,
                           self.target_width, self.target_height)

    @classmethod
    def from_bytes(cls, data: bytes, offset: int) -> 'ImageHeader':
        _require(len(data) == struct.calcsize(cls.FORMAT), 'metadata', offset,
                 f'image metadata is {len(data)} bytes, expected {struct.calcsize(cls.FORMAT)}')
        header = cls(*struct.unpack(cls.FORMAT, data))
        _require(min(header.width, header.height, header.target_width, header.target_height) > 0,
                 'metadata', offset, 'image dimensions must be positive')
        _require(header.channels in (1, 3), 'metadata', offset, f'unsupported channel count {header.channels}')
        return header


@dataclass(frozen=True)
class SpeechHeader:
    '''Analysis parameters of a compressed utterance and what's needed to undo normalization'''

    sample_rate: int
    frame_size: int
    stride: int
    mel_bins: int
    patch_frames: int
    dynamic_range: float
    sample_count: int
    gain: float

    FORMAT = '<IHHHHfQf'

    def to_bytes(self) -> bytes:
        return struct.pack(self.FORMAT, self.sample_rate, self.frame_size, self.stride, self.mel_bins,
                           self.patch_frames, self.dynamic_range, self.sample_count, self.gain)

    @classmethod
    def from_bytes(cls, data: bytes, offset: int) -> 'SpeechHeader':
        _require(len(data) == struct.calcsize(cls.FORMAT), 'metadata', offset,
                 f'speech metadata is {len(data)} bytes, expected {struct.calcsize(cls.FORMAT)}')
        header = cls(*struct.unpack(cls.FORMAT, data))
        _require(min(header.sample_rate, header.frame_size, header.stride, header.mel_bins,
                     header.patch_frames) > 0, 'metadata', offset, 'speech geometry must be positive')
        _require(header.stride <= header.frame_size, 'metadata', offset, 'stride exceeds frame size')
        _require(np.isfinite(header.dynamic_range) and header.dynamic_range > 0, 'metadata', offset,
                 f'invalid dynamic range {header.dynamic_range}')
        _require(np.isfinite(header.gain) and header.gain > 0, 'metadata', offset,
                 f'invalid gain {header.gain}')
        return header


SignalHeader = Union[ImageHeader, SpeechHeader]


@dataclass
class CompressedBitstream:
    '''
    Everything a decoder needs, given the generator.

    ### Attributes
    `signal_type` : `SignalType`
    `coding` : `CodingMode`
    `header` : `SignalHeader`
        Signal-specific geometry
    `latent_dim` : `int`
    `patch_count` : `int`
        Number of latent vectors; 1 for an image
    `model_id` : `bytes`
        Identifier of the generator the latents were searched with
    `codebook` : `Codebook`
    `table` : `HuffmanTable`
    `payload_bit_count` : `int`
    `payload` : `bytes`
        Coded symbol indices, most significant bit first, zero padded
    '''

    signal_type: SignalType
    coding: CodingMode
    header: SignalHeader
    latent_dim: int
    patch_count: int
    model_id: bytes
    codebook: Codebook
    table: HuffmanTable
    payload_bit_count: int
    payload: bytes

    @property
    def symbol_count(self) -> int:
        return self.latent_dim * self.patch_count

    def symbols(self) -> np.ndarray:
        '''Decode the payload into symbol indices, one row per patch'''
        try:
            symbols = decode(self.table, self.payload, self.symbol_count, self.payload_bit_count)
        except BitstreamError as error:
            raise ContainerError('payload', -1, error.message) from error
        return symbols.reshape(self.patch_count, self.latent_dim)

    def latents(self) -> np.ndarray:
        '''The quantized latent vectors, one row per patch'''
        return self.codebook.values(self.symbols())


def write_container(bitstream: CompressedBitstream) -> bytes:
    '''Serialize `bitstream` into `.bpgc` bytes.'''
    _require(bitstream.latent_dim > 0, 'latent_dim', -1, 'latent dimension must be positive')
    _require(bitstream.patch_count > 0, 'patch_count', -1, 'patch count must be positive')
    _require(len(bitstream.model_id) == MODEL_ID_SIZE, 'model_id', -1, 'model id must be 8 bytes')
    _require(bitstream.table.alphabet_size == bitstream.codebook.levels, 'table', -1,
             'table size differs from codebook size')
    _require(len(bitstream.payload) == (bitstream.payload_bit_count + 7) // 8, 'payload', -1,
             'payload length does not match its bit count')

    metadata = bitstream.header.to_bytes()
    body = b''.join([
        MAGIC,
        struct.pack('<BBBH', VERSION, bitstream.signal_type, bitstream.coding, len(metadata)),
        metadata,
        struct.pack('<II', bitstream.latent_dim, bitstream.patch_count),
        bytes(bitstream.model_id),
        bitstream.codebook.to_bytes(),
        bitstream.table.to_bytes(),
        struct.pack('<Q', bitstream.payload_bit_count),
        bytes(bitstream.payload),
    ])
    return body + fnv1a64(body)


def _read(reader: ByteReader, field: str, fmt: str):
    offset = reader.offset
    try:
        values = reader.unpack(fmt)
    except TruncatedDataError as error:
        raise ContainerError(field, offset, 'truncated') from error
    return values[0] if len(values) == 1 else values


def _take(reader: ByteReader, field: str, count: int) -> bytes:
    offset = reader.offset
    try:
        return reader.take(count)
    except TruncatedDataError as error:
        raise ContainerError(field, offset, f'truncated, needs {count} bytes') from error


def parse_container(data: bytes) -> CompressedBitstream:
    '''
    Parse `.bpgc` bytes.

    ### Raises
    `ContainerError` naming the first malformed field
    '''
    data = bytes(data)
    reader = ByteReader(data)

    _require(_take(reader, 'magic', 4) == MAGIC, 'magic', 0, f'expected {MAGIC!r}')

    offset = reader.offset
    version = _read(reader, 'version', 'B')
    _require(version == VERSION, 'version', offset, f'unsupported version {version}')

    offset = reader.offset
    signal_type = _read(reader, 'signal_type', 'B')
    _require(signal_type in {t.value for t in SignalType}, 'signal_type', offset, f'unknown signal type {signal_type}')
    signal_type = SignalType(signal_type)

    offset = reader.offset
    coding = _read(reader, 'coding', 'B')
    _require(coding in {c.value for c in CodingMode}, 'coding', offset, f'unknown coding mode {coding}')
    coding = CodingMode(coding)

    metadata_length = _read(reader, 'metadata', 'H')
    offset = reader.offset
    metadata = _take(reader, 'metadata', metadata_length)
    header_type = ImageHeader if signal_type == SignalType.IMAGE else SpeechHeader
    header = header_type.from_bytes(metadata, offset)

    offset = reader.offset
    latent_dim = _read(reader, 'latent_dim', 'I')
    _require(latent_dim > 0, 'latent_dim', offset, 'empty latent vector')

    offset = reader.offset
    patch_count = _read(reader, 'patch_count', 'I')
    _require(patch_count > 0, 'patch_count', offset, 'no patches')
    _require(signal_type != SignalType.IMAGE or patch_count == 1, 'patch_count', offset,
             f'an image has exactly one latent vector, got {patch_count}')

    model_id = _take(reader, 'model_id', MODEL_ID_SIZE)

    offset = reader.offset
    try:
        codebook = Codebook.read(reader)
    except CodecError as error:
        raise ContainerError('codebook', offset, error.message) from error

    offset = reader.offset
    table_bytes = _take(reader, 'table', codebook.levels)
    try:
        table = HuffmanTable(np.frombuffer(table_bytes, dtype=np.uint8))
    except CodecError as error:
        raise ContainerError('table', offset, error.message) from error
    if coding == CodingMode.FIXED:
        _require(table == HuffmanTable.uniform(codebook.levels), 'table', offset,
                 'fixed coding requires a uniform-length table')

    offset = reader.offset
    payload_bit_count = _read(reader, 'payload_bit_count', 'Q')
    symbol_count = latent_dim * patch_count
    shortest = int(table.code_lengths[table.code_lengths > 0].min())
    _require(shortest * symbol_count <= payload_bit_count <= table.max_length * symbol_count,
             'payload_bit_count', offset,
             f'{payload_bit_count} bits cannot hold {symbol_count} symbols with this table')

    offset = reader.offset
    payload = _take(reader, 'payload', (payload_bit_count + 7) // 8)
    _require(reader.remaining == DIGEST_SIZE, 'payload', offset,
             f'{reader.remaining - DIGEST_SIZE} bytes between payload and digest')

    offset = reader.offset
    _require(fnv1a64(data[:offset]) == data[offset:], 'digest', offset, 'digest does not match contents')

    log.ENTROPY.debug('Parsed %s container: %d x %d symbols in %d bits, digest %s',
                      signal_type.name.lower(), patch_count, latent_dim, payload_bit_count, data[offset:].hex())

    return CompressedBitstream(signal_type=signal_type,
                               coding=coding,
                               header=header,
                               latent_dim=latent_dim,
                               patch_count=patch_count,
                               model_id=model_id,
                               codebook=codebook,
                               table=table,
                               payload_bit_count=payload_bit_count,
                               payload=payload)


def read_container_file(path) -> CompressedBitstream:
    '''Load a `.bpgc` file'''
    try:
        with open(path, 'rb') as container_file:
            data = container_file.read()
    except OSError as error:
        raise InputError(f'cannot read {path}: {error.strerror}', module='entropy') from error
    return parse_container(data)


def build_bitstream(signal_type: SignalType, header: SignalHeader, model_id: bytes, codebook: Codebook,
                    symbols: np.ndarray, coding: CodingMode = CodingMode.HUFFMAN,
                    table: Optional[HuffmanTable] = None) -> CompressedBitstream:
    '''
    Code a `(patch_count, latent_dim)` array of symbol indices into a bitstream.

    ### Parameters
    `table` : `Optional[HuffmanTable]`
        A shared table to use instead of one built from these symbols' frequencies
    '''
    symbols = np.atleast_2d(np.asarray(symbols, dtype=np.int64))
    if table is None:
        if coding == CodingMode.FIXED:
            table = HuffmanTable.uniform(codebook.levels)
        else:
            table = HuffmanTable.from_frequencies(np.bincount(symbols.ravel(), minlength=codebook.levels))

    payload, bit_count = encode(table, symbols.ravel())
    return CompressedBitstream(signal_type=signal_type,
                               coding=coding,
                               header=header,
                               latent_dim=symbols.shape[1],
                               patch_count=symbols.shape[0],
                               model_id=bytes(model_id),
                               codebook=codebook,
                               table=table,
                               payload_bit_count=bit_count,
                               payload=payload)
