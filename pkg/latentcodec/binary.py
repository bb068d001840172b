# Eryn Wells <eryn@erynwells.me>

'''
Little-endian binary helpers shared by the model, codebook and bitstream file
formats.
'''

import struct
from typing import Tuple

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> bytes:
    '''Compute the 64-bit FNV-1a digest of `data`, returned as 8 little-endian bytes.'''
    value = FNV_OFFSET_BASIS
    for byte in data:
        value ^= byte
        value = (value * FNV_PRIME) & _MASK
    return value.to_bytes(8, 'little')


class TruncatedDataError(Exception):
    '''Raised by ByteReader when a read runs past the end of the data.'''

    def __init__(self, offset: int, needed: int, available: int):
        super().__init__(f'needed {needed} bytes at offset {offset}, only {available} available')
        self.offset = offset
        self.needed = needed


class ByteReader:
    '''A cursor over an immutable byte sequence'''

    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.offset = offset

    @property
    def remaining(self) -> int:
        '''Number of unread bytes'''
        return len(self.data) - self.offset

    def take(self, count: int) -> bytes:
        '''Read `count` raw bytes'''
        if count < 0 or count > self.remaining:
            raise TruncatedDataError(self.offset, count, max(self.remaining, 0))
        start = self.offset
        self.offset += count
        return self.data[start:self.offset]

    def unpack(self, fmt: str) -> Tuple:
        '''Read a little-endian struct with the given format (without byte order prefix)'''
        fmt = '<' + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def u8(self) -> int:
        return self.unpack('B')[0]

    def u16(self) -> int:
        return self.unpack('H')[0]

    def u32(self) -> int:
        return self.unpack('I')[0]

    def u64(self) -> int:
        return self.unpack('Q')[0]

    def f32(self) -> float:
        return self.unpack('f')[0]
