# Eryn Wells <eryn@erynwells.me>

'''
Canonical Huffman coding of codebook indices.

A table is described completely by one code length per symbol (zero for absent
symbols). Codes are assigned canonically: symbols sorted by (length, index)
receive consecutive code values, so both sides derive identical codes from the
lengths alone. Bits are packed most-significant-bit first.
'''

import heapq
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..binary import ByteReader
from ..errors import FormatError, InputError

MAX_CODE_LENGTH = 64


class TableError(InputError):
    '''Frequencies or symbols a table can't be built for or can't encode'''
    module = 'entropy'


class TableFormatError(FormatError):
    '''Code lengths that don't describe a valid prefix code'''
    module = 'entropy'


class BitstreamError(FormatError):
    '''A payload that doesn't decode'''
    module = 'entropy'


def huffman_code_lengths(frequencies: Sequence[int]) -> np.ndarray:
    '''
    Optimal prefix code lengths for `frequencies`.

    Ties between subtrees of equal weight are broken by the smallest symbol index
    they contain, with merged subtrees ordered after all leaves created before
    them, which makes the result deterministic. A lone symbol gets length 1.
    '''
    frequencies = np.asarray(frequencies, dtype=np.int64)
    if frequencies.ndim != 1 or np.any(frequencies < 0):
        raise TableError('frequencies must be a list of nonnegative counts')
    present = np.flatnonzero(frequencies)
    if present.size == 0:
        raise TableError('cannot build a code table from all-zero frequencies')

    lengths = np.zeros(frequencies.size, dtype=np.int64)
    if present.size == 1:
        lengths[present[0]] = 1
        return lengths

    # Heap entries are (weight, order, node). Leaves are nodes 0..K-1; merged nodes are numbered from K.
    heap: List[Tuple[int, int, int]] = [(int(frequencies[s]), int(s), int(s)) for s in present]
    heapq.heapify(heap)
    parent = {}
    next_node = frequencies.size
    while len(heap) > 1:
        weight_a, _, node_a = heapq.heappop(heap)
        weight_b, _, node_b = heapq.heappop(heap)
        parent[node_a] = parent[node_b] = next_node
        heapq.heappush(heap, (weight_a + weight_b, next_node, next_node))
        next_node += 1

    root = heap[0][2]
    depth = {root: 0}
    for node in range(next_node - 1, -1, -1):
        if node in parent:
            depth[node] = depth[parent[node]] + 1
    for symbol in present:
        lengths[symbol] = depth[int(symbol)]

    return lengths


class HuffmanTable:
    '''
    A canonical prefix code.

    ### Attributes
    `code_lengths` : `np.ndarray`
        One length per symbol of the alphabet; zero for symbols that never occur
    `codes` : `np.ndarray`
        The canonical code of each present symbol, as an unsigned integer
    '''

    def __init__(self, code_lengths: Sequence[int]):
        lengths = np.asarray(code_lengths, dtype=np.int64)
        if lengths.ndim != 1 or lengths.size == 0:
            raise TableFormatError('a code table needs at least one symbol')
        if np.any(lengths < 0) or np.any(lengths > MAX_CODE_LENGTH):
            raise TableFormatError(f'code lengths must be between 0 and {MAX_CODE_LENGTH}')
        if not np.any(lengths):
            raise TableFormatError('code table has no symbols')

        longest = int(lengths.max())
        kraft_sum = sum(1 << (longest - int(length)) for length in lengths if length)
        if kraft_sum > 1 << longest:
            raise TableFormatError('code lengths violate the Kraft inequality')

        self.code_lengths = lengths
        self.kraft_sum = kraft_sum / float(1 << longest)

        # Canonical assignment in (length, symbol) order
        order = np.lexsort((np.arange(lengths.size), lengths))
        order = order[lengths[order] > 0]
        self.sorted_symbols = order

        codes = np.zeros(lengths.size, dtype=np.uint64)
        self.first_code = {}
        self.first_index = {}
        self.count = {}
        code = 0
        previous_length = 0
        for index, symbol in enumerate(order):
            length = int(lengths[symbol])
            code <<= length - previous_length
            if length != previous_length:
                self.first_code[length] = code
                self.first_index[length] = index
                self.count[length] = 0
            self.count[length] += 1
            codes[symbol] = code
            code += 1
            previous_length = length
        self.codes = codes
        self.max_length = longest

    @classmethod
    def from_frequencies(cls, frequencies: Sequence[int]) -> 'HuffmanTable':
        return cls(huffman_code_lengths(frequencies))

    @classmethod
    def uniform(cls, alphabet_size: int) -> 'HuffmanTable':
        '''A fixed-length code: every symbol gets ceil(log2 K) bits, at least one'''
        bits = max(1, int(alphabet_size - 1).bit_length())
        return cls(np.full(alphabet_size, bits))

    @property
    def alphabet_size(self) -> int:
        return self.code_lengths.size

    @property
    def is_complete(self) -> bool:
        '''Whether the Kraft sum is exactly 1'''
        return self.kraft_sum == 1.0

    def __eq__(self, other):
        if not isinstance(other, HuffmanTable):
            return NotImplemented
        return np.array_equal(self.code_lengths, other.code_lengths)

    def __hash__(self):
        return hash(self.to_bytes())

    def __repr__(self):
        return f'{self.__class__.__name__}(symbols={int(np.count_nonzero(self.code_lengths))}, max_length={self.max_length})'

    def code(self, symbol: int) -> str:
        '''The code of `symbol` as a string of 0s and 1s'''
        length = int(self.code_lengths[symbol])
        return format(int(self.codes[symbol]), f'0{length}b') if length else ''

    def encoded_bit_count(self, symbols) -> int:
        return int(self.code_lengths[np.asarray(symbols, dtype=np.int64)].sum())

    def expected_length(self, frequencies: Sequence[int]) -> float:
        '''Average code length in bits per symbol under `frequencies`'''
        frequencies = np.asarray(frequencies, dtype=np.float64)
        return float((frequencies * self.code_lengths).sum() / frequencies.sum())

    def to_bytes(self) -> bytes:
        '''The table block: one unsigned byte per symbol'''
        return self.code_lengths.astype(np.uint8).tobytes()

    @classmethod
    def read(cls, reader: ByteReader, alphabet_size: int) -> 'HuffmanTable':
        return cls(np.frombuffer(reader.take(alphabet_size), dtype=np.uint8))


def build_table(frequencies: Sequence[int]) -> HuffmanTable:
    return HuffmanTable.from_frequencies(frequencies)


def encode(table: HuffmanTable, symbols) -> Tuple[bytes, int]:
    '''
    Encode `symbols`.

    ### Returns
    A tuple `(payload, bit_count)`. The payload is zero-padded to whole bytes.
    '''
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    if symbols.size == 0:
        return b'', 0
    if symbols.min() < 0 or symbols.max() >= table.alphabet_size:
        raise TableError(f'symbol out of range [0, {table.alphabet_size})')

    lengths = table.code_lengths[symbols]
    if np.any(lengths == 0):
        missing = int(symbols[np.flatnonzero(lengths == 0)[0]])
        raise TableError(f'symbol {missing} has no code in this table')

    shifts = np.arange(table.max_length - 1, -1, -1, dtype=np.uint64)
    codes = table.codes[symbols]
    bits = ((codes[:, np.newaxis] >> shifts[np.newaxis, :]) & np.uint64(1)).astype(np.uint8)
    mask = shifts[np.newaxis, :] < lengths[:, np.newaxis].astype(np.uint64)
    stream = bits[mask]

    return np.packbits(stream).tobytes(), int(stream.size)


def decode(table: HuffmanTable, payload: bytes, count: int, bit_count: Optional[int] = None) -> np.ndarray:
    '''
    Decode `count` symbols from `payload`.

    ### Parameters
    `bit_count` : `int`
        Number of meaningful bits in `payload`. Defaults to all of them.

    ### Raises
    `BitstreamError` if the bits run out or a bit sequence matches no code
    '''
    available = 8 * len(payload) if bit_count is None else bit_count
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:available].tolist()

    symbols = np.empty(count, dtype=np.int64)
    sorted_symbols = table.sorted_symbols
    first_code, first_index, code_count = table.first_code, table.first_index, table.count

    position = 0
    for output in range(count):
        code = 0
        length = 0
        while True:
            if position >= len(bits):
                raise BitstreamError(f'bitstream ends after {output} of {count} symbols')
            code = (code << 1) | bits[position]
            position += 1
            length += 1
            if length in code_count and 0 <= code - first_code[length] < code_count[length]:
                symbols[output] = sorted_symbols[first_index[length] + code - first_code[length]]
                break
            if length >= table.max_length:
                raise BitstreamError(f'invalid code at bit {position - length}')

    if bit_count is not None and position != bit_count:
        raise BitstreamError(f'{bit_count - position} bits left over after {count} symbols')

    return symbols


def empirical_entropy(frequencies: Sequence[int]) -> float:
    '''Shannon entropy in bits per symbol of the distribution given by `frequencies`'''
    frequencies = np.asarray(frequencies, dtype=np.float64)
    probabilities = frequencies[frequencies > 0] / frequencies.sum()
    return float(-(probabilities * np.log2(probabilities)).sum())
