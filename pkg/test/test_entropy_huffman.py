# Eryn Wells <eryn@erynwells.me>

import itertools

import numpy as np
import pytest

from latentcodec.entropy import HuffmanTable, decode, empirical_entropy, encode
from latentcodec.entropy.huffman import BitstreamError, TableError, TableFormatError, build_table, huffman_code_lengths


def _optimal_cost(frequencies):
    '''Smallest total code length over every length assignment satisfying Kraft'''
    size = len(frequencies)
    best = None
    for lengths in itertools.product(range(1, size), repeat=size):
        if sum(2.0 ** -length for length in lengths) <= 1.0:
            cost = sum(f * length for f, length in zip(frequencies, lengths))
            best = cost if best is None else min(best, cost)
    return best


def test_three_symbol_lengths():
    assert list(huffman_code_lengths([2, 1, 1])) == [1, 2, 2]


def test_equal_counts_give_fixed_lengths():
    assert np.all(huffman_code_lengths(np.full(256, 7)) == 8)


def test_single_symbol_gets_one_bit():
    table = HuffmanTable.from_frequencies([0, 5, 0])
    assert list(table.code_lengths) == [0, 1, 0]

    payload, bits = encode(table, [1, 1, 1])
    assert bits == 3
    assert list(decode(table, payload, 3, bits)) == [1, 1, 1]


def test_canonical_codes():
    table = HuffmanTable([1, 2, 2])
    assert [table.code(s) for s in range(3)] == ['0', '10', '11']
    assert table.is_complete


def test_lengths_are_optimal():
    rng = np.random.default_rng(0)
    for _ in range(10):
        frequencies = rng.integers(1, 50, size=5)
        cost = int((frequencies * huffman_code_lengths(frequencies)).sum())
        assert cost == _optimal_cost(list(frequencies))


def test_expected_length_is_within_one_bit_of_entropy():
    rng = np.random.default_rng(1)
    for _ in range(10):
        frequencies = rng.integers(0, 1000, size=16)
        frequencies[0] += 1
        entropy = empirical_entropy(frequencies)
        length = HuffmanTable.from_frequencies(frequencies).expected_length(frequencies)
        assert entropy - 1e-12 <= length < entropy + 1


def test_skewed_distribution_codes_below_fixed_rate():
    frequencies = [90, 5, 3, 2]
    length = HuffmanTable.from_frequencies(frequencies).expected_length(frequencies)
    assert length == pytest.approx(1.15)
    assert length < 1.3


def test_encode_decode():
    rng = np.random.default_rng(2)
    symbols = rng.choice(8, size=200, p=[0.4, 0.2, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05])
    table = HuffmanTable.from_frequencies(np.bincount(symbols, minlength=8))

    payload, bits = encode(table, symbols)
    assert bits == table.encoded_bit_count(symbols)
    assert len(payload) == (bits + 7) // 8
    assert np.array_equal(decode(table, payload, symbols.size, bits), symbols)


def test_uniform_table():
    table = HuffmanTable.uniform(16)
    assert np.all(table.code_lengths == 4)
    _, bits = encode(table, np.arange(16))
    assert bits == 64


def test_decode_errors():
    table = HuffmanTable([1, 2, 2])
    payload, bits = encode(table, [1, 2, 0])
    with pytest.raises(BitstreamError):
        decode(table, payload, 4, bits)
    with pytest.raises(BitstreamError):
        decode(table, payload, 2, bits)


def test_incomplete_code_rejects_unused_patterns():
    table = HuffmanTable([2, 2, 2, 0])
    assert not table.is_complete
    with pytest.raises(BitstreamError):
        decode(table, bytes([0b11000000]), 1, 2)


def test_invalid_tables():
    with pytest.raises(TableFormatError):
        HuffmanTable([1, 1, 1])
    with pytest.raises(TableFormatError):
        HuffmanTable([0, 0])
    with pytest.raises(TableError):
        huffman_code_lengths([0, 0, 0])
    with pytest.raises(TableError):
        encode(HuffmanTable([1, 1, 0]), [2])


def test_build_table_leaves_unused_symbols_without_codes():
    table = build_table([5, 0, 3])
    assert list(table.code_lengths) == [1, 0, 1]
    assert table.code(1) == ''
    with pytest.raises(TableError):
        build_table([0, 0])
