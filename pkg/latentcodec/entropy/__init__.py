# Eryn Wells <eryn@erynwells.me>

'''
Entropy coding of quantized latents and the compressed container format.
'''

from .container import (
    CodingMode,
    CompressedBitstream,
    ContainerError,
    ImageHeader,
    SignalType,
    SpeechHeader,
    build_bitstream,
    parse_container,
    read_container_file,
    write_container)
from .huffman import HuffmanTable, build_table, decode, empirical_entropy, encode
