# Eryn Wells <eryn@erynwells.me>

'''
Compression and decompression of whole signals.

Compressing runs the pipeline's analysis, searches a quantized latent vector for
every patch, and entropy codes the codebook indices into a container.
Decompressing needs nothing but the container, the generator and the pipeline.
'''

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import log
from .entropy import CodingMode, CompressedBitstream, HuffmanTable, build_bitstream, parse_container, write_container
from .errors import ConfigurationError, InputError, ModelMismatchError
from .model import GeneratorModel
from .objectives import SignalObjective
from .pipeline import SignalPipeline
from .quantization import Codebook
from .search import SearchConfig, SearchReport, make_search

CODINGS = {'huffman': CodingMode.HUFFMAN, 'fixed': CodingMode.FIXED}


@dataclass
class CodecConfig:
    '''
    ### Attributes
    `coding` : `str`
        `huffman` codes indices with a table built from their frequencies;
        `fixed` spends ceil(log2 K) bits on each one
    `workers` : `int`
        Threads used to compress a batch of signals
    '''

    coding: str = 'huffman'
    workers: int = 1

    @property
    def coding_mode(self) -> CodingMode:
        return CODINGS[self.coding]

    def validate(self):
        if self.coding not in CODINGS:
            raise ConfigurationError(f'codec.coding must be one of {", ".join(CODINGS)}, got {self.coding!r}')
        if self.workers < 1:
            raise ConfigurationError(f'codec.workers must be at least 1, got {self.workers}')


@dataclass
class CompressionResult:
    '''
    A compressed signal and its accounting.

    ### Attributes
    `bitstream` : `CompressedBitstream`
    `data` : `bytes`
        The serialized container
    `payload_bits` : `int`
        Bits spent on the coded indices alone
    `total_bits` : `int`
        Bits in the whole container, headers included
    `rate` : `float`
        `payload_bits` per pixel, or kilobits of payload per second of speech
    `total_rate` : `float`
        The same rate counting `total_bits`
    `rate_unit` : `str`
        `bpp` or `kbps`
    `reports` : `List[SearchReport]`
        One search report per patch
    '''

    bitstream: CompressedBitstream
    data: bytes
    payload_bits: int
    total_bits: int
    rate: float
    total_rate: float
    rate_unit: str
    reports: List[SearchReport] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return sum(report.iterations for report in self.reports)

    @property
    def final_objective(self) -> float:
        '''Mean final objective over patches'''
        return float(np.mean([report.final_objective for report in self.reports]))


def patch_targets(patches: np.ndarray, generator: GeneratorModel) -> List[np.ndarray]:
    targets = []
    for patch in patches:
        if patch.size != generator.output_size:
            raise InputError(f'pipeline produces patches of shape {patch.shape}, '
                             f'generator produces {generator.output_shape}', module='codec')
        targets.append(patch.reshape(generator.output_shape))
    return targets


def compress(signal: np.ndarray, generator: GeneratorModel, codebook: Codebook, objective: SignalObjective,
             search_config: SearchConfig, pipeline: SignalPipeline, *,
             encoder: Optional[GeneratorModel] = None,
             codec_config: Optional[CodecConfig] = None,
             table: Optional[HuffmanTable] = None) -> CompressionResult:
    '''
    Compress one signal.

    ### Parameters
    `signal` : `np.ndarray`
        The signal as its pipeline reads it from a file
    `encoder` : `Optional[GeneratorModel]`
        Initializes each search with E(x)
    `table` : `Optional[HuffmanTable]`
        A shared code table to use instead of one built from this signal's indices

    ### Returns
    A `CompressionResult`. Patch `i` is searched with seed `search_config.seed + i`.
    '''
    codec_config = codec_config or CodecConfig()
    codec_config.validate()

    patches, header = pipeline.analyze(signal)
    targets = patch_targets(patches, generator)

    latents = []
    reports = []
    for index, target in enumerate(targets):
        config = dataclasses.replace(search_config, seed=search_config.seed + index)
        latent, report = make_search(config).run(target, generator, codebook, objective, encoder=encoder)
        latents.append(latent)
        reports.append(report)

    symbols = np.stack([codebook.symbol_indices(latent) for latent in latents])
    bitstream = build_bitstream(pipeline.signal_type, header, generator.model_id, codebook, symbols,
                                coding=codec_config.coding_mode, table=table)
    data = write_container(bitstream)

    payload_bits = bitstream.payload_bit_count
    total_bits = 8 * len(data)
    result = CompressionResult(bitstream=bitstream,
                               data=data,
                               payload_bits=payload_bits,
                               total_bits=total_bits,
                               rate=pipeline.rate(payload_bits, header, bitstream.patch_count),
                               total_rate=pipeline.rate(total_bits, header, bitstream.patch_count),
                               rate_unit=pipeline.rate_unit,
                               reports=reports)

    log.CODEC.info('Compressed %d patches into %d payload bits (%.6g %s), %d bytes in total',
                   bitstream.patch_count, payload_bits, result.rate, result.rate_unit, len(data))
    return result


def compress_batch(signals: Sequence[np.ndarray], generator: GeneratorModel, codebook: Codebook,
                   objective: SignalObjective, search_config: SearchConfig, pipeline: SignalPipeline, *,
                   encoder: Optional[GeneratorModel] = None,
                   codec_config: Optional[CodecConfig] = None) -> List[CompressionResult]:
    '''
    Compress independent signals, concurrently when `codec_config.workers` is
    more than one. Results are in the order of `signals`.
    '''
    codec_config = codec_config or CodecConfig()
    codec_config.validate()

    def compress_one(signal):
        return compress(signal, generator, codebook, objective, search_config, pipeline,
                        encoder=encoder, codec_config=codec_config)

    if codec_config.workers == 1:
        return [compress_one(signal) for signal in signals]

    with ThreadPoolExecutor(max_workers=codec_config.workers) as executor:
        return list(executor.map(compress_one, signals))


def decode_latents(bitstream: CompressedBitstream, generator: GeneratorModel) -> np.ndarray:
    '''
    The quantized latent vectors of `bitstream`, one row per patch, after
    checking they were searched with `generator`.
    '''
    if bitstream.model_id != generator.model_id:
        raise ModelMismatchError(f'bitstream was made with model {bitstream.model_id.hex()}, '
                                 f'generator is {generator.model_id.hex()}')
    if bitstream.latent_dim != generator.input_dim:
        raise ModelMismatchError(f'bitstream latent dimension is {bitstream.latent_dim}, '
                                 f'generator takes {generator.input_dim}')
    return bitstream.latents()


def decompress(bitstream: CompressedBitstream, generator: GeneratorModel, pipeline: SignalPipeline) -> np.ndarray:
    '''Rebuild a signal: decode the indices, run the generator on each latent vector and synthesize'''
    if bitstream.signal_type != pipeline.signal_type:
        raise InputError(f'bitstream holds {bitstream.signal_type.name.lower()}, '
                         f'pipeline handles {pipeline.signal_type.name.lower()}', module='codec')

    latents = decode_latents(bitstream, generator)
    outputs = np.stack([generator(latent) for latent in latents])
    log.CODEC.info('Decoded %d patches with model %s', len(latents), generator.model_id.hex())
    return pipeline.synthesize(outputs, bitstream.header)


def decompress_bytes(data: bytes, generator: GeneratorModel, pipeline: SignalPipeline) -> np.ndarray:
    return decompress(parse_container(data), generator, pipeline)
