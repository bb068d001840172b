# Eryn Wells <eryn@erynwells.me>

'''
The command line interface.

Every command prints its results to stdout as `key=value` lines. Failures print
exactly one line to stderr,

    error code=<exit code> module=<subsystem> message=<text>

and exit with the code: 1 internal error, 2 bad input, 3 malformed file or
model mismatch, 4 numeric failure.
'''

import argparse
import dataclasses
import os
import os.path as osp
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import log
from .bench import BenchConfig, bench_init, bench_quant, write_init_csv, write_quant_csv, write_summary_csv
from .codec import compress_batch, decompress, patch_targets
from .configuration import RunConfig
from .entropy import SignalType, read_container_file
from .errors import CodecError, FormatError, InputError
from .model import GeneratorModel
from .model.container import read_model_file, write_model_file
from .model.synthetic import (
    SyntheticKind,
    SyntheticModelSpec,
    conv_feature_network,
    linear_discriminator,
    make_synthetic,
    pseudo_inverse_encoder)
from .objectives import SignalObjective
from .pipeline import ImagePipeline, SignalPipeline, SpeechPipeline
from .quantization import kmeans, read_codebook_file, write_codebook_file
from .search import METHODS, search

PROGRAM = 'latentcodec'

SIGNAL_TYPES = ('image', 'speech')
EXTENSIONS = {
    '.ppm': 'image',
    '.pgm': 'image',
    '.wav': 'speech',
}
ROLES = ('generator', 'encoder', 'discriminator', 'feature-net')


class UsageError(InputError):
    '''Bad command line arguments'''
    module = 'cli'


class _ArgumentParser(argparse.ArgumentParser):
    '''An argument parser that raises instead of printing usage and exiting'''

    def error(self, message):
        raise UsageError(message)


def _integers(text: str) -> List[int]:
    try:
        return [int(item) for item in text.replace(',', ' ').split()]
    except ValueError as error:
        raise argparse.ArgumentTypeError(f'expected a list of integers, got {text!r}') from error


def _seeds(text: str) -> List[int]:
    '''A seed count `N` meaning 0..N−1, or an explicit comma separated list'''
    values = _integers(text)
    if len(values) == 1 and ',' not in text:
        return list(range(values[0]))
    return values


def parse_args(argv: Sequence[str], *a, **kw) -> argparse.Namespace:
    parser = _ArgumentParser(*a, **kw)
    parser.add_argument('--config', help='run configuration file')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='override a configuration value; may be repeated')
    parser.add_argument('--seed', type=int, help='seed of every random draw')
    parser.add_argument('--verbose', '-v', action='count', default=0, help='log more; repeat for debug logging')
    parser.add_argument('--log-config', help='logging configuration file')

    commands = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=_ArgumentParser)
    commands.required = True

    fit = commands.add_parser('fit-codebook', help='fit a quantization codebook to a corpus of latents')
    fit.add_argument('corpus', help='.npy file of unquantized latent values')
    fit.add_argument('--levels', '-k', type=int, required=True, help='number of quantization levels K')
    fit.add_argument('--max-iters', type=int, default=100)
    fit.add_argument('--sample-limit', type=int)
    fit.add_argument('--output', '-o', required=True, help='.bpcb file to write')

    compress = commands.add_parser('compress', help='compress images or speech')
    compress.add_argument('inputs', nargs='+', help='.ppm/.pgm images or .wav files')
    _add_signal_arguments(compress)
    compress.add_argument('--codebook', required=True, help='.bpcb codebook')
    compress.add_argument('--discriminator', help='discriminator .bpgm for the image objective')
    compress.add_argument('--feature-net', help='feature network .bpgm for the speech objective')
    compress.add_argument('--output', '-o', required=True,
                          help='.bpgc file to write, or a directory when compressing several inputs')

    expand = commands.add_parser('decompress', help='rebuild a signal from a compressed file')
    expand.add_argument('input', help='.bpgc file')
    expand.add_argument('--generator', required=True, help='generator .bpgm')
    expand.add_argument('--output', '-o', required=True, help='.ppm/.pgm or .wav file to write')

    evaluate = commands.add_parser('eval', help='compare a reconstruction with its original')
    evaluate.add_argument('original')
    evaluate.add_argument('reconstruction')
    evaluate.add_argument('--type', choices=SIGNAL_TYPES, help='signal type; guessed from the extension')

    quant = commands.add_parser('bench-quant', help='compare search methods on synthetic problems')
    _add_bench_arguments(quant)
    quant.add_argument('--methods', type=lambda text: text.replace(',', ' ').split(), default=list(METHODS))
    quant.add_argument('--global-table', action='store_true',
                       help='count bits with one code table per grid cell and method')
    quant.add_argument('--summary', help='also write per-cell means and deviations to this CSV file')

    init = commands.add_parser('bench-init', help='compare random and encoder initialization')
    _add_bench_arguments(init)
    init.add_argument('--iterations', type=int, default=100)

    make = commands.add_parser('make-model', help='write a synthetic model file')
    make.add_argument('--role', choices=ROLES, default='generator')
    make.add_argument('--kind', choices=[kind.value for kind in SyntheticKind],
                      default=SyntheticKind.ORTHONORMAL_LINEAR.value)
    make.add_argument('--latent-dim', type=int, default=16)
    make.add_argument('--signal-shape', type=_integers, required=True, help='output shape, e.g. 1,128,128')
    make.add_argument('--depth', type=int, default=2)
    make.add_argument('--width', type=int, default=32)
    make.add_argument('--channels', type=int, default=4, help='feature network channels')
    make.add_argument('--output', '-o', required=True, help='.bpgm file to write')

    collect = commands.add_parser('collect-latents', help='append unquantized latents of signals to a corpus')
    collect.add_argument('inputs', nargs='+')
    _add_signal_arguments(collect)
    collect.add_argument('--feature-net', help='feature network .bpgm for the speech objective')
    collect.add_argument('--discriminator', help='discriminator .bpgm for the image objective')
    collect.add_argument('--output', '-o', required=True, help='.npy corpus; appended to if it exists')

    return parser.parse_args(argv)


def _add_signal_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--type', choices=SIGNAL_TYPES, help='signal type; guessed from the extension')
    parser.add_argument('--generator', required=True, help='generator .bpgm')
    parser.add_argument('--encoder', help='encoder .bpgm used to initialize the search')


def _add_bench_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--dims', type=_integers, default=[8, 16], help='latent dimensions')
    parser.add_argument('--levels', type=_integers, default=[4, 16], help='codebook sizes')
    parser.add_argument('--seeds', type=_seeds, default=list(range(10)), help='a count or a list of seeds')
    parser.add_argument('--generator-kind', choices=[kind.value for kind in SyntheticKind],
                        default=SyntheticKind.ORTHONORMAL_LINEAR.value)
    parser.add_argument('--output', '-o', help='CSV file to write; stdout by default')


def _emit(**values):
    for key, value in values.items():
        if isinstance(value, float):
            value = f'{value:.6g}'
        print(f'{key}={value}')


def _signal_type(paths: Sequence[str], explicit: Optional[str]) -> str:
    if explicit:
        return explicit
    kinds = {EXTENSIONS.get(osp.splitext(path)[1].lower()) for path in paths}
    if len(kinds) != 1 or None in kinds:
        raise UsageError(f'cannot tell the signal type of {", ".join(paths)}; use --type')
    return kinds.pop()


def _pipeline(kind: str, config: RunConfig) -> SignalPipeline:
    match kind:
        case 'image':
            return ImagePipeline(config.image)
        case 'speech':
            return SpeechPipeline(config.speech)
        case _:
            raise UsageError(f'unknown signal type {kind!r}')


def _objective(kind: str, config: RunConfig, args: argparse.Namespace) -> SignalObjective:
    match kind:
        case 'image':
            discriminator = read_model_file(args.discriminator) if args.discriminator else None
            return config.objective.image_objective(discriminator)
        case _:
            feature_net = read_model_file(args.feature_net) if args.feature_net else None
            return config.objective.speech_objective(feature_net)


def _optional_model(path: Optional[str]) -> Optional[GeneratorModel]:
    return read_model_file(path) if path else None


def _write_bytes(path: str, data: bytes):
    try:
        with open(path, 'wb') as output_file:
            output_file.write(data)
    except OSError as error:
        raise InputError(f'cannot write {path}: {error.strerror}', module='cli') from error


def _open_output(path: Optional[str]):
    if not path:
        return sys.stdout
    try:
        return open(path, 'w', encoding='utf-8', newline='')
    except OSError as error:
        raise InputError(f'cannot write {path}: {error.strerror}', module='cli') from error


def _load_corpus(path: str) -> np.ndarray:
    try:
        return np.load(path, allow_pickle=False)
    except OSError as error:
        raise InputError(f'cannot read latent corpus {path}: {error}', module='quant') from error
    except ValueError as error:
        raise FormatError(f'{path} is not a .npy latent corpus: {error}', module='quant') from error


# Commands

def cmd_fit_codebook(args: argparse.Namespace, config: RunConfig) -> int:
    corpus = _load_corpus(args.corpus)
    result = kmeans(corpus, args.levels, max_iters=args.max_iters, seed=config.search.seed,
                    sample_limit=args.sample_limit)
    write_codebook_file(args.output, result.codebook)
    _emit(levels=result.codebook.levels,
          samples=int(np.asarray(corpus).size),
          iterations=result.iterations,
          converged=str(result.converged).lower(),
          distortion=result.distortion,
          centers=','.join(f'{center:.6g}' for center in result.codebook.centers),
          occupancy=','.join(str(count) for count in result.occupancy))
    return 0


def cmd_compress(args: argparse.Namespace, config: RunConfig) -> int:
    kind = _signal_type(args.inputs, args.type)
    pipeline = _pipeline(kind, config)
    generator = read_model_file(args.generator)
    encoder = _optional_model(args.encoder)
    codebook = read_codebook_file(args.codebook)
    objective = _objective(kind, config, args)

    if len(args.inputs) > 1:
        os.makedirs(args.output, exist_ok=True)
        outputs = [osp.join(args.output, osp.splitext(osp.basename(path))[0] + '.bpgc') for path in args.inputs]
    else:
        outputs = [args.output]

    signals = [pipeline.read(path) for path in args.inputs]
    results = compress_batch(signals, generator, codebook, objective, config.search, pipeline,
                             encoder=encoder, codec_config=config.codec)

    for path, output, result in zip(args.inputs, outputs, results):
        _write_bytes(output, result.data)
        if len(args.inputs) > 1:
            _emit(input=path, output=output)
        _emit(**{'patches': result.bitstream.patch_count,
                 'latent_dim': result.bitstream.latent_dim,
                 'levels': codebook.levels,
                 'coding': config.codec.coding,
                 'payload_bits': result.payload_bits,
                 'total_bits': result.total_bits,
                 result.rate_unit: result.rate,
                 f'total_{result.rate_unit}': result.total_rate,
                 'iterations': result.iterations,
                 'final_objective': result.final_objective})
    return 0


def cmd_decompress(args: argparse.Namespace, config: RunConfig) -> int:
    bitstream = read_container_file(args.input)
    generator = read_model_file(args.generator)
    if bitstream.signal_type == SignalType.IMAGE:
        kind, pipeline = 'image', ImagePipeline(config.image)
    else:
        kind, pipeline = 'speech', SpeechPipeline(config.speech.with_header(bitstream.header))

    signal = decompress(bitstream, generator, pipeline)
    pipeline.write(args.output, signal)
    _emit(type=kind, patches=bitstream.patch_count, output=args.output)
    return 0


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    kind = _signal_type([args.original, args.reconstruction], args.type)
    pipeline = _pipeline(kind, config)
    original = pipeline.read(args.original)
    reconstruction = pipeline.read(args.reconstruction)
    _emit(**pipeline.evaluate(original, reconstruction))
    return 0


def _bench_config(args: argparse.Namespace, **kwargs) -> BenchConfig:
    return BenchConfig(latent_dims=args.dims, levels=args.levels, seeds=args.seeds,
                       generator=args.generator_kind, **kwargs)


def cmd_bench_quant(args: argparse.Namespace, config: RunConfig) -> int:
    bench_config = _bench_config(args, methods=args.methods, global_table=args.global_table)
    rows = bench_quant(bench_config, config.search)

    output = _open_output(args.output)
    try:
        write_quant_csv(output, rows)
    finally:
        if output is not sys.stdout:
            output.close()

    if args.summary:
        with _open_output(args.summary) as summary:
            write_summary_csv(summary, rows)
    return 0


def cmd_bench_init(args: argparse.Namespace, config: RunConfig) -> int:
    rows = bench_init(_bench_config(args, iterations=args.iterations), config.search)

    output = _open_output(args.output)
    try:
        write_init_csv(output, rows)
    finally:
        if output is not sys.stdout:
            output.close()
    return 0


def cmd_make_model(args: argparse.Namespace, config: RunConfig) -> int:
    shape = tuple(args.signal_shape)
    seed = config.search.seed
    match args.role:
        case 'generator' | 'encoder':
            spec = SyntheticModelSpec(kind=SyntheticKind(args.kind), latent_dim=args.latent_dim, signal_shape=shape,
                                      depth=args.depth, width=args.width, seed=seed)
            model = make_synthetic(spec)
            if args.role == 'encoder':
                model = pseudo_inverse_encoder(model)
        case 'discriminator':
            model = linear_discriminator(shape, seed)
        case _:
            model = conv_feature_network(shape, seed, channels=args.channels, depth=args.depth)

    write_model_file(args.output, model)
    _emit(role=args.role,
          input_shape=','.join(str(d) for d in model.input_shape),
          output_shape=','.join(str(d) for d in model.output_shape),
          model_id=model.model_id.hex())
    return 0


def cmd_collect_latents(args: argparse.Namespace, config: RunConfig) -> int:
    if not args.output.endswith('.npy'):
        raise UsageError(f'latent corpus {args.output} must be a .npy file')
    kind = _signal_type(args.inputs, args.type)
    pipeline = _pipeline(kind, config)
    generator = read_model_file(args.generator)
    encoder = _optional_model(args.encoder)
    objective = _objective(kind, config, args)

    unquantized = dataclasses.replace(config.search, quantize=False)

    latents = []
    for path in args.inputs:
        patches, _ = pipeline.analyze(pipeline.read(path))
        for index, target in enumerate(patch_targets(patches, generator)):
            patch_config = dataclasses.replace(unquantized, seed=unquantized.seed + index)
            latent, _ = search(target, generator, None, objective, patch_config, encoder=encoder)
            latents.append(latent)

    corpus = np.stack(latents)
    if osp.exists(args.output):
        existing = _load_corpus(args.output)
        if existing.ndim != 2 or existing.shape[1] != corpus.shape[1]:
            raise InputError(f'{args.output} holds latents of shape {existing.shape}, '
                             f'new latents have dimension {corpus.shape[1]}', module='cli')
        corpus = np.concatenate([existing, corpus])

    try:
        np.save(args.output, corpus, allow_pickle=False)
    except OSError as error:
        raise InputError(f'cannot write {args.output}: {error.strerror}', module='cli') from error

    _emit(added=len(latents), total=corpus.shape[0], latent_dim=corpus.shape[1])
    return 0


COMMANDS = {
    'fit-codebook': cmd_fit_codebook,
    'compress': cmd_compress,
    'decompress': cmd_decompress,
    'eval': cmd_eval,
    'bench-quant': cmd_bench_quant,
    'bench-init': cmd_bench_init,
    'make-model': cmd_make_model,
    'collect-latents': cmd_collect_latents,
}


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    config.apply_overrides(args.overrides)
    if args.seed is not None:
        config.search.seed = args.seed
    config.validate()
    return config


def main(argv: Sequence[str]) -> int:
    '''
    Run a command

    ### Parameters
    `argv` : `Sequence[str]`
        A standard argument list, program name first; most likely `sys.argv`

    ### Returns
    The process exit code
    '''
    try:
        args = parse_args(argv[1:], prog=osp.basename(argv[0]) if argv else PROGRAM)
        log.init(args.log_config, verbosity=args.verbose)
        config = _load_config(args)
        log.CLI.info('Running %s', args.command)
        return COMMANDS[args.command](args, config)
    except CodecError as error:
        log.subsystem(error.module).debug('%s', error.diagnostic(), exc_info=True)
        print(error.diagnostic(), file=sys.stderr)
        return error.exit_code
    except Exception as error:  # pylint: disable=broad-except
        log.CLI.debug('Unexpected error', exc_info=True)
        text = ' '.join(f'{type(error).__name__}: {error}'.split())
        print(f'error code=1 module=internal message={text}', file=sys.stderr)
        return 1


def run_until_exit():
    '''Run `main()` with the process arguments and exit with its result'''
    sys.exit(main(sys.argv))
