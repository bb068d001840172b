# Eryn Wells <eryn@erynwells.me>

'''
Benchmarks over seeded synthetic problems.

`bench_quant` compares the quantized search methods across a grid of latent
dimensions and codebook sizes. `bench_init` compares starting a search from a
random vector with starting it from an encoder's output.

Every instance is a pure function of its seed: the generator, the target signal
and the codebook are all drawn from it, so repeated runs produce identical rows.
'''

import csv
import dataclasses
import io
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, TextIO, Tuple

import numpy as np

from . import log
from .entropy import HuffmanTable
from .errors import ConfigurationError
from .model import GeneratorModel
from .model.synthetic import SyntheticKind, SyntheticModelSpec, make_synthetic, pseudo_inverse_encoder
from .objectives import MseObjective
from .pipeline import psnr_from_mse
from .quantization import Codebook, kmeans
from .search import METHODS, SearchConfig, make_search

QUANT_HEADER = ('method', 'latent_dim', 'levels', 'seed', 'final_objective', 'payload_bits')
SUMMARY_HEADER = ('method', 'latent_dim', 'levels', 'seeds', 'mean_objective', 'std_objective', 'mean_payload_bits')
INIT_HEADER = ('seed', 'init', 'iteration', 'objective', 'psnr')

# Generator outputs of the suite lie roughly in [−1, 1]
SIGNAL_PEAK = 2.0


@dataclass
class BenchConfig:
    '''
    The synthetic suite.

    ### Attributes
    `latent_dims` : `List[int]`
    `levels` : `List[int]`
        Codebook sizes K
    `seeds` : `List[int]`
        One problem instance per seed in every grid cell
    `methods` : `List[str]`
        Search methods to compare
    `generator` : `str`
        Synthetic generator kind
    `signal_factor` : `int`
        Signal size as a multiple of the latent dimension
    `noise` : `float`
        Standard deviation of noise added to the target signals
    `codebook_samples` : `int`
        Size of the Gaussian corpus each codebook is fitted on
    `global_table` : `bool`
        Count payload bits with one code table per grid cell and method instead of one per signal
    `iterations` : `int`
        Iterations reported by `bench_init`
    '''

    latent_dims: List[int] = field(default_factory=lambda: [8, 16])
    levels: List[int] = field(default_factory=lambda: [4, 16])
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    generator: str = SyntheticKind.ORTHONORMAL_LINEAR.value
    signal_factor: int = 4
    noise: float = 0.0
    codebook_samples: int = 4096
    global_table: bool = False
    iterations: int = 100

    def validate(self):
        if not self.latent_dims or not self.levels or not self.seeds:
            raise ConfigurationError('the benchmark grid is empty')
        if any(d < 1 for d in self.latent_dims):
            raise ConfigurationError(f'latent dimensions must be positive, got {self.latent_dims}')
        if any(k < 2 for k in self.levels):
            raise ConfigurationError(f'codebook sizes must be at least 2, got {self.levels}')
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigurationError(f'methods must be chosen from {", ".join(METHODS)}, got {self.methods}')
        if self.generator not in {kind.value for kind in SyntheticKind}:
            raise ConfigurationError(f'unknown synthetic generator {self.generator!r}')
        if self.signal_factor < 1 or self.codebook_samples < max(self.levels) or self.iterations < 1:
            raise ConfigurationError('signal_factor, codebook_samples and iterations must be large enough')
        if not self.noise >= 0:
            raise ConfigurationError(f'noise must be nonnegative, got {self.noise}')


@dataclass
class BenchInstance:
    '''One seeded problem: a generator, a target and a codebook'''

    generator: GeneratorModel
    target: np.ndarray
    codebook: Codebook
    latent: np.ndarray


def make_instance(config: BenchConfig, latent_dim: int, levels: int, seed: int) -> BenchInstance:
    '''
    A target made by running the generator on a standard normal latent vector,
    and a codebook fitted to standard normal samples.
    '''
    spec = SyntheticModelSpec(kind=SyntheticKind(config.generator),
                              latent_dim=latent_dim,
                              signal_shape=(config.signal_factor * latent_dim,),
                              seed=seed)
    generator = make_synthetic(spec)

    rng = np.random.default_rng([seed, latent_dim, levels])
    latent = rng.standard_normal(latent_dim)
    target = generator(latent) + config.noise * rng.standard_normal(generator.output_shape)
    codebook = kmeans(rng.standard_normal(config.codebook_samples), levels).codebook
    return BenchInstance(generator=generator, target=target, codebook=codebook, latent=latent)


@dataclass
class QuantRow:
    method: str
    latent_dim: int
    levels: int
    seed: int
    final_objective: float
    payload_bits: int
    symbols: np.ndarray = field(repr=False, default=None)


def _format(value) -> str:
    if isinstance(value, float):
        return f'{value:.9g}'
    return str(value)


def _write_rows(output: TextIO, header: Sequence[str], rows: Sequence[Sequence]):
    writer = csv.writer(output, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format(value) for value in row])


def bench_quant(config: BenchConfig, search_config: SearchConfig) -> List[QuantRow]:
    '''
    Run every method on every instance of the grid.

    ### Returns
    One row per instance and method, grouped by latent dimension, then codebook
    size, then method, ordered by seed within a group
    '''
    config.validate()
    search_config.validate()
    objective = MseObjective()

    rows: List[QuantRow] = []
    for latent_dim in config.latent_dims:
        for levels in config.levels:
            cell: List[QuantRow] = []
            for seed in config.seeds:
                instance = make_instance(config, latent_dim, levels, seed)
                for method in config.methods:
                    method_config = dataclasses.replace(search_config, method=method, seed=seed)
                    latent, report = make_search(method_config).run(
                        instance.target, instance.generator, instance.codebook, objective)
                    symbols = instance.codebook.symbol_indices(latent)
                    table = HuffmanTable.from_frequencies(np.bincount(symbols, minlength=levels))
                    cell.append(QuantRow(method, latent_dim, levels, seed, report.final_objective,
                                         table.encoded_bit_count(symbols), symbols))

            if config.global_table:
                _apply_global_tables(cell, levels)

            # Order rows by method, then seed
            cell.sort(key=lambda row: (config.methods.index(row.method), config.seeds.index(row.seed)))
            rows.extend(cell)
            log.BENCH.info('Finished cell latent_dim=%d levels=%d', latent_dim, levels)

    return rows


def _apply_global_tables(cell: List[QuantRow], levels: int):
    '''Recount payload bits with one table per method, built from the whole cell'''
    for method in {row.method for row in cell}:
        method_rows = [row for row in cell if row.method == method]
        counts = np.bincount(np.concatenate([row.symbols for row in method_rows]), minlength=levels)
        table = HuffmanTable.from_frequencies(counts)
        for row in method_rows:
            row.payload_bits = table.encoded_bit_count(row.symbols)


def summarize(rows: Sequence[QuantRow]) -> List[Tuple]:
    '''Mean and standard deviation of the final objective and mean payload bits per method and grid cell'''
    cells: Dict[Tuple[str, int, int], List[QuantRow]] = {}
    for row in rows:
        cells.setdefault((row.method, row.latent_dim, row.levels), []).append(row)

    summary = []
    for (method, latent_dim, levels), cell in cells.items():
        objectives = np.array([row.final_objective for row in cell])
        bits = np.array([row.payload_bits for row in cell], dtype=np.float64)
        summary.append((method, latent_dim, levels, len(cell),
                        float(objectives.mean()), float(objectives.std()), float(bits.mean())))
    return summary


def write_quant_csv(output: TextIO, rows: Sequence[QuantRow]):
    _write_rows(output, QUANT_HEADER, [(row.method, row.latent_dim, row.levels, row.seed,
                                        row.final_objective, row.payload_bits) for row in rows])


def write_summary_csv(output: TextIO, rows: Sequence[QuantRow]):
    _write_rows(output, SUMMARY_HEADER, summarize(rows))


def quant_csv(rows: Sequence[QuantRow]) -> str:
    output = io.StringIO()
    write_quant_csv(output, rows)
    return output.getvalue()


@dataclass
class InitRow:
    seed: int
    init: str
    iteration: int
    objective: float
    psnr: float


def bench_init(config: BenchConfig, search_config: SearchConfig) -> List[InitRow]:
    '''
    For every seed, the objective after each of `config.iterations` iterations
    when starting from a random vector (`random`) and from the pseudo-inverse
    encoder's output (`encoder`), and the objective of the quantized encoder
    output without any search (`encoder-oneshot`, iteration 0). Runs on the
    smallest latent dimension and codebook size of the grid. PSNR is computed
    from the objective, which is MSE.
    '''
    config.validate()
    if config.generator == SyntheticKind.RANDOM_MLP.value:
        raise ConfigurationError('the initialization benchmark needs a linear generator')

    latent_dim = min(config.latent_dims)
    levels = min(config.levels)
    iterations = config.iterations
    objective = MseObjective()
    search_config = dataclasses.replace(search_config, max_iters=iterations + 1, convergence_tol=0.0)
    search_config.validate()

    rows: List[InitRow] = []
    for seed in config.seeds:
        instance = make_instance(config, latent_dim, levels, seed)
        encoder = pseudo_inverse_encoder(instance.generator)
        codebook = instance.codebook if search_config.quantize else None
        seed_config = dataclasses.replace(search_config, seed=seed)

        oneshot = instance.codebook.project(encoder(instance.target))
        value = objective.evaluate(instance.target, oneshot, instance.generator)[0]
        rows.append(InitRow(seed, 'encoder-oneshot', 0, value, psnr_from_mse(value, SIGNAL_PEAK)))

        for init, init_encoder in (('random', None), ('encoder', encoder)):
            _, report = make_search(seed_config).run(instance.target, instance.generator, codebook, objective,
                                                     encoder=init_encoder)
            # Entry k of the history is the objective after k steps
            history = report.padded_history(iterations + 1)[1:]
            for iteration, value in enumerate(history, start=1):
                rows.append(InitRow(seed, init, iteration, float(value), psnr_from_mse(float(value), SIGNAL_PEAK)))

    return rows


def write_init_csv(output: TextIO, rows: Sequence[InitRow]):
    _write_rows(output, INIT_HEADER, [(row.seed, row.init, row.iteration, row.objective, row.psnr) for row in rows])
