# Eryn Wells <eryn@erynwells.me>

'''
Pieces shared by every latent search method: configuration, the search report,
latent initialization, and the abstract `LatentSearch`.
'''

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .. import log
from ..errors import ConfigurationError, InputError, NumericError
from ..model import GeneratorModel
from ..objectives import SignalObjective
from ..quantization import Codebook
from .optimizer import Optimizer, make_optimizer

METHODS = ('direct', 'admm', 'iht')
OPTIMIZERS = ('sgd', 'adam')


class LatentDimensionError(InputError):
    module = 'search'


class NonFiniteObjectiveError(NumericError):
    module = 'search'


@dataclass
class SearchConfig:
    '''
    Configuration of a latent search.

    ### Attributes
    `method` : `str`
        One of `direct`, `admm`, `iht`
    `max_iters` : `int`
        Iteration limit. IHT spreads it over its sub-steps unless `iht_inner` is given.
    `step` : `float`
        Optimizer step size α
    `optimizer` : `str`
        `sgd` or `adam`
    `beta1`, `beta2`, `epsilon` : `float`
        Adam moment decay rates and stabilizer
    `mu` : `float`
        ADMM penalty
    `inner_steps` : `int`
        Gradient steps per ADMM z-update
    `convergence_tol` : `float`
        Stop when consecutive objective values differ by at most this much
    `iht_substeps` : `int`
        Number of IHT sub-steps N. Zero derives it from `iht_quota`, or uses 4.
    `iht_quota` : `List[int]`
        Elements frozen in each sub-step. Empty splits the latent dimension evenly.
    `iht_inner` : `List[int]`
        Gradient iterations in each sub-step. Empty splits `max_iters` evenly.
    `seed` : `int`
        Seed of the random initialization
    `quantize` : `bool`
        When false, run the same loop without projecting, producing unquantized latents
    `track_quantized` : `bool`
        Also record the objective at the projected iterate every iteration
    '''

    method: str = 'admm'
    max_iters: int = 500
    step: float = 0.01
    optimizer: str = 'adam'
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    mu: float = 0.01
    inner_steps: int = 1
    convergence_tol: float = 1e-6
    iht_substeps: int = 0
    iht_quota: List[int] = field(default_factory=list)
    iht_inner: List[int] = field(default_factory=list)
    seed: int = 0
    quantize: bool = True
    track_quantized: bool = False

    def validate(self):
        '''Range-check every field. Raises `ConfigurationError`.'''
        if self.method not in METHODS:
            raise ConfigurationError(f'search.method must be one of {", ".join(METHODS)}, got {self.method!r}')
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(
                f'search.optimizer must be one of {", ".join(OPTIMIZERS)}, got {self.optimizer!r}')
        if self.max_iters < 0:
            raise ConfigurationError(f'search.max_iters must be nonnegative, got {self.max_iters}')
        if not self.step > 0:
            raise ConfigurationError(f'search.step must be positive, got {self.step}')
        if not self.mu > 0:
            raise ConfigurationError(f'search.mu must be positive, got {self.mu}')
        if self.inner_steps < 1:
            raise ConfigurationError(f'search.inner_steps must be at least 1, got {self.inner_steps}')
        if not self.convergence_tol >= 0:
            raise ConfigurationError(f'search.convergence_tol must be nonnegative, got {self.convergence_tol}')
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError(f'Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}')
        if not self.epsilon > 0:
            raise ConfigurationError(f'search.epsilon must be positive, got {self.epsilon}')
        if self.iht_substeps < 0:
            raise ConfigurationError(f'search.iht_substeps must be nonnegative, got {self.iht_substeps}')

    def iht_schedule(self, latent_dim: int) -> Tuple[List[int], List[int]]:
        '''
        The IHT freezing schedule for a latent vector of `latent_dim` elements.

        ### Returns
        A tuple `(quota, inner)`: elements frozen and gradient iterations, per sub-step
        '''
        substeps = self.iht_substeps or len(self.iht_quota) or len(self.iht_inner) or min(4, latent_dim)
        quota = list(self.iht_quota) or [len(part) for part in np.array_split(np.arange(latent_dim), substeps)]
        inner = list(self.iht_inner) or [len(part) for part in np.array_split(np.arange(self.max_iters), substeps)]

        if len(quota) != substeps or len(inner) != substeps:
            raise ConfigurationError(
                f'IHT needs {substeps} quotas and iteration counts, got {len(quota)} and {len(inner)}')
        if any(m < 1 for m in quota) or sum(quota) != latent_dim:
            raise ConfigurationError(
                f'IHT quotas must be positive and sum to the latent dimension {latent_dim}, got {quota}')
        if any(n < 0 for n in inner):
            raise ConfigurationError(f'IHT iteration counts must be nonnegative, got {inner}')

        return quota, inner


@dataclass
class SearchReport:
    '''
    What happened during a search.

    ### Attributes
    `method` : `str`
    `history` : `List[float]`
        The objective at the iterate entering each iteration
    `quantized_history` : `List[float]`
        The objective at the projected iterate, when tracked
    `lagrangian_history` : `List[float]`
        ADMM's augmented Lagrangian per iteration
    `residual_history` : `List[float]`
        ADMM's primal residual ‖z − u‖ per iteration
    `frozen_masks` : `List[np.ndarray]`
        IHT's frozen coordinates after each sub-step
    `iterations` : `int`
        Gradient iterations performed
    `converged` : `bool`
        Whether the objective change dropped below the tolerance before the iteration limit
    `final_objective` : `float`
        The objective at the returned latent vector
    '''

    method: str
    history: List[float] = field(default_factory=list)
    quantized_history: List[float] = field(default_factory=list)
    lagrangian_history: List[float] = field(default_factory=list)
    residual_history: List[float] = field(default_factory=list)
    frozen_masks: List[np.ndarray] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_objective: float = float('nan')

    def padded_history(self, length: int, quantized: bool = False) -> np.ndarray:
        '''The objective history extended to `length` entries by repeating the final value'''
        history = self.quantized_history if quantized else self.history
        values = list(history[:length]) or [self.final_objective]
        values.extend([values[-1]] * (length - len(values)))
        return np.array(values)


def initialize(x: np.ndarray, encoder: Optional[GeneratorModel], dim: int, seed: int) -> np.ndarray:
    '''
    The starting latent vector: E(x) when an encoder is given, otherwise a
    standard normal vector drawn with `seed`.
    '''
    if encoder is None:
        return np.random.default_rng(seed).standard_normal(dim)

    if encoder.output_size != dim:
        raise LatentDimensionError(f'encoder produces {encoder.output_shape}, latent dimension is {dim}')
    return np.asarray(encoder(x), dtype=np.float64).reshape(dim)


class LatentSearch:
    '''
    Abstract search for the latent vector minimizing an objective through a
    fixed generator. Subclasses implement `_search()`.
    '''

    method = ''

    def __init__(self, config: SearchConfig):
        config.validate()
        self.config = config

    def run(self, x: np.ndarray, generator: GeneratorModel, codebook: Optional[Codebook],
            objective: SignalObjective, *,
            encoder: Optional[GeneratorModel] = None,
            initial: Optional[np.ndarray] = None) -> Tuple[np.ndarray, SearchReport]:
        '''
        Search for the latent vector of `x`.

        ### Parameters
        `x` : `np.ndarray`
            Target signal, shaped like the generator output
        `generator` : `GeneratorModel`
        `codebook` : `Optional[Codebook]`
            Quantization centers. Only optional when `config.quantize` is false.
        `objective` : `SignalObjective`
        `encoder` : `Optional[GeneratorModel]`
            Initializes the search with E(x)
        `initial` : `Optional[np.ndarray]`
            An explicit starting vector, taking precedence over the encoder

        ### Returns
        A tuple `(latent, report)`. When quantizing, every element of `latent` is a codebook center.
        '''
        x = np.asarray(x, dtype=np.float64)
        if x.shape != generator.output_shape:
            raise LatentDimensionError(f'target has shape {x.shape}, generator produces {generator.output_shape}')
        if len(generator.input_shape) != 1:
            raise LatentDimensionError(f'generator input must be a flat latent vector, got {generator.input_shape}')
        if self.config.quantize and codebook is None:
            raise InputError('a quantized search needs a codebook', module='search')

        dim = generator.input_shape[0]
        if initial is not None:
            z0 = np.array(initial, dtype=np.float64).reshape(dim)
        else:
            z0 = initialize(x, encoder, dim, self.config.seed)

        context = _SearchContext(x, generator, codebook if self.config.quantize else None, objective,
                                 SearchReport(self.method), make_optimizer(self.config),
                                 track_quantized=self.config.track_quantized)
        latent = self._search(context, z0)

        report = context.report
        report.final_objective = context.objective_at(latent)

        log.SEARCH.info('%s search: %d iterations, converged=%s, final objective %.6g',
                        self.method, report.iterations, report.converged, report.final_objective)
        return latent, report

    def _search(self, context: '_SearchContext', z0: np.ndarray) -> np.ndarray:
        raise NotImplementedError()


class _SearchContext:
    '''Per-run state shared by the search loops'''

    def __init__(self, x: np.ndarray, generator: GeneratorModel, codebook: Optional[Codebook],
                 objective: SignalObjective, report: SearchReport, optimizer: Optimizer,
                 track_quantized: bool = False):
        self.x = x
        self.generator = generator
        self.codebook = codebook
        self.objective = objective
        self.report = report
        self.optimizer = optimizer
        self.track_quantized = track_quantized

    def evaluate(self, z: np.ndarray) -> Tuple[float, np.ndarray]:
        '''F(x, G(z)) and its gradient'''
        value, grad = self.objective.evaluate(self.x, z, self.generator)
        if not np.isfinite(value):
            raise NonFiniteObjectiveError(f'objective is {value} after {self.report.iterations} iterations')
        return value, grad

    def objective_at(self, z: np.ndarray) -> float:
        return self.evaluate(z)[0]

    def project(self, z: np.ndarray) -> np.ndarray:
        '''Q(z), or z itself for an unquantized search'''
        return self.codebook.project(z) if self.codebook is not None else z

    def record(self, value: float, z: np.ndarray):
        '''Append an iteration's objective and, when tracked, the objective at Q(z)'''
        report = self.report
        report.history.append(value)
        if self.codebook is not None and self.track_quantized:
            report.quantized_history.append(self.objective_at(self.codebook.project(z)))
        log.SEARCH_ITER.debug('%s iteration %d: objective %.9g', report.method, len(report.history), value)

    def converged(self, tolerance: float) -> bool:
        '''Whether the last two recorded objective values are within `tolerance`'''
        history = self.report.history
        return len(history) >= 2 and abs(history[-1] - history[-2]) <= tolerance
