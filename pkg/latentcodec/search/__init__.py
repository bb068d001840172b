# Eryn Wells <eryn@erynwells.me>

'''
Latent search: find the quantized latent vector whose generator output
minimizes an objective against a target signal.

Three methods are available. `direct` projects after every gradient step,
`admm` splits the quantization constraint off with the alternating direction
method of multipliers, and `iht` freezes coordinates progressively.
'''

from typing import Optional, Tuple

import numpy as np

from ..errors import ConfigurationError
from ..model import GeneratorModel
from ..objectives import SignalObjective
from ..quantization import Codebook
from .admm import AdmmSearch, AdmmState, augmented_lagrangian, dual_update
from .base import (
    METHODS,
    OPTIMIZERS,
    LatentDimensionError,
    LatentSearch,
    NonFiniteObjectiveError,
    SearchConfig,
    SearchReport,
    initialize)
from .direct import DirectSearch
from .iht import IhtSearch, freeze_nearest
from .optimizer import Adam, NonFiniteGradientError, Optimizer, Sgd, make_optimizer, optimizer_step


def make_search(config: SearchConfig) -> LatentSearch:
    '''
    The search implementing `config.method`. Unquantized searches always use
    the direct loop, which without a projection is plain gradient descent.
    '''
    if not config.quantize:
        return DirectSearch(config)

    match config.method:
        case 'direct':
            return DirectSearch(config)
        case 'admm':
            return AdmmSearch(config)
        case 'iht':
            return IhtSearch(config)
        case _:
            raise ConfigurationError(f'unknown search method {config.method!r}')


def search(x: np.ndarray, generator: GeneratorModel, codebook: Optional[Codebook],
           objective: SignalObjective, config: SearchConfig, *,
           encoder: Optional[GeneratorModel] = None,
           initial: Optional[np.ndarray] = None) -> Tuple[np.ndarray, SearchReport]:
    '''Run the configured search. See `LatentSearch.run()`.'''
    return make_search(config).run(x, generator, codebook, objective, encoder=encoder, initial=initial)


def search_direct(x, generator, codebook, objective, config: SearchConfig, **kwargs):
    return DirectSearch(config).run(x, generator, codebook, objective, **kwargs)


def search_admm(x, generator, codebook, objective, config: SearchConfig, **kwargs):
    return AdmmSearch(config).run(x, generator, codebook, objective, **kwargs)


def search_iht(x, generator, codebook, objective, config: SearchConfig, **kwargs):
    return IhtSearch(config).run(x, generator, codebook, objective, **kwargs)
