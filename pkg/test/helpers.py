# Eryn Wells <eryn@erynwells.me>

'''
Shared test utilities: finite-difference gradients and a brute-force quantized
minimizer for small problems.
'''

import itertools
from typing import Callable, Tuple

import numpy as np


def numeric_gradient(function: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    '''Central finite differences of a scalar function of `x`'''
    x = np.array(x, dtype=np.float64)
    gradient = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        original = x[index]
        x[index] = original + step
        upper = function(x)
        x[index] = original - step
        lower = function(x)
        x[index] = original
        gradient[index] = (upper - lower) / (2 * step)
    return gradient


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / scale)


def exhaustive_minimum(function: Callable[[np.ndarray], float], centers: np.ndarray,
                       latent_dim: int) -> Tuple[float, np.ndarray]:
    '''The lowest value of `function` over every latent vector with entries in `centers`'''
    best_value = np.inf
    best_latent = None
    for entries in itertools.product(centers, repeat=latent_dim):
        latent = np.array(entries)
        value = function(latent)
        if value < best_value:
            best_value = value
            best_latent = latent
    return best_value, best_latent
