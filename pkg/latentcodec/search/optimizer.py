# Eryn Wells <eryn@erynwells.me>

'''
First-order update rules for latent vectors.
'''

from typing import TYPE_CHECKING, Optional

import numpy as np

from ..errors import NumericError

if TYPE_CHECKING:
    from .base import SearchConfig


class NonFiniteGradientError(NumericError):
    '''A gradient containing NaN or infinite values'''
    module = 'search'


def _check_gradient(z: np.ndarray, grad: np.ndarray):
    if grad.shape != z.shape:
        raise ValueError(f'gradient has shape {grad.shape}, latent has {z.shape}')
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad.ravel()))[0])
        raise NonFiniteGradientError(f'gradient element {bad} is {grad.ravel()[bad]}')


class Optimizer:
    '''Abstract optimizer. Optimizers carry state between steps, so each search gets its own.'''

    def __init__(self, step: float):
        self.step_size = step

    def step(self, z: np.ndarray, grad: np.ndarray) -> np.ndarray:
        '''Return the updated latent vector. Doesn't modify `z`.'''
        raise NotImplementedError()


class Sgd(Optimizer):
    '''z ← z − α·g'''

    def step(self, z: np.ndarray, grad: np.ndarray) -> np.ndarray:
        grad = np.asarray(grad, dtype=np.float64)
        _check_gradient(z, grad)
        return z - self.step_size * grad

    def __repr__(self):
        return f'{self.__class__.__name__}(step={self.step_size})'


class Adam(Optimizer):
    '''Adam with bias-corrected first and second moment estimates.'''

    def __init__(self, step: float, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        super().__init__(step)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.first_moment: Optional[np.ndarray] = None
        self.second_moment: Optional[np.ndarray] = None
        self.steps = 0

    def step(self, z: np.ndarray, grad: np.ndarray) -> np.ndarray:
        grad = np.asarray(grad, dtype=np.float64)
        _check_gradient(z, grad)

        if self.first_moment is None:
            self.first_moment = np.zeros_like(grad)
            self.second_moment = np.zeros_like(grad)

        self.steps += 1
        self.first_moment = self.beta1 * self.first_moment + (1.0 - self.beta1) * grad
        self.second_moment = self.beta2 * self.second_moment + (1.0 - self.beta2) * grad * grad

        first = self.first_moment / (1.0 - self.beta1 ** self.steps)
        second = self.second_moment / (1.0 - self.beta2 ** self.steps)
        return z - self.step_size * first / (np.sqrt(second) + self.epsilon)

    def __repr__(self):
        return (f'{self.__class__.__name__}(step={self.step_size}, '
                f'beta1={self.beta1}, beta2={self.beta2}, epsilon={self.epsilon})')


def make_optimizer(config: 'SearchConfig') -> Optimizer:
    '''A fresh optimizer as configured'''
    match config.optimizer:
        case 'sgd':
            return Sgd(config.step)
        case 'adam':
            return Adam(config.step, config.beta1, config.beta2, config.epsilon)
        case _:
            raise ValueError(f'unknown optimizer {config.optimizer!r}')


def optimizer_step(optimizer: Optimizer, z: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return optimizer.step(np.asarray(z, dtype=np.float64), grad)
