# Eryn Wells <eryn@erynwells.me>

'''
ADMM search. The quantization constraint z ∈ S is split off into an auxiliary
variable u, giving the augmented Lagrangian

    L(z, u, η) = F(z) + μ/2·‖z − u + η‖² − μ/2·‖η‖²

which is minimized alternately over z by gradient steps, over u by projection,
and followed by a dual ascent step on the scaled multiplier η.
'''

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .base import LatentSearch


def dual_update(eta: np.ndarray, z: np.ndarray, u: np.ndarray) -> np.ndarray:
    '''η ← η + z − u'''
    return eta + z - u


def augmented_lagrangian(value: float, z: np.ndarray, u: np.ndarray, eta: np.ndarray, mu: float) -> float:
    residual = z - u + eta
    return float(value + 0.5 * mu * (residual @ residual - eta @ eta))


@dataclass
class AdmmState:
    '''
    ### Attributes
    `z` : `np.ndarray`
        The unconstrained latent vector
    `u` : `np.ndarray`
        The auxiliary vector; always made of codebook centers
    `eta` : `np.ndarray`
        The scaled dual variable
    `iteration` : `int`
    `history` : `List[float]`
        Objective per iteration
    '''
    z: np.ndarray
    u: np.ndarray
    eta: np.ndarray
    iteration: int = 0
    history: List[float] = field(default_factory=list)


class AdmmSearch(LatentSearch):
    '''Alternates a gradient z-step, a projection u-step and a dual update; projects z as the final step.'''

    method = 'admm'

    def _search(self, context, z0: np.ndarray) -> np.ndarray:
        config = self.config
        report = context.report
        mu = config.mu

        state = AdmmState(z=z0.copy(), u=context.project(z0), eta=np.zeros_like(z0))
        state.history = report.history

        while state.iteration < config.max_iters:
            for inner in range(config.inner_steps):
                value, grad = context.evaluate(state.z)
                if inner == 0:
                    context.record(value, state.z)
                    report.lagrangian_history.append(augmented_lagrangian(value, state.z, state.u, state.eta, mu))
                state.z = context.optimizer.step(state.z, grad + mu * (state.z - state.u + state.eta))

            state.u = context.project(state.z + state.eta)
            state.eta = dual_update(state.eta, state.z, state.u)
            state.iteration += 1
            report.iterations = state.iteration
            report.residual_history.append(float(np.linalg.norm(state.z - state.u)))

            if context.converged(config.convergence_tol):
                report.converged = True
                break

        return context.project(state.z)
