# Eryn Wells <eryn@erynwells.me>

import numpy as np

from .base import LatentSearch


class DirectSearch(LatentSearch):
    '''
    Direct quantization: every gradient step is followed by a projection onto the
    codebook, so the objective is always evaluated at a quantized vector.

    The quantized iterate with the lowest objective seen is returned.

    A step shorter than half the gap between neighboring centers projects back
    onto the vector it started from, so the objective doesn't change and the
    convergence test ends the search. With the default step of 0.01 and
    codebooks of a few levels this usually happens after a single iteration,
    leaving the result at Q(z₀). That is the main reason direct
    quantization scores far worse than ADMM in `bench-quant`.
    '''

    method = 'direct'

    def _search(self, context, z0: np.ndarray) -> np.ndarray:
        config = self.config
        report = context.report

        z = context.project(z0)
        best, best_value = z, None

        for _ in range(config.max_iters):
            value, grad = context.evaluate(z)
            context.record(value, z)
            if best_value is None or value < best_value:
                best, best_value = z, value

            if context.converged(config.convergence_tol):
                report.converged = True
                break

            z = context.project(context.optimizer.step(z, grad))
            report.iterations += 1

        if report.iterations and not report.converged:
            value = context.objective_at(z)
            if value < best_value:
                best = z

        return best
