# Eryn Wells <eryn@erynwells.me>

'''
Iterative hard thresholding search. Quantization happens progressively: each
sub-step runs gradient iterations on the coordinates that are still free, then
freezes the free coordinates that are closest to a codebook center at their
quantized values.
'''

import numpy as np

from .. import log
from .base import LatentSearch


def freeze_nearest(codebook, z: np.ndarray, frozen: np.ndarray, count: int) -> np.ndarray:
    '''
    Quantize and freeze the `count` free elements of `z` nearest to a center.
    Ties go to the lower index. Modifies `z` and `frozen` in place and returns
    the indices frozen.
    '''
    free = np.flatnonzero(~frozen)
    distances = codebook.distances(z[free])
    chosen = free[np.argsort(distances, kind='stable')[:count]]
    z[chosen] = codebook.project(z[chosen])
    frozen[chosen] = True
    return chosen


class IhtSearch(LatentSearch):
    '''Progressive freezing in N sub-steps with per-step quotas M_i and iteration counts n_i.'''

    method = 'iht'

    def _search(self, context, z0: np.ndarray) -> np.ndarray:
        config = self.config
        report = context.report
        quota, inner = config.iht_schedule(z0.size)

        z = z0.copy()
        frozen = np.zeros(z.size, dtype=bool)

        for substep, (count, iterations) in enumerate(zip(quota, inner)):
            start = len(report.history)
            for _ in range(iterations):
                value, grad = context.evaluate(z)
                context.record(value, z)
                if len(report.history) - start >= 2 and context.converged(config.convergence_tol):
                    break
                stepped = context.optimizer.step(z, np.where(frozen, 0.0, grad))
                z = np.where(frozen, z, stepped)
                report.iterations += 1

            chosen = freeze_nearest(context.codebook, z, frozen, count)
            report.frozen_masks.append(frozen.copy())
            log.SEARCH_ITER.debug('iht sub-step %d froze %d elements, %d of %d frozen',
                                  substep + 1, chosen.size, frozen.sum(), frozen.size)

        return z
