# Eryn Wells <eryn@erynwells.me>

'''
Reverse-mode differentiation over chains of fixed-weight layers.

`forward()` runs a model and records a `Tape`. The caller evaluates a scalar
objective on the tape's output, closes the tape with the objective's gradient
with respect to that output (and, optionally, with respect to intermediate
activations), and `backward_input()` turns that into the gradient with respect
to the model input. All arithmetic happens in float64.
'''

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Protocol, Sequence

import numpy as np

from .. import log
from ..errors import CodecError
from .layers import Layer, Shape, ShapeError


class TapeError(CodecError):
    '''Misuse of a tape: consumed twice, or never closed with a scalar objective'''
    module = 'autodiff'


class LayerChain(Protocol):
    '''Anything forward() can run: a model, or a bare chain of layers with a declared input shape'''
    layers: Sequence[Layer]
    input_shape: Shape


@dataclass
class TapeNode:
    '''
    One layer evaluation recorded on a tape.

    ### Attributes
    `index` : `int`
        Position of the layer in its model
    `layer` : `Layer`
        The layer that was evaluated
    `input_shape` : `Shape`
        Shape of the layer input
    `output` : `np.ndarray`
        The layer output, kept for activation-level objectives
    `cache` : `Any`
        Whatever the layer needs for its backward pass
    '''
    index: int
    layer: Layer
    input_shape: Shape
    output: np.ndarray
    cache: Any


class Tape:
    '''
    A single-use record of one forward pass.

    Nodes are stored in evaluation order, which for a layer chain is also a
    topological order. A tape is closed exactly once with the scalar objective
    and consumed exactly once by `backward_input()`.
    '''

    def __init__(self, model_input: np.ndarray):
        self.input = model_input
        self.nodes: List[TapeNode] = []
        self.objective: Optional[float] = None
        self.consumed = False
        self.output_gradient: Optional[np.ndarray] = None
        self.node_gradients: Dict[int, np.ndarray] = {}

    @property
    def output(self) -> np.ndarray:
        '''Output of the last recorded layer, or the input for an empty chain'''
        return self.nodes[-1].output if self.nodes else self.input

    def activation(self, index: int) -> np.ndarray:
        '''Output of the layer at position `index`'''
        return self.nodes[index].output

    def close(self, objective: Any,
              output_gradient: Optional[np.ndarray] = None,
              node_gradients: Optional[Dict[int, np.ndarray]] = None):
        '''
        Record the terminal objective.

        ### Parameters
        `objective` : scalar
            Value of the objective evaluated on this pass
        `output_gradient` : `Optional[np.ndarray]`
            Gradient of the objective with respect to `self.output`. Omitted means zero.
        `node_gradients` : `Optional[Dict[int, np.ndarray]]`
            Extra gradients with respect to the outputs of intermediate layers, keyed by layer index
        '''
        if self.consumed:
            raise TapeError('tape has already been consumed')
        if np.ndim(objective) != 0:
            raise TapeError(f'terminal objective must be a scalar, got shape {np.shape(objective)}')

        output = self.output
        if output_gradient is None:
            output_gradient = np.zeros_like(output)
        output_gradient = np.asarray(output_gradient, dtype=np.float64)
        if output_gradient.shape != output.shape:
            raise TapeError(f'output gradient has shape {output_gradient.shape}, output has {output.shape}')

        gradients = {}
        for index, gradient in (node_gradients or {}).items():
            gradient = np.asarray(gradient, dtype=np.float64)
            if not 0 <= index < len(self.nodes) or gradient.shape != self.nodes[index].output.shape:
                raise TapeError(f'no activation of shape {gradient.shape} at node {index}')
            gradients[index] = gradient

        self.objective = float(objective)
        self.output_gradient = output_gradient
        self.node_gradients = gradients


def forward(model: LayerChain, model_input: Any) -> tuple:
    '''
    Run `model` on `model_input`.

    ### Returns
    A tuple `(output, tape)`

    ### Raises
    `ShapeError` carrying the index of the offending layer; index 0 when the
    input itself doesn't have the model's declared input shape
    '''
    x = np.asarray(model_input, dtype=np.float64)
    if x.shape != tuple(model.input_shape):
        raise ShapeError(f'model expects input of shape {tuple(model.input_shape)}, got {x.shape}',
                         layer_index=0)

    tape = Tape(x)
    for index, layer in enumerate(model.layers):
        try:
            expected_shape = layer.output_shape(x.shape)
        except ShapeError as error:
            raise ShapeError(error.message, layer_index=index) from error

        y, cache = layer.forward(x)
        if y.shape != expected_shape:
            raise ShapeError(f'produced {y.shape}, declared {expected_shape}', layer_index=index)

        tape.nodes.append(TapeNode(index=index, layer=layer, input_shape=x.shape, output=y, cache=cache))
        x = y

    return x, tape


def backward_input(tape: Tape) -> np.ndarray:
    '''
    Propagate the gradient recorded by `Tape.close()` back to the model input.

    ### Returns
    The gradient of the tape's objective with respect to the model input, with the input's shape
    '''
    if tape.consumed:
        raise TapeError('tape has already been consumed')
    if tape.objective is None or tape.output_gradient is None:
        raise TapeError('tape was not closed with a scalar objective')

    tape.consumed = True

    grad = tape.output_gradient
    node_gradients = tape.node_gradients
    for node in reversed(tape.nodes):
        if node.index in node_gradients:
            grad = grad + node_gradients[node.index]
        grad = node.layer.backward(grad, node.cache)

    log.AUTODIFF.debug('Backward pass through %d nodes, objective %g', len(tape.nodes), tape.objective)

    return grad
