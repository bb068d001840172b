# Eryn Wells <eryn@erynwells.me>

'''
Fixed-weight networks. Generators, encoders, discriminators and feature
networks are all `GeneratorModel`s; they differ only in their shape
conventions.
'''

from typing import List, Optional, Sequence

import numpy as np

from ..autodiff import forward
from ..autodiff.layers import Conv2d, Layer, Shape, infer_shapes


class GeneratorModel:
    '''
    An immutable chain of fixed-weight layers.

    ### Attributes
    `layers` : `Tuple[Layer, ...]`
        The layers, applied in order
    `input_shape` : `Shape`
        Shape of the input: `(latent_dim,)` for a generator, the signal shape for an encoder
    `output_shape` : `Shape`
        Shape of the output
    `shapes` : `List[Shape]`
        Input shape followed by every layer's output shape
    '''

    def __init__(self, layers: Sequence[Layer], input_shape: Sequence[int]):
        self.layers = tuple(layers)
        self.input_shape: Shape = tuple(int(d) for d in input_shape)
        self.shapes: List[Shape] = infer_shapes(self.layers, self.input_shape)
        self.output_shape: Shape = self.shapes[-1]
        self._serialized: Optional[bytes] = None

    @property
    def input_dim(self) -> int:
        '''Number of elements in one input'''
        return int(np.prod(self.input_shape))

    @property
    def output_size(self) -> int:
        '''Number of elements in one output'''
        return int(np.prod(self.output_shape))

    @property
    def conv_layer_indices(self) -> List[int]:
        '''Positions of the convolution layers'''
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, Conv2d)]

    def to_bytes(self) -> bytes:
        '''Serialize to the `.bpgm` container format'''
        if self._serialized is None:
            # pylint: disable=import-outside-toplevel
            from .container import save_model
            self._serialized = save_model(self)
        return self._serialized

    @property
    def model_id(self) -> bytes:
        '''The 8-byte digest that identifies these weights'''
        return self.to_bytes()[-8:]

    def __call__(self, model_input: np.ndarray) -> np.ndarray:
        output, _ = forward(self, model_input)
        return output

    def __eq__(self, other):
        if not isinstance(other, GeneratorModel):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.model_id)

    def __str__(self):
        return f'GeneratorModel!{self.model_id.hex()} {self.input_shape} -> {self.output_shape}'

    def __repr__(self):
        return f'{self.__class__.__name__}(layers={list(self.layers)!r}, input_shape={self.input_shape})'
