# Eryn Wells <eryn@erynwells.me>

import numpy as np
import pytest

from latentcodec.autodiff import TapeError, backward_input, forward
from latentcodec.autodiff.layers import (
    Conv2d,
    Dense,
    FrozenAffineNorm,
    LayerSpecError,
    LeakyReLU,
    ReLU,
    Reshape,
    Residual,
    ShapeError,
    Sigmoid,
    Tanh,
    TransposedConv2d,
    as_weights)
from latentcodec.model import GeneratorModel

from .helpers import numeric_gradient, relative_error


def _rng():
    return np.random.default_rng(1234)


SEEDS = range(20)


def _check_gradient(model: GeneratorModel, rng: np.random.Generator, tolerance: float = 1e-5):
    x = rng.standard_normal(model.input_shape)
    weights = rng.standard_normal(model.output_shape)

    def objective(z):
        return float(np.sum(weights * model(z)))

    output, tape = forward(model, x)
    tape.close(np.sum(weights * output), output_gradient=weights)
    analytic = backward_input(tape)

    assert analytic.shape == x.shape
    assert relative_error(analytic, numeric_gradient(objective, x)) < tolerance


def _dense(rng):
    return GeneratorModel([Dense(rng.standard_normal((5, 3)), rng.standard_normal(5))], (3,))


def _conv2d(rng):
    layer = Conv2d(rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3), stride=2, padding=1)
    return GeneratorModel([layer], (2, 7, 6))


def _transposed_conv2d(rng):
    layer = TransposedConv2d(rng.standard_normal((2, 3, 4, 4)), rng.standard_normal(3),
                             stride=2, padding=1, output_padding=1)
    return GeneratorModel([layer], (2, 3, 3))


def _activation(activation):
    def build(rng):
        return GeneratorModel([Dense(rng.standard_normal((6, 4))), activation], (4,))
    return build


def _frozen_affine_norm(rng):
    return GeneratorModel([FrozenAffineNorm(rng.uniform(0.5, 2.0, 2), rng.standard_normal(2))], (2, 3, 3))


def _residual_and_reshape(rng):
    return GeneratorModel([
        Dense(rng.standard_normal((8, 4))),
        Reshape((2, 2, 2)),
        Residual([Conv2d(0.5 * rng.standard_normal((2, 2, 3, 3)), padding=1), Tanh()]),
        Reshape((8,)),
    ], (4,))


LAYER_KINDS = {
    'dense': _dense,
    'conv2d': _conv2d,
    'transposed-conv2d': _transposed_conv2d,
    'relu': _activation(ReLU()),
    'leaky-relu': _activation(LeakyReLU(0.2)),
    'tanh': _activation(Tanh()),
    'sigmoid': _activation(Sigmoid()),
    'frozen-affine-norm': _frozen_affine_norm,
    'residual-reshape': _residual_and_reshape,
}


@pytest.mark.parametrize('seed', SEEDS)
@pytest.mark.parametrize('kind', list(LAYER_KINDS))
def test_layer_gradients(kind, seed):
    rng = np.random.default_rng([seed, 1234])
    _check_gradient(LAYER_KINDS[kind](rng), rng)


def test_transposed_conv2d_output_shape():
    assert _transposed_conv2d(_rng()).output_shape == (3, 7, 7)


@pytest.mark.parametrize('activation, slope', [(ReLU(), 0.0), (LeakyReLU(0.2), 0.2)])
def test_kink_gradient_takes_the_lower_branch(activation, slope):
    model = GeneratorModel([activation], (3,))
    output, tape = forward(model, np.array([-1.0, 0.0, 1.0]))
    tape.close(float(np.sum(output)), output_gradient=np.ones(3))

    assert np.allclose(output, [-slope, 0.0, 1.0])
    assert np.allclose(backward_input(tape), [slope, slope, 1.0])


def test_node_gradients_reach_the_input():
    '''An objective on an intermediate activation contributes to the input gradient'''
    rng = _rng()
    model = GeneratorModel([Dense(rng.standard_normal((5, 3))), Tanh(), Dense(rng.standard_normal((2, 5)))], (3,))
    x = rng.standard_normal(3)
    weights = rng.standard_normal(5)

    def objective(z):
        _, tape = forward(model, z)
        return float(np.sum(weights * tape.activation(1)))

    _, tape = forward(model, x)
    tape.close(objective(x), node_gradients={1: weights})
    assert relative_error(backward_input(tape), numeric_gradient(objective, x)) < 1e-5


def test_conv2d_matches_direct_sum():
    rng = _rng()
    weight = rng.standard_normal((2, 1, 2, 2))
    x = rng.standard_normal((1, 3, 3))
    y = GeneratorModel([Conv2d(weight)], (1, 3, 3))(x)

    expected = np.zeros((2, 2, 2))
    for o in range(2):
        for i in range(2):
            for j in range(2):
                expected[o, i, j] = np.sum(as_weights(weight)[o, 0] * x[0, i:i + 2, j:j + 2])

    assert np.allclose(y, expected)


def test_transposed_conv2d_is_adjoint_of_conv2d():
    rng = _rng()
    weight = rng.standard_normal((3, 2, 3, 3))
    conv = GeneratorModel([Conv2d(weight, stride=2, padding=1)], (2, 7, 7))
    transposed = GeneratorModel([TransposedConv2d(weight, stride=2, padding=1)], (3, 4, 4))

    x = rng.standard_normal((2, 7, 7))
    y = rng.standard_normal((3, 4, 4))

    assert transposed.output_shape == (2, 7, 7)
    assert np.isclose(np.sum(conv(x) * y), np.sum(x * transposed(y)))


def test_shape_error_names_the_layer():
    with pytest.raises(ShapeError) as error:
        GeneratorModel([Dense(np.ones((4, 3))), Dense(np.ones((2, 5)))], (3,))
    assert error.value.layer_index == 1
    assert error.value.message.startswith('layer 1: ')


def test_forward_rejects_wrong_input_shape():
    model = GeneratorModel([Dense(np.ones((4, 3)))], (3,))
    with pytest.raises(ShapeError) as error:
        forward(model, np.ones(4))
    assert error.value.layer_index == 0


def test_residual_must_preserve_shape():
    with pytest.raises(ShapeError):
        GeneratorModel([Residual([Dense(np.ones((2, 3)))])], (3,))


def test_invalid_layer_specs():
    with pytest.raises(LayerSpecError):
        FrozenAffineNorm([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(LayerSpecError):
        TransposedConv2d(np.ones((1, 1, 3, 3)), stride=2, output_padding=2)
    with pytest.raises(LayerSpecError):
        Dense(np.ones(3))


def test_tape_is_single_use():
    model = GeneratorModel([Dense(np.eye(2))], (2,))
    output, tape = forward(model, np.ones(2))
    tape.close(float(np.sum(output)), output_gradient=np.ones(2))
    backward_input(tape)

    with pytest.raises(TapeError):
        backward_input(tape)
    with pytest.raises(TapeError):
        tape.close(0.0)


def test_unclosed_tape_is_rejected():
    _, tape = forward(GeneratorModel([Tanh()], (2,)), np.zeros(2))
    with pytest.raises(TapeError):
        backward_input(tape)


def test_tape_requires_a_scalar_objective():
    output, tape = forward(GeneratorModel([Tanh()], (2,)), np.zeros(2))
    with pytest.raises(TapeError):
        tape.close(output)


def test_weights_are_single_precision_exact():
    weight = as_weights([0.1, 1 / 3])
    assert weight.dtype == np.float64
    assert np.array_equal(weight, weight.astype(np.float32).astype(np.float64))
