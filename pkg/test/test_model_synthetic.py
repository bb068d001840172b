# Eryn Wells <eryn@erynwells.me>

import numpy as np
import pytest

from latentcodec.model.synthetic import (
    SyntheticKind,
    SyntheticModelSpec,
    SyntheticSpecError,
    conv_feature_network,
    dct_basis,
    linear_discriminator,
    make_synthetic,
    pseudo_inverse_encoder)


def test_orthonormal_generator_has_orthonormal_columns():
    model = make_synthetic(SyntheticModelSpec(SyntheticKind.ORTHONORMAL_LINEAR, 4, (16,), seed=3))
    weight = model.layers[0].weight
    assert weight.shape == (16, 4)
    assert np.allclose(weight.T @ weight, np.eye(4), atol=1e-6)


def test_synthetic_models_are_pure_functions_of_their_spec():
    spec = SyntheticModelSpec(SyntheticKind.RANDOM_MLP, 3, (2, 4), depth=3, width=8, seed=11)
    assert make_synthetic(spec) == make_synthetic(spec)
    assert make_synthetic(spec).output_shape == (2, 4)

    other = SyntheticModelSpec(SyntheticKind.RANDOM_MLP, 3, (2, 4), depth=3, width=8, seed=12)
    assert make_synthetic(spec).model_id != make_synthetic(other).model_id


def test_dct_basis_is_orthonormal():
    basis = dct_basis(8, 8)
    assert np.allclose(basis.T @ basis, np.eye(8))
    # The first basis vector is constant
    assert np.allclose(basis[:, 0], 1 / np.sqrt(8))


def test_pseudo_inverse_encoder_inverts_linear_generator():
    generator = make_synthetic(SyntheticModelSpec(SyntheticKind.DCT_DECODER, 4, (2, 8)))
    encoder = pseudo_inverse_encoder(generator)
    z = np.array([0.5, -1.0, 0.25, 2.0])

    assert encoder.input_shape == (2, 8)
    assert np.allclose(encoder(generator(z)), z, atol=1e-5)


def test_pseudo_inverse_encoder_rejects_nonlinear_generators():
    generator = make_synthetic(SyntheticModelSpec(SyntheticKind.RANDOM_MLP, 2, (4,)))
    with pytest.raises(SyntheticSpecError):
        pseudo_inverse_encoder(generator)


def test_signal_must_be_at_least_as_large_as_latent():
    with pytest.raises(SyntheticSpecError):
        make_synthetic(SyntheticModelSpec(SyntheticKind.ORTHONORMAL_LINEAR, 8, (4,)))


def test_auxiliary_networks_accept_signal_shapes():
    assert linear_discriminator((3, 4, 4), seed=0).output_shape == (1,)
    features = conv_feature_network((4, 6), seed=0, channels=3)
    assert features.input_shape == (4, 6)
    assert features.output_shape == (3, 4, 6)
    assert len(features.conv_layer_indices) == 2
