# Eryn Wells <eryn@erynwells.me>

import numpy as np
import pytest

from latentcodec.codec import CodecConfig, compress, compress_batch, decode_latents, decompress, decompress_bytes
from latentcodec.entropy import CodingMode, parse_container
from latentcodec.errors import ConfigurationError, InputError, ModelMismatchError
from latentcodec.model.synthetic import SyntheticKind, SyntheticModelSpec, make_synthetic, pseudo_inverse_encoder
from latentcodec.objectives import MseObjective
from latentcodec.pipeline import ImagePipeline, ImagePipelineConfig, SpeechPipeline, SpeechPipelineConfig, psnr
from latentcodec.pipeline.image import denormalize
from latentcodec.quantization import Codebook
from latentcodec.search import SearchConfig

CODEBOOK = Codebook.uniform(16, -1.0, 1.0)


def _image_setup(seed=0):
    generator = make_synthetic(SyntheticModelSpec(SyntheticKind.ORTHONORMAL_LINEAR, 16, (1, 8, 8), seed=seed))
    pipeline = ImagePipeline(ImagePipelineConfig(width=8, height=8, channels=1))
    latent = CODEBOOK.values(np.random.default_rng(seed).integers(0, 16, size=16))
    image = denormalize(generator(latent))
    return generator, pipeline, image


def _speech_setup():
    cfg = SpeechPipelineConfig(sample_rate=8000, frame_size=128, stride=32, mel_bins=24, patch_frames=32,
                               griffin_lim_iters=5)
    generator = make_synthetic(SyntheticModelSpec(SyntheticKind.ORTHONORMAL_LINEAR, 16, (24, 32), seed=1))
    t = np.arange(4000) / 8000
    samples = 0.3 * np.sin(2 * np.pi * 440 * t) + 0.1 * np.sin(2 * np.pi * 2000 * t)
    return generator, SpeechPipeline(cfg), samples


def test_image_in_range_of_generator_is_nearly_lossless():
    generator, pipeline, image = _image_setup()
    encoder = pseudo_inverse_encoder(generator)
    result = compress(image, generator, CODEBOOK, MseObjective(), SearchConfig(method='direct', max_iters=20),
                      pipeline, encoder=encoder)

    rebuilt = decompress_bytes(result.data, generator, pipeline)
    assert rebuilt.shape == image.shape
    assert rebuilt.dtype == np.uint8
    assert psnr(image, rebuilt, 255.0) >= 40.0


def test_compression_is_deterministic():
    generator, pipeline, image = _image_setup(seed=2)
    config = SearchConfig(method='admm', max_iters=30, seed=4)
    first = compress(image, generator, CODEBOOK, MseObjective(), config, pipeline)
    second = compress(image, generator, CODEBOOK, MseObjective(), config, pipeline)
    assert first.data == second.data


def test_fixed_coding_accounting():
    generator, pipeline, image = _image_setup()
    result = compress(image, generator, CODEBOOK, MseObjective(), SearchConfig(method='direct', max_iters=5),
                      pipeline, codec_config=CodecConfig(coding='fixed'))

    assert result.bitstream.coding == CodingMode.FIXED
    assert result.payload_bits == 16 * 4
    assert result.rate == pytest.approx(64 / 64)
    assert result.total_bits == 8 * len(result.data)
    assert result.rate_unit == 'bpp'
    assert len(result.reports) == 1


def test_decoded_latents_are_the_searched_latents():
    generator, pipeline, image = _image_setup()
    result = compress(image, generator, CODEBOOK, MseObjective(), SearchConfig(method='iht', max_iters=20),
                      pipeline)
    latents = decode_latents(parse_container(result.data), generator)
    assert latents.shape == (1, 16)
    assert result.final_objective == pytest.approx(
        MseObjective()(pipeline.analyze(image)[0][0], generator(latents[0])))


def test_model_mismatch_is_detected():
    generator, pipeline, image = _image_setup()
    other = make_synthetic(SyntheticModelSpec(SyntheticKind.ORTHONORMAL_LINEAR, 16, (1, 8, 8), seed=9))
    result = compress(image, generator, CODEBOOK, MseObjective(), SearchConfig(max_iters=5), pipeline)

    with pytest.raises(ModelMismatchError) as error:
        decompress(result.bitstream, other, pipeline)
    assert error.value.exit_code == 3


def test_signal_type_mismatch_is_detected():
    generator, pipeline, image = _image_setup()
    _, speech_pipeline, _ = _speech_setup()
    result = compress(image, generator, CODEBOOK, MseObjective(), SearchConfig(max_iters=5), pipeline)
    with pytest.raises(InputError):
        decompress(result.bitstream, generator, speech_pipeline)


def test_generator_must_match_pipeline():
    generator, _, image = _image_setup()
    pipeline = ImagePipeline(ImagePipelineConfig(width=4, height=4, channels=1))
    with pytest.raises(InputError):
        compress(image, generator, CODEBOOK, MseObjective(), SearchConfig(max_iters=5), pipeline)


def test_speech_round_trip():
    generator, pipeline, samples = _speech_setup()
    result = compress(samples, generator, CODEBOOK, MseObjective(), SearchConfig(method='admm', max_iters=20),
                      pipeline, codec_config=CodecConfig(coding='fixed'))

    patches = result.bitstream.patch_count
    assert patches == 4
    assert result.payload_bits == patches * 16 * 4
    assert result.rate == pytest.approx(result.payload_bits / patches / 1000)
    assert result.rate_unit == 'kbps'

    rebuilt = decompress_bytes(result.data, generator, pipeline)
    assert rebuilt.shape == samples.shape


def test_batch_keeps_input_order():
    generator, pipeline, _ = _image_setup()
    images = [_image_setup(seed)[2] for seed in range(3)]
    config = SearchConfig(method='direct', max_iters=10)

    sequential = compress_batch(images, generator, CODEBOOK, MseObjective(), config, pipeline)
    threaded = compress_batch(images, generator, CODEBOOK, MseObjective(), config, pipeline,
                              codec_config=CodecConfig(workers=2))
    assert [r.data for r in sequential] == [r.data for r in threaded]


def test_codec_config_validation():
    with pytest.raises(ConfigurationError):
        CodecConfig(coding='arithmetic').validate()
    with pytest.raises(ConfigurationError):
        CodecConfig(workers=0).validate()
