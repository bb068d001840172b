# Eryn Wells <eryn@erynwells.me>

import numpy as np
import pytest

from latentcodec.quantization import (
    Codebook,
    CodebookError,
    CodebookFormatError,
    NonFiniteLatentError,
    fit_codebook,
    kmeans,
    project,
    read_codebook_file,
    symbol_indices,
    write_codebook_file)


def test_project_maps_to_nearest_center():
    codebook = Codebook([-1.0, 0.0, 2.0])
    z = np.array([-3.0, -0.4, 0.9, 1.1, 5.0])
    assert np.array_equal(codebook.project(z), [-1.0, 0.0, 0.0, 2.0, 2.0])
    assert np.array_equal(codebook.nearest_indices(z), [0, 1, 1, 2, 2])


def test_ties_go_to_the_smaller_center():
    codebook = Codebook([0.0, 1.0])
    assert codebook.project(np.array([0.5]))[0] == 0.0


def test_projection_is_idempotent():
    codebook = Codebook([-1.5, -0.25, 0.5, 3.0])
    z = np.random.default_rng(0).standard_normal(50) * 2
    once = codebook.project(z)
    assert np.array_equal(codebook.project(once), once)
    assert np.array_equal(project(codebook, z), once)
    assert np.array_equal(codebook.values(symbol_indices(codebook, once)), once)
    assert np.all(codebook.distances(z) <= np.abs(z[:, None] - codebook.centers).min(axis=1) + 1e-15)


def test_symbol_indices_reject_values_off_the_codebook():
    codebook = Codebook([0.0, 1.0, 2.0])
    assert np.array_equal(codebook.symbol_indices([2.0, 0.0]), [2, 0])
    with pytest.raises(CodebookError):
        codebook.symbol_indices([0.5])
    with pytest.raises(CodebookError):
        codebook.values([3])


def test_nan_cannot_be_quantized():
    with pytest.raises(NonFiniteLatentError) as error:
        Codebook([0.0, 1.0]).project(np.array([np.nan]))
    assert error.value.exit_code == 4


def test_invalid_codebooks():
    with pytest.raises(CodebookError):
        Codebook([1.0])
    with pytest.raises(CodebookError):
        Codebook([0.0, 0.0, 1.0])
    with pytest.raises(CodebookError):
        Codebook([1.0, 0.0])


def test_bits_per_symbol():
    assert Codebook.uniform(2, 0, 1).bits_per_symbol == 1
    assert Codebook.uniform(16, 0, 1).bits_per_symbol == 4
    assert Codebook.uniform(17, 0, 1).bits_per_symbol == 5


def test_kmeans_distortion_never_increases():
    rng = np.random.default_rng(1)
    samples = np.concatenate([rng.normal(-2, 0.3, 500), rng.normal(1, 1.0, 500), rng.exponential(1, 200)])
    result = kmeans(samples, 8, max_iters=50)
    history = np.array(result.distortion_history)
    assert np.all(np.diff(history) <= 1e-12)
    assert result.occupancy.sum() == samples.size
    assert result.codebook.levels == 8


def test_kmeans_matches_brute_force_two_clusters():
    samples = np.array([0.0, 0.1, 0.2, 0.35, 5.0, 5.1, 5.3, 6.0])
    result = kmeans(samples, 2)

    ordered = np.sort(samples)
    best = min(
        (np.sum((ordered[:split] - ordered[:split].mean()) ** 2)
         + np.sum((ordered[split:] - ordered[split:].mean()) ** 2)) / ordered.size
        for split in range(1, ordered.size))

    assert result.converged
    assert result.distortion == pytest.approx(best, rel=1e-9)
    assert result.codebook.centers == pytest.approx([0.1625, 5.35], rel=1e-6)


def test_kmeans_recovers_separated_clusters():
    rng = np.random.default_rng(2)
    true_centers = np.array([-3.0, 0.0, 4.0])
    samples = np.concatenate([c + 0.05 * rng.standard_normal(300) for c in true_centers])
    codebook = fit_codebook(samples, 3)
    assert codebook.centers == pytest.approx(true_centers, abs=0.02)


def test_kmeans_needs_enough_distinct_samples():
    with pytest.raises(CodebookError):
        kmeans([1.0, 1.0, 2.0], 3)


def test_kmeans_separates_centers_that_collide_in_single_precision():
    codebook = kmeans([1.0, 1.0 + 1e-9], 2).codebook
    assert codebook.centers[0] == 1.0
    assert codebook.centers[1] == float(np.nextafter(np.float32(1.0), np.float32(2.0)))
    assert Codebook.from_bytes(codebook.to_bytes()) == codebook

    crowded = kmeans([1.0, 1.0 + 1e-9, 1.0 + 2e-9], 3).codebook
    assert np.all(np.diff(crowded.centers) > 0)

    near_zero = kmeans([0.0, 1e-12], 2).codebook
    assert near_zero.centers[0] == 0.0
    assert 1e-9 < near_zero.centers[1] < 1e-8


def test_kmeans_subsampling_is_seeded():
    samples = np.random.default_rng(3).standard_normal(5000)
    a = kmeans(samples, 4, seed=9, sample_limit=500).codebook
    b = kmeans(samples, 4, seed=9, sample_limit=500).codebook
    assert a == b


def test_codebook_bytes_round_trip(tmp_path):
    codebook = Codebook([-1.25, 0.1, 0.7, 2.0])
    data = codebook.to_bytes()
    assert len(data) == 2 + 4 * 4
    assert Codebook.from_bytes(data) == codebook

    path = tmp_path / 'codebook.bpcb'
    write_codebook_file(path, codebook)
    assert read_codebook_file(path) == codebook


def test_codebook_format_errors():
    data = Codebook([0.0, 1.0, 2.0]).to_bytes()
    with pytest.raises(CodebookFormatError):
        Codebook.from_bytes(data[:-1])
    with pytest.raises(CodebookFormatError):
        Codebook.from_bytes(data + b'\x00')
    with pytest.raises(CodebookFormatError):
        # Centers out of order
        Codebook.from_bytes(data[:2] + data[6:10] + data[2:6] + data[10:])
