import numpy as np
import pytest
from scipy.special import ndtri

from accelsde.brownian import (
    coarsen,
    coarsen_increments,
    level_stream,
    mix_correlated,
    normal_ppf,
    sample_increments,
    sample_lattice,
    uniforms_from_bits,
)


def test_same_seed_same_lattice():
    a = sample_lattice(42, 0, 4, 1, 1.0)
    b = sample_lattice(42, 0, 4, 1, 1.0)
    assert np.array_equal(a.increments, b.increments)
    assert a.increments.shape == (4, 1)
    assert a.dt == 0.25


def test_path_indices_differ():
    a = sample_lattice(42, 0, 4, 1, 1.0)
    b = sample_lattice(42, 1, 4, 1, 1.0)
    assert not np.array_equal(a.increments, b.increments)


def test_batch_matches_single_paths():
    batch = sample_increments(3, [5, 9], 16, 2, 2.0)
    for row, j in zip(batch, (5, 9)):
        assert np.array_equal(row, sample_lattice(3, j, 16, 2, 2.0).increments)


def test_variance_band():
    lat = sample_lattice(7, 0, 2 ** 14, 1, 1.0)
    var = lat.increments[:, 0].var()
    assert 0.9 * lat.dt <= var <= 1.1 * lat.dt
    assert abs(lat.increments.mean()) < 4 * np.sqrt(lat.dt / 2 ** 14)


def test_lattice_is_read_only():
    lat = sample_lattice(1, 0, 4, 1, 1.0)
    with pytest.raises(ValueError):
        lat.increments[0, 0] = 1.0


@pytest.mark.parametrize("n, T", [(0, 1.0), (4, 0.0), (4, -1.0)])
def test_rejects_bad_shape(n, T):
    with pytest.raises(ValueError):
        sample_lattice(1, 0, n, 1, T)


def test_ppf_against_scipy():
    u = np.concatenate([np.linspace(1e-12, 1 - 1e-12, 20001), [1e-300, 0.5, 0.02425, 0.97575]])
    z = normal_ppf(u)
    ref = ndtri(u)
    assert np.max(np.abs(z - ref) / np.maximum(np.abs(ref), 1e-3)) < 1e-13
    assert normal_ppf(np.array([0.5]))[0] == 0.0


def test_uniforms_open_interval():
    u = uniforms_from_bits(np.array([0, 2 ** 64 - 1], dtype=np.uint64))
    assert 0.0 < u[0] < u[1] < 1.0


def test_coarsen_sums():
    inc = np.arange(1.0, 5.0)[:, None]
    lat = sample_lattice(0, 0, 4, 1, 1.0)
    from accelsde.brownian import IncrementLattice
    lat = IncrementLattice(0, 0, 4, 1, 0.25, inc)
    c = coarsen(lat, 4)
    assert c.increments.tolist() == [[10.0]]
    assert c.dt == 1.0 and c.seed == 0
    assert coarsen(lat, 1) is lat


def test_coarsen_associative_bitwise():
    lat = sample_lattice(5, 3, 1024, 2, 1.0)
    twice = coarsen(coarsen(lat, 2), 2)
    once = coarsen(lat, 4)
    assert np.array_equal(twice.increments, once.increments)
    assert np.array_equal(coarsen(coarsen(lat, 4), 4).increments, coarsen(lat, 16).increments)


def test_coarsen_conserves_total():
    lat = sample_lattice(5, 3, 1024, 1, 1.0)
    assert np.isclose(coarsen(lat, 8).increments.sum(), lat.increments.sum(), rtol=0, atol=1e-12)


def test_coarsen_rejects_non_divisor():
    lat = sample_lattice(5, 3, 12, 1, 1.0)
    with pytest.raises(ValueError):
        coarsen(lat, 5)
    with pytest.raises(ValueError):
        coarsen_increments(np.zeros((2, 12, 1)), 0, axis=1)


def test_mix_correlated_cases():
    lat = sample_lattice(2, 0, 64, 2, 1.0)
    zero = mix_correlated(lat, 0.0)
    assert np.array_equal(zero.increments, lat.increments)
    one = mix_correlated(lat, 1.0)
    assert np.array_equal(one.increments[:, 1], lat.increments[:, 0])
    assert one.correlation == 1.0


def test_mix_correlated_sample_correlation():
    lat = mix_correlated(sample_lattice(2, 0, 2 ** 14, 2, 1.0), -0.6)
    r = np.corrcoef(lat.increments.T)[0, 1]
    assert -0.65 <= r <= -0.55
    assert 0.9 * lat.dt <= lat.increments[:, 1].var() <= 1.1 * lat.dt


def test_mix_correlated_errors():
    with pytest.raises(ValueError):
        mix_correlated(sample_lattice(2, 0, 8, 2, 1.0), 1.5)
    with pytest.raises(ValueError):
        mix_correlated(sample_lattice(2, 0, 8, 1, 1.0), 0.5)


def test_level_streams_disjoint():
    a = {level_stream(0, j) for j in range(100)}
    b = {level_stream(1, j) for j in range(100)}
    assert not a & b
