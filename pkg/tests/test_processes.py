import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erlaws.errors import ValidationError
from erlaws.processes import (BIT_BLOCK, IID_BLOCK, IID, DiscreteDistribution, DoublingCos,
                              ProcessSpec, Tower, bits_to_fraction, block_sums,
                              doubling_observable, doubling_orbit_point, generate_series,
                              write_series_csv)
from erlaws.rng import split_seed, stream

RADEMACHER = ProcessSpec(IID(DiscreteDistribution.rademacher()), seed=3)


def test_degenerate_distribution_gives_zero_sums():
    spec = ProcessSpec(IID(DiscreteDistribution([0.0], [1.0])), seed=1)
    assert generate_series(spec, 5).P.tolist() == [0.0] * 6


@pytest.mark.parametrize("values,probs", [([1, 2], [0.5, 0.6]), ([1], [0.5, 0.5]),
                                          ([1, 2], [-0.1, 1.1]), ([math.inf], [1.0])])
def test_invalid_distribution(values, probs):
    with pytest.raises(ValidationError):
        DiscreteDistribution(values, probs)


@given(st.integers(0, 2 ** 64 - 1), st.integers(1, 3000))
@settings(max_examples=30, deadline=None)
def test_rademacher_parity(seed, n):
    P = generate_series(RADEMACHER.with_seed(seed), n)
    inc = P.increments()
    assert set(np.unique(inc)) <= {-1.0, 1.0}
    assert int(P.P[-1]) % 2 == n % 2


def _specs(tower_mod):
    from erlaws.young_tower import PHI2, TowerObservableSpec
    return [RADEMACHER, ProcessSpec(DoublingCos(), 5),
            ProcessSpec(Tower(TowerObservableSpec(tower_mod, PHI2)), 9)]


def test_reproducible(tower_mod):
    for spec in _specs(tower_mod):
        a = generate_series(spec, 10_000).P
        b = generate_series(spec, 10_000).P
        assert np.array_equal(a, b)


def test_prefix_stream(tower_mod):
    for spec in _specs(tower_mod):
        long = generate_series(spec, 3 * IID_BLOCK + 17).P
        for n in (1, 100, IID_BLOCK, IID_BLOCK + 1, 2 * BIT_BLOCK + 5):
            assert np.array_equal(generate_series(spec, n).P, long[:n + 1])


def test_seeds_differ():
    a = generate_series(RADEMACHER, 1000).P
    b = generate_series(RADEMACHER.with_seed(4), 1000).P
    assert not np.array_equal(a, b)


def test_boundedness(tower_mod):
    for spec in _specs(tower_mod):
        inc = generate_series(spec, 50_000).increments()
        assert np.max(np.abs(inc)) <= spec.sup_abs() + 1e-12


@pytest.mark.slow
def test_stationary_means(tower_mod):
    n = 10 ** 6
    for spec in _specs(tower_mod):
        x = generate_series(spec, n).increments()
        se = x.std() / math.sqrt(n)
        assert abs(x.mean() - spec.kind.mean()) < 5 * se, spec.describe()


def test_tower_mean_within_four_sigma(tower_mod):
    spec = _specs(tower_mod)[2]
    n = 10 ** 6
    P = generate_series(spec, n)
    x = P.increments()
    assert abs(P.P[-1] / n) < 4 * x.std() / math.sqrt(n)


def test_doubling_examples():
    assert doubling_orbit_point([0] * 64) == 0.0
    assert doubling_observable(doubling_orbit_point([0] * 64)) == 1.0
    half = doubling_orbit_point([1] + [0] * 63)
    assert half == 0.5
    assert doubling_observable(half) == -1.0
    assert doubling_orbit_point([1] * 64) < 1.0


def test_doubling_bits_validation():
    with pytest.raises(ValidationError):
        doubling_orbit_point([0] * 63)
    with pytest.raises(ValidationError):
        doubling_orbit_point([2] + [0] * 63)


def test_sliding_window_is_doubling():
    tape = stream(split_seed(77, 0)).integers(0, 2, 64 + 50).tolist()
    for t in range(50):
        doubled = (2 * bits_to_fraction(tape[t:t + 64])) % 1
        slid = bits_to_fraction(tape[t + 1:t + 65])
        assert abs(slid - doubled) <= Fraction(1, 2 ** 64)


def test_doubling_series_matches_orbit_points():
    spec = ProcessSpec(DoublingCos(), seed=11)
    inc = generate_series(spec, 20).increments()
    tape = np.concatenate([stream(split_seed(11, 0)).integers(0, 2, BIT_BLOCK, dtype=np.uint8),
                           stream(split_seed(11, 1)).integers(0, 2, BIT_BLOCK, dtype=np.uint8)])
    for t in range(20):
        x = doubling_orbit_point(tape[t:t + 64])
        assert inc[t] == pytest.approx(doubling_observable(x), abs=1e-12)


def test_block_sums_prefix_and_moments():
    a = block_sums(RADEMACHER, 10, 5000)
    b = block_sums(RADEMACHER, 10, 9000)
    assert np.array_equal(a, b[:5000])
    assert set(np.unique(a % 2)) == {0.0}
    assert abs(b.mean()) < 5 * math.sqrt(10 / 9000)


def test_write_series_csv(tmp_path):
    P = generate_series(RADEMACHER, 4)
    path = tmp_path / "s.csv"
    write_series_csv(path, P)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,phi,S"
    assert len(lines) == 5
    t, phi, S = lines[-1].split(",")
    assert int(t) == 3 and float(S) == P.P[4]


def test_replica_specs_distinct():
    seeds = {RADEMACHER.replica(i).seed for i in range(100)}
    assert len(seeds) == 100
