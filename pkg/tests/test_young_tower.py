import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.special import zeta

from erlaws.errors import ConstructionError, ValidationError
from erlaws.rng import stream
from erlaws.young_tower import (PHI, PHI2, Itinerary, TowerObservableSpec, TowerPoint,
                                build_example_tower, coboundary_obstruction,
                                coboundary_potential, observable, sample_stationary,
                                separation_time, stationary_window_sums, tail_probability,
                                tower_map)


def test_unmodified_normalizers(tower_plain):
    assert tower_plain.Zbar == pytest.approx(zeta(4), rel=1e-12)
    assert tower_plain.Zdelta == pytest.approx(2 * zeta(3), rel=1e-12)


def test_modified_normalizer(tower_mod):
    assert tower_mod.Zdelta == pytest.approx(2 * zeta(3) - 3 * 3.0 ** -4, rel=1e-12)
    assert tower_mod.Zdelta == pytest.approx(2.3670768, abs=1e-7)
    assert tower_mod.height(3) == 3 and tower_mod.height(4) == 8


def test_first_column_weight(tower_plain):
    assert tower_plain.nu_delta(1) == pytest.approx(2 / (2 * zeta(3)), rel=1e-12)
    assert tower_plain.nu_delta(1) == pytest.approx(0.8319, abs=1e-4)


def test_truncation(tower_plain):
    assert tower_plain.truncated_tail() < tower_plain.tol
    assert tower_plain.i_max == 707107


@pytest.mark.parametrize("beta", [1.0, 0.5, -2.0])
def test_beta_rejected(beta):
    with pytest.raises((ConstructionError, ValidationError)):
        build_example_tower(beta=beta)


def test_measure_normalization(tower_plain, tower_mod):
    for t in (tower_plain, tower_mod, build_example_tower(beta=3.0, modified=False)):
        total = math.fsum(t.heights * t.masses) / t.Zdelta
        assert abs(total + t.truncated_tail() - 1.0) < 1e-10
        assert abs(total - 1.0) < 1e-10


def test_tail_probability_values(tower_plain):
    assert tail_probability(tower_plain, 0) == pytest.approx(1.0, abs=1e-12)
    N = 100
    exact = math.fsum(2 * i * i ** -4.0 for i in range(N + 1, 10 ** 6)) / (2 * zeta(3))
    assert tail_probability(tower_plain, 2 * N) == pytest.approx(exact, rel=1e-6)
    assert tail_probability(tower_plain, 2 * N) == pytest.approx(N ** -2 / (2 * zeta(3)), rel=0.02)


def test_tail_slope_and_monotone(tower_plain):
    ns = 2 ** np.arange(4, 15)
    tails = np.array([tail_probability(tower_plain, int(n)) for n in ns])
    slope = np.polyfit(np.log(ns), np.log(tails), 1)[0]
    assert abs(slope + 2.0) < 0.1
    top = np.polyfit(np.log(ns[-4:]), np.log(tails[-4:]), 1)[0]
    assert abs(top + 2.0) < 0.1
    dense = [tail_probability(tower_plain, n) for n in list(range(0, 40)) + [100, 1000, 10 ** 6, 2 * 10 ** 6]]
    assert all(b <= a for a, b in zip(dense, dense[1:]))


def test_tower_map_examples(tower_plain):
    assert tower_map(tower_plain, TowerPoint(5, 2)) == TowerPoint(5, 3)
    top = TowerPoint(1, tower_plain.height(1) - 1)
    with pytest.raises(ValueError):
        tower_map(tower_plain, top)
    nxt = tower_map(tower_plain, top, stream(1))
    assert nxt.level == 0 and nxt.column >= 1


def test_return_column_law(tower_plain):
    rng = stream(2)
    cols = tower_plain.sample_columns(rng, 200_000)
    for i in (1, 2, 3):
        p = tower_plain.nu_bar(i)
        se = math.sqrt(p * (1 - p) / len(cols))
        assert abs(np.mean(cols == i) - p) < 4 * se


def test_map_follows_itinerary(tower_plain):
    fut = Itinerary(tower_plain, stream(0), _cache=[7, 2])
    p = TowerPoint(1, 1, fut)
    q = tower_map(tower_plain, p)
    assert (q.column, q.level) == (7, 0)
    assert q.future[0] == 2


@pytest.mark.slow
def test_occupation_frequencies(tower_plain):
    # Ten million steps of the orbit are a renewal sequence of whole columns.
    rng = stream(3)
    cols = tower_plain.sample_columns(rng, 4_600_000)
    R = tower_plain.heights[cols - 1].astype(float)
    steps = R.sum()
    assert steps > 1e7
    for i in range(1, 6):
        Y = np.where(cols == i, R, 0.0)
        f = Y.sum() / steps
        se = np.std(Y - f * R) / R.mean() / math.sqrt(len(R))
        assert abs(f - tower_plain.nu_delta(i)) < 4 * se, i


def test_level_uniform_chi2(tower_plain):
    cols, levels = tower_plain.sample_stationary_columns(stream(4), 100_000)
    lv = levels[cols == 1]
    counts = np.bincount(lv, minlength=2)
    assert stats.chisquare(counts).pvalue > 0.01
    assert len(lv) / 100_000 == pytest.approx(0.8319, abs=0.005)


def test_level_zero_probability_is_exact(tower_plain):
    # The sampler draws levels by rng.integers(0, R_i), exact uniform on R_i values.
    rng = stream(5)
    lv = rng.integers(0, np.full(100_000, 8))
    assert abs(np.mean(lv == 0) - 1 / 8) < 4 * math.sqrt(1 / 8 * 7 / 8 / 100_000)
    p = sample_stationary(tower_plain, stream(6))
    assert 0 <= p.level < tower_plain.height(p.column)


def test_analytic_stationarity(tower_mod):
    t = tower_mod
    nu = t.masses / math.fsum(t.heights * t.masses)  # per-level mass of each column
    top_mass = nu.sum()  # every column's top level returns to the base
    pushed_base = top_mass * t.masses / t.masses.sum()
    tv = 0.5 * np.abs(pushed_base - nu).sum()
    assert tv < 1e-10


def test_phi_examples(phi_plain):
    assert observable(phi_plain, TowerPoint(4, 1)) == -1.0
    assert observable(phi_plain, TowerPoint(4, 5)) == 1.0
    with pytest.raises(ValidationError):
        observable(phi_plain, TowerPoint(4, 8))


@given(st.integers(1, 300), st.data())
def test_vectorized_values_match_profile(i, data):
    spec = TowerObservableSpec(_MOD, PHI2)
    j = data.draw(st.integers(0, _MOD.height(i) - 1))
    vec = spec.values(np.array([i]), np.array([j]))[0]
    assert vec == spec.column_profile(i)[j] == observable(spec, TowerPoint(i, j))


_MOD = build_example_tower(beta=2.0, kappa=0.01, modified=True, tol=1e-6)


def test_phi_column_sums(phi_plain):
    for i in range(1, 200):
        assert phi_plain.column_profile(i).sum() == 0.0


def test_phi2_algebra(phi2_mod, tower_mod):
    kappa = tower_mod.kappa
    assert phi2_mod.c2 == pytest.approx(4 * kappa / 27, rel=1e-15)
    assert phi2_mod.mean() == pytest.approx(0.0, abs=1e-15)
    assert coboundary_obstruction(phi2_mod) == pytest.approx(3 * kappa, rel=1e-15)
    assert phi2_mod.column_profile(3).tolist() == [kappa] * 3
    prof2 = phi2_mod.column_profile(2)
    assert prof2.tolist() == pytest.approx([-1 - 4 * kappa / 27] * 2 + [1 - 4 * kappa / 27] * 2)


def test_phi2_needs_modified(tower_plain):
    with pytest.raises(ValidationError):
        TowerObservableSpec(tower_plain, PHI2)


def test_zero_kappa_obstruction():
    spec = TowerObservableSpec(build_example_tower(kappa=0.0, modified=True), PHI2)
    assert coboundary_obstruction(spec) == 0.0


def test_coboundary_pointwise(phi_plain, tower_plain):
    for i in range(1, 51):
        for j in range(tower_plain.height(i)):
            p = TowerPoint(i, j)
            if j < tower_plain.height(i) - 1:
                q = tower_map(tower_plain, p)
                g_next = coboundary_potential(phi_plain, q.column, q.level)
            else:
                g_next = 0.0  # every base level has potential 0
            lhs = observable(phi_plain, p)
            assert lhs == g_next - coboundary_potential(phi_plain, i, j)


def test_potential_refused_for_perturbed(phi2_mod):
    with pytest.raises(ValidationError):
        coboundary_potential(phi2_mod, 1, 0)


def test_separation_time(tower_plain):
    rng = stream(7)
    shared = Itinerary(tower_plain, rng, _cache=[1, 2, 3, 4, 5])
    p = TowerPoint(5, 2, shared)
    q = TowerPoint(5, 2, Itinerary(tower_plain, rng, _cache=[1, 2, 9, 4, 5]))
    s = separation_time(p, q, horizon=10, beta1=0.5)
    assert (s.time, s.saturated) == (3, False)
    assert s.distance == 0.125
    same = separation_time(p, TowerPoint(5, 2, shared), horizon=4)
    assert same.saturated and same.time == 4 and str(same) == ">= 4"
    assert separation_time(p, TowerPoint(6, 2, shared), 10).time == 0
    assert separation_time(p, TowerPoint(5, 3, shared), 10).time == 1
    with pytest.raises(ValueError):
        separation_time(p, q, 10, beta1=1.0)


def test_window_sums_match_emitted_path(phi2_mod):
    # Vectorized window sums equal the same-law sums from explicit columns.
    sums = stationary_window_sums(phi2_mod, 1, 50_000, stream(8))
    p0 = np.mean(np.isclose(sums, phi2_mod.tower.kappa))
    assert p0 == pytest.approx(phi2_mod.tower.nu_delta(3), abs=0.005)
    long = stationary_window_sums(phi2_mod, 64, 50_000, stream(9))
    assert abs(long.mean()) < 5 * long.std() / math.sqrt(len(long))
    assert np.max(np.abs(long)) <= 64 * phi2_mod.sup_abs() + 1e-9
