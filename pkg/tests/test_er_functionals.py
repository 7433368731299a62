import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erlaws.er_functionals import (CHUNK, Fixed, Logarithmic, Polynomial, er_scan,
                                   geometric_grid, theta, theta_min, window_length,
                                   window_sum_extreme)
from erlaws.errors import ScheduleError, ValidationError
from erlaws.processes import IID, DiscreteDistribution, PrefixSums, ProcessSpec

RAD_SPEC = ProcessSpec(IID(DiscreteDistribution.rademacher()), seed=31)


def prefix(increments):
    return PrefixSums(np.concatenate([[0.0], np.cumsum(increments)]))


def brute(x, k, fn=max):
    return fn(sum(x[j:j + k]) / k for j in range(len(x) - k + 1))


def test_window_length_examples():
    assert window_length(Logarithmic(0.1308122), 10 ** 6) == 105
    assert window_length(Polynomial(0.5), 10 ** 4) == 100
    assert window_length(Fixed(1), 10) == 1


@pytest.mark.parametrize("schedule,n", [(Logarithmic(5.0), 100), (Fixed(6), 10),
                                        (Polynomial(0.99), 10), (Fixed(1), 2)])
def test_window_length_errors(schedule, n):
    with pytest.raises(ScheduleError):
        window_length(schedule, n)


@pytest.mark.parametrize("bad", [lambda: Logarithmic(0.0), lambda: Polynomial(1.0),
                                 lambda: Polynomial(0.0), lambda: Fixed(0)])
def test_schedule_validation(bad):
    with pytest.raises(ValidationError):
        bad()


def test_theta_examples():
    P = prefix([1, -1, 1, 1])
    assert theta(P, 4, 2) == 1.0
    assert theta_min(P, 4, 2) == 0.0
    assert theta(P, 4, 4) == P.P[4] / 4
    c = prefix([0.3] * 9)
    for k in range(1, 10):
        assert theta(c, 9, k) == pytest.approx(0.3)
        assert theta_min(c, 9, k) == pytest.approx(0.3)


def test_theta_errors():
    P = prefix([1, 1, 1])
    for n, k in [(3, 4), (3, 0), (5, 2)]:
        with pytest.raises(ValueError):
            theta(P, n, k)


def test_brute_force_1000_arrays():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 201))
        x = rng.integers(-3, 4, n).astype(float)
        P = prefix(x)
        k = int(rng.integers(1, n + 1))
        # Integer data keep both sides exact.
        sums = [sum(x[j:j + k]) for j in range(n - k + 1)]
        assert window_sum_extreme(P, n, k, True) == max(sums)
        assert window_sum_extreme(P, n, k, False) == min(sums)
        assert theta(P, n, k) == max(sums) / k
        assert theta_min(P, n, k) == min(sums) / k


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=60), st.data())
def test_bounds(x, data):
    n = len(x)
    k = data.draw(st.integers(1, n))
    P = prefix(x)
    lo, hi = theta_min(P, n, k), theta(P, n, k)
    tol = 1e-12
    assert -1 - tol <= lo <= hi + tol <= 1 + 2 * tol
    assert abs(hi - brute(x, k)) < 1e-9
    # Sample mean is an average of window means once k divides n.
    if n % k == 0:
        assert lo - tol <= P.P[n] / n <= hi + tol


@given(st.lists(st.integers(-5, 5), min_size=2, max_size=50), st.integers(-7, 7), st.data())
def test_translation(x, c, data):
    n = len(x)
    k = data.draw(st.integers(1, n))
    P = prefix(np.asarray(x, dtype=float))
    Q = prefix(np.asarray(x, dtype=float) + c)
    # Exact on integer window sums; the averages agree up to one rounding.
    assert window_sum_extreme(Q, n, k, True) == window_sum_extreme(P, n, k, True) + c * k
    assert window_sum_extreme(Q, n, k, False) == window_sum_extreme(P, n, k, False) + c * k
    assert theta(Q, n, k) == pytest.approx(theta(P, n, k) + c, abs=1e-12)


@given(st.lists(st.integers(-5, 5), min_size=2, max_size=40),
       st.lists(st.integers(-5, 5), min_size=1, max_size=40), st.data())
def test_appending_never_decreases(x, extra, data):
    k = data.draw(st.integers(1, len(x)))
    short = prefix(np.asarray(x, dtype=float))
    long = prefix(np.asarray(x + extra, dtype=float))
    assert theta(long, len(x) + len(extra), k) >= theta(short, len(x), k)
    assert theta(long, len(x), k) == theta(short, len(x), k)


def test_chunked_reduction(monkeypatch):
    import erlaws.er_functionals as ef
    x = np.random.default_rng(5).standard_normal(1000)
    P = prefix(x)
    full = theta(P, 1000, 7)
    monkeypatch.setattr(ef, "CHUNK", 13)
    assert ef.theta(P, 1000, 7) == full
    assert CHUNK > 13


def test_geometric_grid():
    assert geometric_grid(1000, 10, 10) == [10, 100, 1000]
    assert geometric_grid(64, 2, 16) == [16, 32, 64]
    with pytest.raises(ValueError):
        geometric_grid(10, 1.0)


def test_scan_determinism_and_ddl():
    grid = geometric_grid(10 ** 5, 10, 1000)
    t_alpha = math.atanh(0.5)
    a = er_scan(RAD_SPEC, Logarithmic(0.13081204), 0.5, grid, t_alpha)
    b = er_scan(RAD_SPEC, Logarithmic(0.13081204), 0.5, grid, t_alpha)
    assert a.rows == b.rows
    assert a.ddl_limit == pytest.approx(1 / (2 * t_alpha))
    for r in a.rows:
        assert r.theta == pytest.approx(r.theta_over_k * r.k)
        assert r.ddl_stat == pytest.approx((r.theta - 0.5 * r.k) / math.log(r.k))


def test_scan_fixed_one():
    res = er_scan(RAD_SPEC, Fixed(1), 0.5, [100, 1000, 10 ** 4])
    assert np.all(res.column("theta_over_k") == 1.0)
    assert res.at(1000).k == 1 and res.rows[0].ddl_stat is None


def test_scan_polynomial_trend():
    res = er_scan(RAD_SPEC, Polynomial(0.5), 0.5, [10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6])
    v = res.column("theta_over_k")
    assert v[-1] < v[0]
    assert v[-1] < 0.15


def test_scan_infeasible_points():
    with pytest.raises(ScheduleError):
        er_scan(RAD_SPEC, Logarithmic(3.0), 0.5, [10, 10 ** 4])
    res = er_scan(RAD_SPEC, Logarithmic(3.0), 0.5, [10, 10 ** 4], skip_infeasible=True)
    assert [n for n, _ in res.skipped] == [10]
    assert [r.n for r in res.rows] == [10 ** 4]


def test_scan_reuses_series():
    from erlaws.processes import generate_series
    P = generate_series(RAD_SPEC, 5000)
    a = er_scan(None, Fixed(3), 0.5, [100, 5000], series=P)
    b = er_scan(RAD_SPEC, Fixed(3), 0.5, [100, 5000])
    assert a.rows == b.rows
    with pytest.raises(ValueError):
        er_scan(None, Fixed(3), 0.5, [100, 6000], series=P)
    with pytest.raises(ValueError):
        er_scan(RAD_SPEC, Fixed(3), 0.5, [100, 100])
