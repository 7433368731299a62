"""Maximal window averages, window schedules and convergence scans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ScheduleError, ValidationError
from .processes import PrefixSums, ProcessSpec, generate_series

# Window differences are reduced in slices of this many starts to bound memory.
CHUNK = 1 << 22


@dataclass(frozen=True)
class Logarithmic:
    """``k = floor(ln n / rate)``."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValidationError("logarithmic schedule needs a positive rate")

    def raw(self, n: int) -> int:
        return math.floor(math.log(n) / self.rate)

    def __str__(self):
        return f"log(I={self.rate:.10g})"


@dataclass(frozen=True)
class Polynomial:
    """``k = floor(n ** tau)`` with ``0 < tau < 1``."""

    tau: float

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValidationError("polynomial schedule needs 0 < tau < 1")

    def raw(self, n: int) -> int:
        # Relative nudge keeps exact powers (10**4 ** 0.5) from flooring down.
        return math.floor(float(n) ** self.tau * (1 + 1e-12))

    def __str__(self):
        return f"poly(tau={self.tau:g})"


@dataclass(frozen=True)
class Fixed:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("fixed schedule needs k >= 1")

    def raw(self, n: int) -> int:
        return self.k

    def __str__(self):
        return f"fixed(k={self.k})"


WindowSchedule = Union[Logarithmic, Polynomial, Fixed]


def window_length(schedule: WindowSchedule, n: int) -> int:
    """Window length for sample size ``n``; infeasible lengths raise."""
    if n < 3:
        raise ScheduleError(f"n={n} too small (need n >= 3)")
    k = schedule.raw(n)
    if k < 1:
        raise ScheduleError(f"{schedule} gives k={k} < 1 at n={n}")
    if k > n / 2:
        raise ScheduleError(f"{schedule} gives k={k} > n/2 at n={n}")
    return k


def _check(P: PrefixSums, n: int, k: int) -> None:
    if not 1 <= k:
        raise ValueError(f"window k={k} must be >= 1")
    if k > n:
        raise ValueError(f"window k={k} exceeds n={n}")
    if n > P.n:
        raise ValueError(f"n={n} exceeds series length {P.n}")


def window_sum_extreme(P: PrefixSums, n: int, k: int, largest: bool = True) -> float:
    """Max (or min) of ``P[j+k] - P[j]`` over ``0 <= j <= n-k``."""
    _check(P, n, k)
    arr = P.P
    best = -math.inf if largest else math.inf
    reduce = np.max if largest else np.min
    for lo in range(0, n - k + 1, CHUNK):
        hi = min(lo + CHUNK, n - k + 1)
        v = float(reduce(arr[lo + k:hi + k] - arr[lo:hi]))
        best = max(best, v) if largest else min(best, v)
    return best


def theta(P: PrefixSums, n: int, k: int) -> float:
    """Maximal average of a length-``k`` window among starts ``0..n-k``."""
    return window_sum_extreme(P, n, k, True) / k


def theta_min(P: PrefixSums, n: int, k: int) -> float:
    """Minimal average of a length-``k`` window among starts ``0..n-k``."""
    return window_sum_extreme(P, n, k, False) / k


def geometric_grid(n_max: int, ratio: float = 2.0, n_min: int = 16) -> list:
    """Descending powers ``n_max / ratio**m`` (rounded) down to ``n_min``, ascending."""
    if ratio <= 1:
        raise ValueError("grid ratio must exceed 1")
    if n_max < n_min:
        raise ValueError("n_max must be >= n_min")
    grid = set()
    m = 0
    while True:
        n = int(round(n_max / ratio ** m))
        if n < n_min:
            break
        grid.add(n)
        m += 1
    return sorted(grid)


@dataclass(frozen=True)
class ERScanRow:
    n: int
    k: int
    theta: float  # maximal window sum (theta_over_k times k)
    theta_over_k: float  # maximal window average
    ddl_stat: float | None


@dataclass
class ERScanResult:
    rows: list
    alpha: float
    schedule: WindowSchedule
    ddl_limit: float | None = None
    skipped: list = field(default_factory=list)  # (n, reason) for infeasible points

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def at(self, n: int) -> ERScanRow:
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(n)


def er_scan(spec: ProcessSpec | None, schedule: WindowSchedule, alpha: float,
            n_grid: Sequence[int], t_alpha: float | None = None,
            series: PrefixSums | None = None, skip_infeasible: bool = False) -> ERScanResult:
    """Maximal window averages along one orbit over an increasing grid of ``n``.

    One realization of length ``max(n_grid)`` is generated from ``spec``
    (or ``series`` is reused).  For every ``n`` the window ``k`` comes from
    the schedule; with ``t_alpha`` the fluctuation statistic
    ``(max window sum - alpha k) / ln k`` is reported, whose limsup for
    i.i.d. sources is ``1 / (2 t_alpha)``.
    """
    n_grid = [int(n) for n in n_grid]
    if not n_grid or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing and non-empty")
    if series is None:
        if spec is None:
            raise ValueError("need a process spec or a precomputed series")
        series = generate_series(spec, n_grid[-1])
    if series.n < n_grid[-1]:
        raise ValueError("series shorter than the largest grid point")
    rows, skipped = [], []
    for n in n_grid:
        try:
            k = window_length(schedule, n)
        except ScheduleError as exc:
            if not skip_infeasible:
                raise
            skipped.append((n, str(exc)))
            continue
        top = window_sum_extreme(series, n, k, True)
        ddl = None
        if t_alpha is not None and k > 1:
            ddl = (top - alpha * k) / math.log(k)
        rows.append(ERScanRow(n, k, top, top / k, ddl))
    ddl_limit = 1.0 / (2.0 * t_alpha) if t_alpha else None
    return ERScanResult(rows, alpha, schedule, ddl_limit, skipped)
