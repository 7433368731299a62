"""Abstract Young towers with polynomial tails.

The tower is the quotient (stable manifolds collapsed) skyscraper over a base
partitioned into columns.  Column ``i`` (``i >= 1``) has unnormalized base
mass ``m_i = i**(-beta-2)`` and height ``R_i = 2i``; the mixing modification
shortens column 3 to height 3.  The base map sends every column onto the
whole base preserving the normalized base measure, so successive return
columns are i.i.d. with law ``m_i / Zbar`` and the tower chain is a renewal
process.  The invariant measure puts mass ``m_i / Zdelta`` on every level of
column ``i``, with ``Zdelta = sum R_i m_i``.

Observables depend only on (column, level):

* ``phi``: ``-1`` on levels ``j < i`` and ``+1`` on ``i <= j < 2i``;
* ``phi2`` (modified tower only): ``kappa`` on the three levels of column 3,
  the ``phi`` profile shifted down by ``c2`` on every level of column 2, and
  ``phi`` elsewhere.  ``c2`` is chosen so that the invariant mean is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ConstructionError, ValidationError

PHI = "phi"
PHI2 = "phi2"

# Hard cap on the number of stored columns; towers needing more are rejected.
MAX_COLUMNS = 20_000_000


def _power_tail(s: float, n: int) -> float:
    """Approximate ``sum_{i > n} i**(-s)`` by the midpoint integral.

    The error is O(n**(-s-2)), far below the truncation tolerances used here.
    """
    return (n + 0.5) ** (1.0 - s) / (s - 1.0)


@dataclass(frozen=True, eq=False)
class YoungTower:
    """Column table of a truncated example tower plus exact normalizers.

    ``masses[k]`` and ``heights[k]`` describe column ``i = k + 1``.
    ``Zbar`` and ``Zdelta`` are the normalizers of the *infinite* family
    (stored columns plus an integral tail), while sampling uses the stored
    columns only; the two differ by less than ``tol`` relative.
    """

    beta: float
    kappa: float
    modified: bool
    tol: float
    masses: np.ndarray = field(repr=False)
    heights: np.ndarray = field(repr=False)
    Zbar: float
    Zdelta: float

    def __post_init__(self):
        if self.masses.shape != self.heights.shape or self.masses.ndim != 1:
            raise ConstructionError("masses and heights must be 1-d arrays of equal length")
        if np.any(self.masses <= 0) or np.any(self.heights < 1):
            raise ConstructionError("column masses must be positive and heights >= 1")
        if not (math.isfinite(self.Zbar) and math.isfinite(self.Zdelta)) or self.Zbar <= 0 or self.Zdelta <= 0:
            raise ConstructionError("tower normalizers must be finite and positive")
        if self.modified and self.height_gcd() != 1:
            raise ConstructionError("modified tower must have coprime heights")
        base_cdf = np.cumsum(self.masses)
        base_cdf /= base_cdf[-1]
        stat_cdf = np.cumsum(self.masses * self.heights)
        stat_cdf /= stat_cdf[-1]
        object.__setattr__(self, "_base_cdf", base_cdf)
        object.__setattr__(self, "_stationary_cdf", stat_cdf)

    @property
    def i_max(self) -> int:
        return len(self.masses)

    def height(self, i: int) -> int:
        return int(self.heights[i - 1])

    def mass(self, i: int) -> float:
        return float(self.masses[i - 1])

    def nu_bar(self, i: int) -> float:
        """Normalized base measure of column ``i``."""
        return self.mass(i) / self.Zbar

    def nu_delta(self, i: int) -> float:
        """Invariant measure of the whole column ``i`` (all levels)."""
        return self.height(i) * self.mass(i) / self.Zdelta

    def mean_return_time(self) -> float:
        return self.Zdelta / self.Zbar

    def height_gcd(self) -> int:
        # Heights beyond column 3 are all even, so the first few decide it.
        return reduce(math.gcd, (int(h) for h in self.heights[:8]))

    def truncated_tail(self) -> float:
        """Relative invariant mass of the columns beyond ``i_max``."""
        return 2.0 * _power_tail(self.beta + 1.0, self.i_max) / self.Zdelta

    # -- sampling ----------------------------------------------------------

    def sample_columns(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` return columns i.i.d. from ``m_i / Zbar``."""
        u = rng.random(size)
        return np.searchsorted(self._base_cdf, u, side="right") + 1

    def sample_stationary_columns(self, rng: np.random.Generator, size: int):
        """Draw ``(columns, levels)`` arrays from the invariant measure."""
        u = rng.random(size)
        cols = np.searchsorted(self._stationary_cdf, u, side="right") + 1
        levels = rng.integers(0, self.heights[cols - 1])
        return cols, levels


def build_example_tower(beta: float = 2.0, kappa: float = 0.01, modified: bool = True,
                        tol: float = 1e-12) -> YoungTower:
    """Build the polynomial-tail example tower.

    Args:
        beta: tail exponent; ``nu_delta(R > n) ~ C n**(-beta)``.  Must exceed 1.
        kappa: size of the column-3 perturbation used by ``phi2``.
        modified: shorten column 3 to height 3 (makes the tower mixing).
        tol: bound on the invariant mass lost by truncating the column family.

    Returns:
        A :class:`YoungTower` with ``i_max`` columns such that the truncated
        relative tail is below ``tol``.
    """
    if not beta > 1:
        raise ConstructionError(f"beta must exceed 1 (got {beta}); the tower mass diverges otherwise")
    if not 0 < tol <= 1e-6:
        raise ConstructionError(f"tol must lie in (0, 1e-6] (got {tol})")
    if kappa < 0:
        raise ConstructionError(f"kappa must be non-negative (got {kappa})")
    # Tail sum_{i>N} 2 i^{-beta-1} <= 2 N^{-beta} / beta, and Zdelta >= 2.
    n_cols = math.ceil((1.0 / (beta * tol)) ** (1.0 / beta))
    n_cols = max(n_cols, 8)
    if n_cols > MAX_COLUMNS:
        raise ConstructionError(
            f"beta={beta} with tol={tol} needs {n_cols} columns (cap {MAX_COLUMNS}); raise tol")
    i = np.arange(1, n_cols + 1, dtype=np.float64)
    masses = i ** (-beta - 2.0)
    heights = 2 * np.arange(1, n_cols + 1, dtype=np.int64)
    if modified:
        heights[2] = 3
    zbar = math.fsum(masses[::-1]) + _power_tail(beta + 2.0, n_cols)
    zdelta = math.fsum((heights * masses)[::-1]) + 2.0 * _power_tail(beta + 1.0, n_cols)
    return YoungTower(beta=float(beta), kappa=float(kappa), modified=bool(modified), tol=tol,
                      masses=masses, heights=heights, Zbar=zbar, Zdelta=zdelta)


def tail_probability(tower: YoungTower, n: int) -> float:
    """Invariant measure of ``{R > n}``: ``sum_{R_i > n} R_i m_i / Zdelta``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    above = tower.heights > n
    head = math.fsum((tower.heights[above] * tower.masses[above])[::-1])
    # Unstored columns have R_i = 2i, so R_i > n iff i > n // 2.
    tail = 2.0 * _power_tail(tower.beta + 1.0, max(tower.i_max, n // 2))
    return min(1.0, (head + tail) / tower.Zdelta)


# -- points and the tower map ----------------------------------------------

class Itinerary:
    """Lazily drawn i.i.d. sequence of future return columns.

    Shifted views share one cache, so a point and its images agree on their
    common future.
    """

    def __init__(self, tower: YoungTower, rng: np.random.Generator, _cache=None, _offset=0):
        self._tower = tower
        self._rng = rng
        self._cache = [] if _cache is None else _cache
        self._offset = _offset

    def __getitem__(self, k: int) -> int:
        idx = self._offset + k
        while len(self._cache) <= idx:
            self._cache.extend(int(c) for c in self._tower.sample_columns(self._rng, 64))
        return self._cache[idx]

    def shifted(self, by: int = 1) -> "Itinerary":
        return Itinerary(self._tower, self._rng, self._cache, self._offset + by)


@dataclass(frozen=True)
class TowerPoint:
    """A point ``(column, level)`` of the quotient tower.

    ``future`` holds the columns visited on the following returns to the base
    (``future[0]`` is entered after leaving the current column).
    """

    column: int
    level: int
    future: Itinerary | None = field(default=None, compare=False, repr=False)

    def check(self, tower: YoungTower) -> None:
        if not 1 <= self.column <= tower.i_max:
            raise ValidationError(f"column {self.column} outside 1..{tower.i_max}")
        if not 0 <= self.level < tower.height(self.column):
            raise ValidationError(
                f"level {self.level} outside 0..{tower.height(self.column) - 1} for column {self.column}")


def tower_map(tower: YoungTower, p: TowerPoint, rng: np.random.Generator | None = None) -> TowerPoint:
    """Apply the tower map: climb one level, or return to the base at the top."""
    if p.level < tower.height(p.column) - 1:
        return TowerPoint(p.column, p.level + 1, p.future)
    if p.future is not None:
        return TowerPoint(p.future[0], 0, p.future.shifted(1))
    if rng is None:
        raise ValueError("a random stream is required to leave a column without an itinerary")
    return TowerPoint(int(tower.sample_columns(rng, 1)[0]), 0, None)


def sample_stationary(tower: YoungTower, rng: np.random.Generator, with_future: bool = False) -> TowerPoint:
    """Draw a point from the invariant measure.

    The column has law ``R_i m_i / Zdelta``; the level is uniform on the
    column's levels.  With ``with_future`` the point carries a lazy
    itinerary drawn from ``rng``.
    """
    cols, levels = tower.sample_stationary_columns(rng, 1)
    future = Itinerary(tower, rng) if with_future else None
    return TowerPoint(int(cols[0]), int(levels[0]), future)


# -- observables -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TowerObservableSpec:
    """Observable ``phi`` or ``phi2`` on a given tower."""

    tower: YoungTower
    variant: str = PHI2

    def __post_init__(self):
        if self.variant not in (PHI, PHI2):
            raise ValidationError(f"unknown observable variant {self.variant!r}")
        if self.variant == PHI2 and not self.tower.modified:
            raise ValidationError("phi2 is only defined on the mixing-modified tower")

    @property
    def c2(self) -> float:
        """Shift applied on column 2 for ``phi2``.

        ``r1 / nu_delta(column 2)`` with ``r1 = kappa * 3 m_3 / Zdelta``;
        the normalizer cancels.
        """
        if self.variant != PHI2:
            return 0.0
        t = self.tower
        return t.kappa * t.height(3) * t.mass(3) / (t.height(2) * t.mass(2))

    def sup_abs(self) -> float:
        if self.variant == PHI:
            return 1.0
        return max(1.0 + self.c2, self.tower.kappa)

    def column_profile(self, i: int) -> np.ndarray:
        """Values of the observable on levels ``0..R_i-1`` of column ``i``."""
        h = self.tower.height(i)
        vals = np.where(np.arange(h) < i, -1.0, 1.0)
        if self.variant == PHI2:
            if i == 3:
                vals[:] = self.tower.kappa
            elif i == 2:
                vals -= self.c2
        return vals

    def values(self, cols: np.ndarray, levels: np.ndarray) -> np.ndarray:
        """Vectorized observable on arrays of columns and levels."""
        vals = np.where(levels < cols, -1.0, 1.0)
        if self.variant == PHI2:
            vals[cols == 2] -= self.c2
            vals[cols == 3] = self.tower.kappa
        return vals

    def mean(self) -> float:
        """Invariant mean, summed column by column over the stored columns."""
        t = self.tower
        sums = np.zeros(t.i_max)
        for i in (1, 2, 3):
            sums[i - 1] = self.column_profile(i).sum()
        # Columns >= 4 are untouched and their +/-1 profile sums to zero.
        return math.fsum(sums[:3] * t.masses[:3]) / t.Zdelta


def observable(spec: TowerObservableSpec, p: TowerPoint) -> float:
    """Evaluate the observable at a single tower point."""
    p.check(spec.tower)
    return float(spec.column_profile(p.column)[p.level])


def coboundary_obstruction(spec: TowerObservableSpec) -> float:
    """Birkhoff sum of ``phi2`` along the period-3 loop through column 3.

    The loop stays in column 3 (a fixed point of the third iterate), so the
    sum is ``3 * kappa``; a nonzero value rules out a coboundary.
    """
    if spec.variant != PHI2:
        raise ValidationError("the obstruction is defined for phi2 on the modified tower")
    return math.fsum(spec.column_profile(3))


def coboundary_potential(spec: TowerObservableSpec, column: int, level: int) -> float:
    """Transfer function ``g`` with ``phi = g o F - g`` when one exists.

    On a standard column ``i`` this is ``-j`` for ``j <= i`` and ``j - 2i``
    above, so ``g`` vanishes on the base and at the top.  On the modified
    column 3 it is ``0``, which is valid only for ``kappa == 0``.
    """
    if spec.variant == PHI2 and spec.tower.kappa > 0:
        raise ValidationError("phi2 with kappa > 0 has no coboundary potential")
    if spec.tower.modified and column == 3:
        return 0.0
    return float(-level if level <= column else level - 2 * column)


@dataclass(frozen=True)
class Separation:
    """Separation time of two tower points and the induced symbolic distance."""

    time: int
    saturated: bool
    distance: float

    def __str__(self):
        return f">= {self.time}" if self.saturated else str(self.time)


def separation_time(p: TowerPoint, q: TowerPoint, horizon: int, beta1: float = 0.5) -> Separation:
    """First return index at which the column itineraries of ``p`` and ``q`` differ.

    Index 0 compares the current columns.  Points on different levels are at
    separation time 1 by convention.  The search stops at ``horizon``, in
    which case the result is flagged as saturated.  ``distance`` is
    ``beta1 ** time``.
    """
    if not 0 < beta1 < 1:
        raise ValueError("beta1 must lie in (0, 1)")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    if p.level != q.level:
        return Separation(1, False, beta1)
    if p.column != q.column:
        return Separation(0, False, 1.0)
    if p.future is None or q.future is None:
        raise ValidationError("separation time needs points carrying itineraries")
    for k in range(1, horizon):
        if p.future[k - 1] != q.future[k - 1]:
            return Separation(k, False, beta1 ** k)
    return Separation(horizon, True, beta1 ** horizon)


# -- vectorized path sampling ----------------------------------------------

def stationary_window_sums(spec: TowerObservableSpec, length: int, size: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Birkhoff sums of length ``length`` from ``size`` independent stationary starts."""
    tower = spec.tower
    cols, levels = tower.sample_stationary_columns(rng, size)
    remaining = np.full(size, length, dtype=np.int64)
    total = np.zeros(size)
    active = np.arange(size)
    c2, kappa = spec.c2, tower.kappa
    while active.size:
        c = cols[active]
        j = levels[active]
        h = tower.heights[c - 1]
        take = np.minimum(remaining[active], h - j)
        # Levels j .. j+take-1: count those below the midpoint (value -1).
        neg = np.clip(np.minimum(j + take, c) - j, 0, None)
        seg = (take - 2 * neg).astype(np.float64)
        if spec.variant == PHI2:
            seg = np.where(c == 2, seg - c2 * take, seg)
            seg = np.where(c == 3, kappa * take, seg)
        total[active] += seg
        remaining[active] -= take
        active = active[remaining[active] > 0]
        if active.size:
            cols[active] = tower.sample_columns(rng, active.size)
            levels[active] = 0
    return total


def emit_columns(spec: TowerObservableSpec, cols: np.ndarray) -> np.ndarray:
    """Concatenated observable values along full columns ``cols``."""
    heights = spec.tower.heights[cols - 1]
    total = int(heights.sum())
    starts = np.cumsum(heights) - heights
    col_rep = np.repeat(cols, heights)
    levels = np.arange(total, dtype=np.int64) - np.repeat(starts, heights)
    return spec.values(col_rep, levels)
