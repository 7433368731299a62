"""Stationary observable time series from three source families.

* :class:`IID`: i.i.d. draws from a bounded discrete distribution;
* :class:`DoublingCos`: ``cos(2 pi x)`` along an orbit of ``x -> 2x mod 1``,
  realized exactly through its Bernoulli coding (a sliding 64-bit window on
  a tape of fair bits);
* :class:`Tower`: a tower observable along a tower orbit from a stationary
  start.

Series are produced in fixed-size blocks, block ``b`` drawing from
``stream(split_seed(seed, b))``.  Block boundaries never depend on the
requested length, which gives the prefix-stream property: a longer series
re-emits the shorter one bit for bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .errors import ValidationError
from .rng import split_seed, stream
from .young_tower import TowerObservableSpec, emit_columns, stationary_window_sums

IID_BLOCK = 1 << 16
BIT_BLOCK = 1 << 16
TOWER_COLUMN_BLOCK = 1 << 14
WORD_BITS = 64

# Replicas of block sums are drawn in batches of this size, batch b from
# stream(split_seed(seed, b)).
REPLICA_BATCH = 1 << 12


@dataclass(frozen=True)
class DiscreteDistribution:
    """Bounded discrete law: ``values[k]`` with probability ``probs[k]``."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        if not values:
            raise ValidationError("distribution needs at least one value")
        if len(values) != len(probs):
            raise ValidationError("values and probs must have equal length")
        if not all(math.isfinite(v) for v in values):
            raise ValidationError("values must be finite")
        if any(p < 0 or not math.isfinite(p) for p in probs):
            raise ValidationError("probabilities must be non-negative")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValidationError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def rademacher(cls) -> "DiscreteDistribution":
        return cls((-1.0, 1.0), (0.5, 0.5))

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    @property
    def support(self) -> tuple:
        return tuple(v for v, p in zip(self.values, self.probs) if p > 0)

    def sup_abs(self) -> float:
        return max(abs(v) for v in self.support)

    def is_degenerate(self) -> bool:
        return len(set(self.support)) < 2

    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def negated(self) -> "DiscreteDistribution":
        return DiscreteDistribution(tuple(-v for v in self.values), self.probs)


@dataclass(frozen=True)
class IID:
    dist: DiscreteDistribution

    def sup_abs(self) -> float:
        return self.dist.sup_abs()

    def mean(self) -> float:
        return self.dist.mean


@dataclass(frozen=True)
class DoublingCos:
    def sup_abs(self) -> float:
        return 1.0

    def mean(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Tower:
    observable: TowerObservableSpec

    def sup_abs(self) -> float:
        return self.observable.sup_abs()

    def mean(self) -> float:
        return self.observable.mean()


ProcessKind = Union[IID, DoublingCos, Tower]


@dataclass(frozen=True)
class ProcessSpec:
    """A seeded series source; ``seed`` fixes every emitted sample."""

    kind: ProcessKind
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.kind, (IID, DoublingCos, Tower)):
            raise ValidationError(f"unknown process kind {self.kind!r}")
        if not 0 <= self.seed < 1 << 64:
            raise ValidationError("seed must be an unsigned 64-bit integer")

    def with_seed(self, seed: int) -> "ProcessSpec":
        return replace(self, seed=seed)

    def replica(self, index: int) -> "ProcessSpec":
        """Spec of replica ``index`` (seed split from this spec's seed)."""
        return replace(self, seed=split_seed(self.seed, index))

    def sup_abs(self) -> float:
        return self.kind.sup_abs()

    def describe(self) -> str:
        k = self.kind
        if isinstance(k, IID):
            body = "iid(values=%s,probs=%s)" % (list(k.dist.values), list(k.dist.probs))
        elif isinstance(k, DoublingCos):
            body = "doubling-cos"
        else:
            t = k.observable.tower
            body = (f"tower(beta={t.beta:g},kappa={t.kappa:g},modified={t.modified},"
                    f"variant={k.observable.variant})")
        return f"{body};seed={self.seed:#x}"


@dataclass(frozen=True, eq=False)
class PrefixSums:
    """Cumulative Birkhoff sums ``P[0] = 0``, ``P[j] = S_j``."""

    P: np.ndarray

    @property
    def n(self) -> int:
        return len(self.P) - 1

    def increments(self) -> np.ndarray:
        return np.diff(self.P)

    def __len__(self):
        return self.n


# -- series generation -----------------------------------------------------

def _iid_block(dist: DiscreteDistribution, seed: int, b: int) -> np.ndarray:
    u = stream(split_seed(seed, b)).random(IID_BLOCK)
    idx = np.searchsorted(dist.cdf(), u, side="right")
    return np.asarray(dist.values)[np.minimum(idx, len(dist.values) - 1)]


def _bit_block(seed: int, b: int) -> np.ndarray:
    return stream(split_seed(seed, b)).integers(0, 2, BIT_BLOCK, dtype=np.uint8)


def _window_values(tape: np.ndarray, count: int) -> np.ndarray:
    """``x_t = sum_m tape[t+m] 2**-(m+1)`` for ``t < count`` (53 leading bits)."""
    x = np.zeros(count)
    for m in range(53):
        x += tape[m:m + count] * 2.0 ** -(m + 1)
    return x


def _fill(P: np.ndarray, pos: int, chunk: np.ndarray) -> int:
    """Write cumulative sums of ``chunk`` after ``P[pos]``; return the new position."""
    take = min(len(chunk), len(P) - 1 - pos)
    out = P[pos + 1:pos + 1 + take]
    np.cumsum(chunk[:take], out=out)
    out += P[pos]
    return pos + take


def generate_series(spec: ProcessSpec, length: int) -> PrefixSums:
    """Prefix sums of a length-``length`` realization from the stationary law."""
    if length < 1:
        raise ValueError("length must be at least 1")
    P = np.empty(length + 1)
    P[0] = 0.0
    kind, seed = spec.kind, spec.seed
    pos = 0
    if isinstance(kind, IID):
        b = 0
        while pos < length:
            pos = _fill(P, pos, _iid_block(kind.dist, seed, b))
            b += 1
    elif isinstance(kind, DoublingCos):
        b = 0
        tape = _bit_block(seed, 0)
        while pos < length:
            nxt = _bit_block(seed, b + 1)
            window = np.concatenate([tape, nxt[:WORD_BITS]])
            x = _window_values(window, BIT_BLOCK)
            pos = _fill(P, pos, np.cos(2.0 * np.pi * x))
            tape, b = nxt, b + 1
    else:
        obs = kind.observable
        tower = obs.tower
        start = stream(split_seed(seed, 0))
        cols, levels = tower.sample_stationary_columns(start, 1)
        first = obs.column_profile(int(cols[0]))[int(levels[0]):]
        pos = _fill(P, pos, first)
        b = 1
        while pos < length:
            block = tower.sample_columns(stream(split_seed(seed, b)), TOWER_COLUMN_BLOCK)
            pos = _fill(P, pos, emit_columns(obs, block))
            b += 1
    return PrefixSums(P)


def block_sums(spec: ProcessSpec, n: int, replicas: int) -> np.ndarray:
    """``S_n`` from ``replicas`` independent stationary blocks of length ``n``.

    Replicas are produced in batches of :data:`REPLICA_BATCH`; the result is
    a deterministic function of ``(spec, n, replicas)`` and its first ``r``
    entries do not depend on how many more replicas were asked for.
    """
    if n < 1 or replicas < 1:
        raise ValueError("n and replicas must be positive")
    out = np.empty(replicas)
    kind = spec.kind
    for b, lo in enumerate(range(0, replicas, REPLICA_BATCH)):
        size = min(REPLICA_BATCH, replicas - lo)
        rng = stream(split_seed(spec.seed, b))
        if isinstance(kind, IID):
            counts = rng.multinomial(n, kind.dist.probs, size=REPLICA_BATCH)[:size]
            out[lo:lo + size] = counts @ np.asarray(kind.dist.values)
        elif isinstance(kind, DoublingCos):
            tape = rng.integers(0, 2, (REPLICA_BATCH, n + WORD_BITS - 1), dtype=np.uint8)[:size]
            x = np.zeros((size, n))
            for m in range(53):
                x += tape[:, m:m + n] * 2.0 ** -(m + 1)
            out[lo:lo + size] = np.cos(2.0 * np.pi * x).sum(axis=1)
        else:
            out[lo:lo + size] = stationary_window_sums(kind.observable, n, REPLICA_BATCH, rng)[:size]
    return out


# -- doubling map coding ---------------------------------------------------

def _check_bits(bits: Sequence[int]) -> list:
    bits = [int(b) for b in bits]
    if len(bits) != WORD_BITS:
        raise ValidationError(f"expected exactly {WORD_BITS} bits, got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise ValidationError("bits must be 0 or 1")
    return bits


def bits_to_fraction(bits: Sequence[int]) -> Fraction:
    """Exact dyadic value ``sum_{m=1..64} b_m 2**-m``."""
    word = 0
    for b in _check_bits(bits):
        word = (word << 1) | b
    return Fraction(word, 1 << WORD_BITS)


def doubling_orbit_point(bits: Sequence[int]) -> float:
    """The point of [0, 1) coded by 64 bits, rounded to the nearest double below 1."""
    x = float(bits_to_fraction(bits))
    return min(x, math.nextafter(1.0, 0.0))


def doubling_observable(x: float) -> float:
    return math.cos(2.0 * math.pi * x)


def write_series_csv(path, P: PrefixSums) -> None:
    """Export ``t,phi,S`` rows (``S`` is the sum including step ``t``)."""
    inc = P.increments()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "phi", "S"])
        for t in range(P.n):
            w.writerow([t, repr(float(inc[t])), repr(float(P.P[t + 1]))])
