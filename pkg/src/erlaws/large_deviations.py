"""Rate functions: exact i.i.d. branch, SCGF + Legendre transform, tail regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, EstimationError, ValidationError
from .processes import DiscreteDistribution, ProcessSpec, block_sums

EXACT_IID = "exact-iid"
SCGF_LEGENDRE = "scgf-legendre"
TAIL_REGRESSION = "tail-regression"

MIN_ESS = 10.0
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# -- exact i.i.d. branch ---------------------------------------------------

def _tilt(dist: DiscreteDistribution, t: float):
    v = np.asarray(dist.values)
    p = np.asarray(dist.probs)
    keep = p > 0
    v, p = v[keep], p[keep]
    a = t * v
    shift = a.max()
    w = p * np.exp(a - shift)
    return v, w, shift


def log_mgf(dist: DiscreteDistribution, t: float) -> float:
    """``ln E exp(t X)`` with a max shift."""
    _, w, shift = _tilt(dist, t)
    return float(shift + math.log(math.fsum(w)))


def mgf(dist: DiscreteDistribution, t: float) -> float:
    """Moment generating function ``sum_k p_k exp(t v_k)``."""
    return math.exp(log_mgf(dist, t))


def tilted_moments(dist: DiscreteDistribution, t: float):
    """Mean and variance of the exponentially tilted law (derivatives of ``log_mgf``)."""
    v, w, _ = _tilt(dist, t)
    z = math.fsum(w)
    mean = math.fsum(w * v) / z
    var = math.fsum(w * (v - mean) ** 2) / z
    return mean, var


@dataclass(frozen=True)
class IIDExactLDP:
    dist: DiscreteDistribution
    alpha: float
    t_alpha: float
    c_alpha: float
    residual: float


def solve_t_alpha(dist: DiscreteDistribution, alpha: float) -> IIDExactLDP:
    """Minimize ``psi_alpha(t) = E exp(tX) exp(-alpha t)`` over ``t > 0``.

    Solves ``(log mgf)'(t) = alpha`` by bisection on a doubling bracket, then
    Newton steps, and returns ``c_alpha = alpha t_alpha - ln mgf(t_alpha)``.
    Only the upper branch ``mean < alpha < max value`` is handled here; see
    :func:`rate_value` for both sides.
    """
    mean = dist.mean
    top = max(dist.support)
    if alpha <= mean:
        raise DomainError(f"alpha={alpha} <= mean={mean}: use symmetric branch")
    if alpha >= top:
        raise DomainError(f"alpha={alpha} outside rate-function domain (max value {top})")

    def resid(t):
        return tilted_moments(dist, t)[0] - alpha

    lo, hi = 0.0, 1.0
    while resid(hi) <= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise DomainError(f"no interior minimizer found for alpha={alpha}")
    while hi - lo > 1e-6 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if resid(mid) > 0:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    for _ in range(50):
        m, var = tilted_moments(dist, t)
        r = m - alpha
        if abs(r) < 1e-13:
            break
        if r > 0:
            hi = t
        else:
            lo = t
        t_new = t - r / var
        t = t_new if lo < t_new < hi else 0.5 * (lo + hi)
    r = resid(t)
    if abs(r) >= 1e-12:
        raise DomainError(f"root finder did not converge for alpha={alpha} (residual {r:.3e})")
    # The supremum is at least its value 0 at t = 0; clip rounding below it.
    c_alpha = max(0.0, alpha * t - log_mgf(dist, t))
    return IIDExactLDP(dist, alpha, float(t), float(c_alpha), float(r))


def rate_value(dist: DiscreteDistribution, alpha: float) -> float:
    """Exact rate ``I(alpha)`` on either side of the mean (0 at the mean)."""
    mean = dist.mean
    if alpha == mean:
        return 0.0
    if alpha > mean:
        return solve_t_alpha(dist, alpha).c_alpha
    return solve_t_alpha(dist.negated(), -alpha).c_alpha


def binary_entropy_rate(alpha: float) -> float:
    """Closed-form fair-coin (+/-1) rate ``(1+a)/2 ln(1+a) + (1-a)/2 ln(1-a)``."""
    a = abs(alpha)
    if a >= 1:
        raise DomainError("fair-coin rate is finite only for |alpha| < 1")
    return 0.5 * (1 + a) * math.log1p(a) + 0.5 * (1 - a) * math.log1p(-a)


# -- rate function container -----------------------------------------------

@dataclass
class RateFunction:
    alphas: np.ndarray
    I: np.ndarray
    method: str
    n_used: int | None = None
    replicas: int | None = None
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.I = np.asarray(self.I, dtype=float)
        if self.stderr is None:
            self.stderr = np.zeros_like(self.I)

    def is_nonnegative(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.I >= -tol))

    def is_convex(self, tol: float = 1e-6) -> bool:
        """Second differences (grid-spacing aware) are >= ``-tol``."""
        a, y = self.alphas, self.I
        if len(a) < 3:
            return True
        h1 = np.diff(a)[:-1]
        h2 = np.diff(a)[1:]
        second = (y[2:] - y[1:-1]) / h2 - (y[1:-1] - y[:-2]) / h1
        return bool(np.all(second >= -tol))

    def rows(self):
        for a, i, s in zip(self.alphas, self.I, self.stderr):
            yield float(a), float(i), self.method, self.n_used, self.replicas, float(s)


def exact_rate_function(dist: DiscreteDistribution, alphas: Sequence[float]) -> RateFunction:
    """Rate function of a bounded discrete i.i.d. source, shifted to its mean."""
    mean = dist.mean
    values = [rate_value(dist, mean + a) for a in alphas]
    return RateFunction(np.asarray(alphas), np.asarray(values), EXACT_IID, n_used=1, replicas=0)


# -- SCGF and Legendre transform -------------------------------------------

@dataclass
class ScgfTable:
    """Estimated ``Lambda_n(t) = (1/n) ln E exp(t S_n)`` on a grid of ``t``."""

    t: np.ndarray
    lam: np.ndarray
    stderr: np.ndarray
    ess: np.ndarray
    n: int
    replicas: int
    reliable: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.reliable is None:
            self.reliable = self.ess >= MIN_ESS


def empirical_scgf(spec: ProcessSpec, n: int, replicas: int, t_grid: Sequence[float],
                   sums: np.ndarray | None = None) -> ScgfTable:
    """Monte Carlo SCGF from independent stationary blocks.

    ``Lambda_n(t) = (1/n) (logsumexp(t S) - ln replicas)``.  Standard errors
    come from the delta method on the sample mean of ``exp(t S)``; grid
    points whose tilted effective sample size falls below 10 are flagged
    unreliable.  Pass ``sums`` to reuse precomputed block sums.
    """
    if n < 1:
        raise ValueError("block length n must be >= 1")
    if replicas < 100:
        raise ValueError("need at least 100 replicas")
    t_grid = np.asarray(sorted(set(float(t) for t in t_grid)))
    if not len(t_grid) or not np.all(np.isfinite(t_grid)):
        raise ValueError("t_grid must be a finite non-empty grid")
    S = block_sums(spec, n, replicas) if sums is None else np.asarray(sums, dtype=float)
    if len(S) != replicas:
        raise ValueError("sums length does not match replicas")
    lam = np.empty(len(t_grid))
    se = np.empty(len(t_grid))
    ess = np.empty(len(t_grid))
    for k, t in enumerate(t_grid):
        a = t * S
        lse = logsumexp(a)
        lam[k] = (lse - math.log(replicas)) / n
        w = np.exp(a - lse)  # normalized weights, sum to 1
        sum_w2 = float(np.dot(w, w))
        ess[k] = 1.0 / sum_w2
        # Var(mean e^{tS}) / mean^2 = (R * sum w^2 - 1) / (R - 1)
        rel_var = max(replicas * sum_w2 - 1.0, 0.0) / (replicas - 1)
        se[k] = math.sqrt(rel_var) / n
    if t_grid[0] <= 0 <= t_grid[-1]:
        lam[t_grid == 0] = 0.0
    return ScgfTable(t_grid, lam, se, ess, n, replicas)


def _golden_max(g: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol:
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + GOLDEN * (b - a)
            gd = g(d)
    return 0.5 * (a + b)


def legendre_transform(scgf: Union[ScgfTable, Callable[[float], float]], alpha: float,
                       bracket: tuple | None = None, tol: float = 1e-10) -> float:
    """``sup_t (alpha t - Lambda(t))`` for a tabulated or exact SCGF.

    For a table: locate the grid maximizer, golden-section search the
    piecewise-linear interpolant on the neighbouring cells, then refine with
    a quadratic through the three nodes around the maximum.  For a callable:
    golden-section search on ``bracket`` directly.  A maximizer on the edge
    of the grid (or bracket) means ``alpha`` lies outside the estimable
    range and raises :class:`DomainError`.
    """
    if callable(scgf):
        lo, hi = bracket if bracket is not None else (-20.0, 20.0)

        def g(t):
            return alpha * t - scgf(t)

        t_star = _golden_max(g, lo, hi, tol)
        if min(t_star - lo, hi - t_star) <= 10 * tol:
            raise DomainError(f"maximizer at bracket edge for alpha={alpha}: extend t_grid")
        return g(t_star)

    t, lam = scgf.t, scgf.lam
    if len(t) < 3:
        raise ValueError("SCGF table needs at least 3 grid points")
    vals = alpha * t - lam
    k = int(np.argmax(vals))
    if k == 0 or k == len(t) - 1:
        raise DomainError(f"maximizer at grid boundary for alpha={alpha}: extend t_grid")

    def g_lin(s):
        return alpha * s - float(np.interp(s, t, lam))

    t_star = _golden_max(g_lin, t[k - 1], t[k + 1], tol)
    # Quadratic through the three nodes around the grid maximizer.
    x = t[k - 1:k + 2] - t[k]
    y = vals[k - 1:k + 2]
    c2, c1, c0 = np.polyfit(x, y, 2)
    if c2 < 0:
        vertex = float(np.clip(-c1 / (2 * c2), x[0], x[2]))
        # The grid node is a lower bound; rounding must not undercut it.
        return float(max(c0 + c1 * vertex + c2 * vertex * vertex, vals[k]))
    return float(max(g_lin(t_star), vals[k]))


def scgf_rate_function(table: ScgfTable, alphas: Sequence[float]) -> RateFunction:
    """Legendre transform of an SCGF table on a grid of levels."""
    I = []
    se = []
    for a in alphas:
        I.append(legendre_transform(table, a))
        k = int(np.argmax(a * table.t - table.lam))
        se.append(float(table.stderr[k]))
    return RateFunction(np.asarray(alphas), np.asarray(I), SCGF_LEGENDRE,
                        n_used=table.n, replicas=table.replicas, stderr=np.asarray(se))


# -- tail regression -------------------------------------------------------

EXPONENTIAL = "exponential"
POLYNOMIAL = "polynomial"


@dataclass
class TailFit:
    n_grid: np.ndarray
    windows: np.ndarray
    p_hat: np.ndarray
    slope: float
    intercept: float
    residual: float
    model: str
    replicas: int
    reliable: bool


def tail_fit(spec: ProcessSpec, alpha: float, n_grid: Sequence[int], replicas: int,
             model: str = EXPONENTIAL, tau: float | None = None) -> TailFit:
    """Regress crude Monte Carlo exceedance frequencies ``P(S_L >= L alpha)``.

    The window ``L`` is ``n`` itself, or ``floor(n**tau)`` when ``tau`` is
    given.  The exponential model fits ``-ln p`` against ``n`` (slope is the
    rate); the polynomial model fits ``ln p`` against ``ln n`` (slope is
    minus the decay exponent).  ``reliable`` is False when some estimate
    rests on fewer than 20 exceedances.
    """
    n_grid = np.asarray(n_grid, dtype=np.int64)
    if len(n_grid) < 5 or np.any(np.diff(n_grid) <= 0) or n_grid[0] < 1:
        raise ValidationError("n_grid must be strictly increasing with at least 5 positive points")
    if model not in (EXPONENTIAL, POLYNOMIAL):
        raise ValidationError(f"unknown tail model {model!r}")
    if tau is None:
        windows = n_grid.copy()
    else:
        windows = np.array([int(math.floor(float(n) ** tau * (1 + 1e-12))) for n in n_grid])
        if np.any(windows < 1):
            raise ValidationError("tau too small: some windows are empty")
    p_hat = np.empty(len(n_grid))
    for idx, L in enumerate(windows):
        S = block_sums(spec.replica(idx), int(L), replicas)
        hits = int(np.count_nonzero(S >= L * alpha - 1e-9 * L))
        p_hat[idx] = hits / replicas
    if np.any(p_hat == 0):
        zero = [int(n) for n, p in zip(n_grid, p_hat) if p == 0]
        raise EstimationError(f"no exceedances at n={zero}: increase replicas or lower n")
    if model == EXPONENTIAL:
        x, y = n_grid.astype(float), -np.log(p_hat)
    else:
        x, y = np.log(n_grid.astype(float)), np.log(p_hat)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return TailFit(n_grid, windows, p_hat, float(slope), float(intercept),
                   float(math.sqrt(np.mean(resid ** 2))), model, replicas,
                   bool(np.min(p_hat) * replicas >= 20))


def tail_rate_function(spec: ProcessSpec, alphas: Sequence[float], n_grid: Sequence[int],
                       replicas: int) -> RateFunction:
    """Rate estimates from exponential tail fits at several levels."""
    I, se = [], []
    for a in alphas:
        if a == 0:
            I.append(0.0)
            se.append(0.0)
            continue
        fit = tail_fit(spec, a, n_grid, replicas, EXPONENTIAL)
        I.append(fit.slope)
        se.append(fit.residual / math.sqrt(len(n_grid)))
    return RateFunction(np.asarray(alphas), np.asarray(I), TAIL_REGRESSION,
                        n_used=int(max(n_grid)), replicas=replicas, stderr=np.asarray(se))
