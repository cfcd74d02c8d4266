"""Closed-form scaling values and the redundant-node solvers.

All logarithms are natural. Scaling values carry a unit constant; compare
them through ratios or fitted exponents only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidParameterError, SolverError

_MAX_BISECTIONS = 200


@dataclass(frozen=True)
class RedundancyResult:
    n1: float
    epsilon: float
    residual: float  # relative residual of the defining equation at n1


def _check(n, q):
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if not 0.0 <= q < 1.0:
        raise InvalidParameterError(f"q must lie in [0, 1), got {q}")


def capacity_scaling(n: float, q: float) -> float:
    _check(n, q)
    return math.sqrt(n * (1.0 - q) / math.log(n))


def delay_scaling(n: float, q: float) -> float:
    # Same order as capacity: hops scale as 1 / r_q(n).
    _check(n, q)
    return math.sqrt(n * (1.0 - q) / math.log(n))


def capacity_scaling_3d(n: float, q: float) -> float:
    _check(n, q)
    return (n * (1.0 - q) / math.log(n)) ** (2.0 / 3.0)


def capacity_loss_ratio(n: float, q: float) -> float:
    """``sqrt(ln(n(1-q)) / ln n)``: capacity with failures relative to a
    failure-free network holding the same expected number of live nodes."""
    if not 0.0 <= q < 1.0:
        raise InvalidParameterError(f"q must lie in [0, 1), got {q}")
    live = n * (1.0 - q)
    if live < 2:
        raise InvalidParameterError(f"n(1-q) must be >= 2, got {live}")
    return math.sqrt(math.log(live) / math.log(n))


def bisect_increasing(f, lo: float, hi: float, xtol: float = 1e-9, max_iter: int = _MAX_BISECTIONS) -> float:
    """Root of an increasing ``f`` on ``[lo, hi]``.

    Stops once the bracket is narrower than ``xtol * max(1, |x|)``.
    """
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if f_lo > 0 or f_hi < 0:
        raise SolverError(f"no sign change on [{lo:g}, {hi:g}]: f={f_lo:g}, {f_hi:g}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol * max(1.0, abs(mid)):
            return mid
        f_mid = f(mid)
        if f_mid == 0:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _solve_redundancy(n, q, target):
    """n1 with ``(n(1-q) + n1) / ln(n + n1) == target``."""

    def residual(n1):
        return (n * (1.0 - q) + n1) / math.log(n + n1) - target

    hi = 100.0 * n * max(q, 1e-12)
    n1 = bisect_increasing(residual, 0.0, hi)
    rel = abs(residual(n1)) / target
    return n1, rel


def redundancy_to_baseline(n: float, q: float) -> RedundancyResult:
    """Relay nodes that restore the failure-free capacity order ``sqrt(n / ln n)``."""
    if not 0.0 < q < 1.0:
        raise InvalidParameterError(f"q must lie in (0, 1), got {q}")
    if n < 3:
        raise InvalidParameterError(f"n must be >= 3, got {n}")
    n1, rel = _solve_redundancy(n, q, n / math.log(n))
    return RedundancyResult(n1, n1 / (n * q), rel)


def redundancy_for_multiplier(n: float, q: float, omega: float) -> RedundancyResult:
    """Relay nodes that multiply the capacity order by ``omega + 1``."""
    if omega < 0:
        raise InvalidParameterError(f"omega must be >= 0, got {omega}")
    _check(n, q)
    if n < 3:
        raise InvalidParameterError(f"n must be >= 3, got {n}")
    if omega == 0:
        return RedundancyResult(0.0, 0.0, 0.0)
    base = n * (1.0 - q) / math.log(n)
    target = (omega + 1.0) ** 2 * base
    # squared form of sqrt(...) = (omega+1) sqrt(base)
    hi = 100.0 * n * (omega + 1.0) ** 2

    def residual(n1):
        return (n * (1.0 - q) + n1) / math.log(n + n1) - target

    n1 = bisect_increasing(residual, 0.0, hi)
    eps = n1 / (n * q) if q > 0 else math.inf
    return RedundancyResult(n1, eps, abs(residual(n1)) / target)


def max_concurrent_links(delta_prime: float, r: float) -> float:
    """Upper bound ``4 / (pi (delta' r)^2)`` on simultaneous transmissions in the unit square."""
    if delta_prime <= 0 or r <= 0:
        raise InvalidParameterError("delta' and r must be > 0")
    return 4.0 / (math.pi * (delta_prime * r) ** 2)


def rate_upper_bound(n: float, q: float, r: float, delta_prime: float, W: float, mean_distance: float) -> float:
    """Per-flow rate bound from spatial reuse: bits needed ``n(1-q) lam dbar / r``
    cannot exceed ``W`` times :func:`max_concurrent_links`."""
    _check(n, q)
    if mean_distance <= 0:
        raise InvalidParameterError("mean_distance must be > 0")
    return W * max_concurrent_links(delta_prime, r) * r / (n * (1.0 - q) * mean_distance)


def tradeoff_bound(mean_hops: float, delta_prime: float, W: float, mean_distance: float) -> float:
    """Ceiling on aggregate throughput ``lam N`` given mean hops per bit:
    ``4 W hbar / (pi (delta' dbar)^2)``."""
    if delta_prime <= 0 or mean_distance <= 0:
        raise InvalidParameterError("delta' and mean_distance must be > 0")
    return 4.0 * W * mean_hops / (math.pi * (delta_prime * mean_distance) ** 2)
