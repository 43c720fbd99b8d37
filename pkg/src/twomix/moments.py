"""Median-of-means estimation of excess moments and of the overall scale."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TooFewSamples
from .mixture import ExcessMoments

GROUPS_PER_LOG = 12
SAMPLES_PER_LOG = 48
VARIANCE_INFLATION = 4.0 / 3.0


@dataclass(frozen=True)
class MomentEstimate:
    excess: ExcessMoments
    n_used: int
    groups: int


def group_count(delta: float) -> int:
    return max(1, math.ceil(GROUPS_PER_LOG * math.log(1.0 / delta)))


def min_samples(delta: float) -> int:
    return SAMPLES_PER_LOG * math.ceil(math.log(1.0 / delta))


def check_sample_size(n: int, delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    need = min_samples(delta)
    if n < need:
        raise TooFewSamples(f"need at least {need} samples for delta={delta}, got {n}")


def lower_median(a, axis=0):
    """Median along ``axis``; for an even count the lower-middle element."""
    a = np.sort(a, axis=axis)
    k = (a.shape[axis] - 1) // 2
    return np.take(a, k, axis=axis)


def group_power_sums(x, groups: int):
    """Per-group means of ``x**k`` for k = 1..6, shape ``(groups, 6, ...)``.

    Samples beyond ``groups * (n // groups)`` are dropped so every group has
    the same size.
    """
    size = x.shape[0] // groups
    blocks = x[: groups * size].reshape(groups, size, *x.shape[1:])
    out = np.empty((groups, 6) + x.shape[1:])
    p = blocks.copy()
    out[:, 0] = p.mean(axis=1)
    for k in range(1, 6):
        p *= blocks
        out[:, k] = p.mean(axis=1)
    return out


def excess_from_power_sums(M):
    """Per-group excess moments from ``(..., 6)``-indexed raw moments.

    ``M`` has the moment index on axis 1, matching :func:`group_power_sums`.
    Returns ``(x2, x3, x4, x5, x6)`` arrays with axis 1 removed.
    """
    m2, m3, m4, m5, m6 = (M[:, k] for k in range(1, 6))
    return (m2, m3, m4 - 3 * m2 * m2, m5 - 10 * m3 * m2, m6 - 15 * m4 * m2 + 30 * m2 ** 3)


def median_excess(M):
    """Coordinatewise lower median over groups of the per-group excess moments."""
    return tuple(lower_median(v, axis=0) for v in excess_from_power_sums(M))


def estimate_excess_moments(samples, delta: float) -> MomentEstimate:
    """Median-of-means estimate of the mean, variance and X3..X6.

    Samples are centred by the global mean, split into contiguous groups of
    equal size, and each excess moment is the lower median of its per-group
    values.
    """
    x = np.asarray(samples, dtype=float).ravel()
    check_sample_size(x.size, delta)
    g = group_count(delta)
    mean = float(x.mean())
    M = group_power_sums(x - mean, g)
    x2, x3, x4, x5, x6 = (float(v) for v in median_excess(M))
    size = x.size // g
    return MomentEstimate(ExcessMoments(mean, x2, x3, x4, x5, x6), g * size, g)


def robust_variances(samples, delta: float):
    """Median-of-means variance of every column (or of a 1-D sample)."""
    x = np.asarray(samples, dtype=float)
    check_sample_size(x.shape[0], delta)
    g = group_count(delta)
    size = x.shape[0] // g
    c = x[: g * size] - x.mean(axis=0)
    blocks = c.reshape(g, size, *x.shape[1:])
    return lower_median((blocks * blocks).mean(axis=1), axis=0)


def estimate_variance_factor2(samples, delta: float = 0.05) -> float:
    """Scale estimate meant to land in ``[Var, 2 Var]``.

    Four thirds of the median-of-means variance.  For vector samples the
    largest coordinate variance is used.
    """
    v = robust_variances(samples, delta)
    return float(VARIANCE_INFLATION * np.max(v))
