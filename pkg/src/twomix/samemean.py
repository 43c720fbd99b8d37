"""Recovery of a 1-D mixture whose two components share a mean.

With equal means the fourth and sixth excess moments reduce to
``X4 = 3 p1 p2 D^2`` and ``X6 = 15 p1 p2 (p1 - p2) D^3`` where ``D`` is the
variance gap ``var2 - var1``, which can be inverted in closed form.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NegativeRadicand, NonPositiveX4
from .mixture import VAR_FLOOR, Gaussian1D, Mixture1D

P_MIN = 0.001
P_MAX = 0.999


class SameMeanParams(NamedTuple):
    p1: float
    p2: float
    var1: float
    var2: float
    var_gap: float
    clamped: bool


def same_mean_params(sigma_sq, x4, x6):
    """Vectorised inversion; returns :class:`SameMeanParams` of arrays or floats.

    Components are labelled so that ``var1 <= var2``; then
    ``p1 - p2 = X6 / (5 X4 D)``.  Probabilities
    outside ``[P_MIN, P_MAX]`` and variances below ``VAR_FLOOR * sigma_sq``
    are clamped and reported through ``clamped``.
    """
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    x4 = np.asarray(x4, dtype=float)
    x6 = np.asarray(x6, dtype=float)
    if np.any(x4 <= 0):
        raise NonPositiveX4(f"fourth excess moment must be positive, got {x4}")
    rad = 4.0 / 3.0 * x4 + x6 ** 2 / (25.0 * x4 ** 2)
    if np.any(rad < 0):
        raise NegativeRadicand(f"radicand {rad} is negative")
    gap = np.sqrt(rad)
    skew = x6 / (5.0 * x4 * gap)
    p1 = 0.5 * (1.0 + skew)
    p1c = np.clip(p1, P_MIN, P_MAX)
    p2c = 1.0 - p1c
    floor = VAR_FLOOR * sigma_sq
    var1 = sigma_sq - p2c * gap
    var2 = sigma_sq + p1c * gap
    clamped = (p1c != p1) | (var1 < floor)
    var1 = np.maximum(var1, floor)
    out = SameMeanParams(p1c, p2c, var1, var2, gap, clamped)
    if out.p1.ndim == 0:
        return SameMeanParams(*(float(v) if i < 5 else bool(v) for i, v in enumerate(out)))
    return out


def recover_same_mean(mu, sigma_sq, x4, x6) -> Mixture1D:
    """Two components centred at ``mu`` matching variance, X4 and X6."""
    p1, p2, var1, var2, _, _ = same_mean_params(sigma_sq, x4, x6)
    return Mixture1D(p1, p2, Gaussian1D(mu, var1), Gaussian1D(mu, var2))
