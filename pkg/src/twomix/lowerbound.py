"""A second mixture sharing five moments with a given one, and Hellinger decay.

Two mixtures agreeing on their first five moments become hard to tell
apart once both are smoothed by wide Gaussian noise: their squared
Hellinger distance falls off like ``sigma**-12``.  This module builds such
pairs and measures the decay numerically.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NoSecondRoot, RecoveryFailure
from .mixture import Gaussian1D, Mixture1D, exact_excess_moments, recover_probs_and_vars, reparameterize
from .pearson import build_p5, means_from_alpha, y_max
from .poly import real_roots
from .quadrature import adaptive_simpson

ROOT_SEPARATION = 1e-6
WINDOW_SDS = 12.0
H2_RTOL = 1e-7


def matching_mixture(f: Mixture1D) -> Mixture1D:
    """Another mixture with the same first five moments as ``f``.

    It comes from a root of the fifth-moment polynomial other than the true
    ``alpha``.  Roots that violate ``X3^2 - 2y^3 - X4 y >= 0`` or that need a
    negative component variance are rejected.

    Raises
    ------
    NoSecondRoot
        If no admissible alternative root exists in ``(0, y_max]``.
    """
    mu = f.mean
    x = exact_excess_moments(f)
    alpha = reparameterize(f.shifted(-mu)).alpha
    ym = y_max(x.x3, x.x4)
    if ym <= 0:
        raise NoSecondRoot("y_max is zero; the mixture has no mean separation")
    p5 = build_p5(x.x3, x.x4, x.x5)
    roots = real_roots(p5, 0.0, ym * (1 + 1e-9))
    tried = []
    for y in sorted(roots, reverse=True):
        if y <= ROOT_SEPARATION * ym or abs(y - alpha) <= ROOT_SEPARATION * ym:
            continue
        slack = x.x3 ** 2 - 2 * y ** 3 - x.x4 * y
        if slack < -1e-9 * ym ** 3:
            tried.append((y, "negative square for alpha*gamma"))
            continue
        try:
            mu1, mu2, gamma = means_from_alpha(y, x.x3, x.x4, x.x5)
            p1, p2, v1, v2, clamped = recover_probs_and_vars(mu1, mu2, gamma, x.x2)
        except (ArithmeticError, RecoveryFailure, ValueError) as exc:
            tried.append((y, str(exc)))
            continue
        if clamped:
            tried.append((y, "negative component variance"))
            continue
        return Mixture1D(p1, p2, Gaussian1D(mu + mu1, v1), Gaussian1D(mu + mu2, v2))
    raise NoSecondRoot(f"no admissible second root (rejected: {tried})")


def add_noise(f: Mixture1D, tau_sq: float) -> Mixture1D:
    """Convolve with ``N(0, tau_sq)``: both variances grow by ``tau_sq``."""
    if tau_sq < 0:
        raise ValueError("tau_sq must be nonnegative")
    return Mixture1D(f.p1, f.p2, Gaussian1D(f.g1.mu, f.g1.var + tau_sq),
                     Gaussian1D(f.g2.mu, f.g2.var + tau_sq))


def _pdf_ld(m: Mixture1D, x):
    out = np.zeros_like(x)
    for p, g in ((m.p1, m.g1), (m.p2, m.g2)):
        var = np.longdouble(g.var)
        z = (x - np.longdouble(g.mu)) ** 2 / (2 * var)
        out += np.longdouble(p) * np.exp(-z) / np.sqrt(2 * np.longdouble(math.pi) * var)
    return out


def hellinger_sq_with_error(f: Mixture1D, g: Mixture1D):
    """Squared Hellinger distance and an error estimate.

    Integrates ``(sqrt p - sqrt q)^2 / 2`` in extended precision over a
    window of twelve of the widest component's standard deviations beyond
    the outermost means.  The neglected tails contribute at most half the
    total mass outside the window, which is added to the error estimate.
    """
    comps = (f.g1, f.g2, g.g1, g.g2)
    sd = max(math.sqrt(c.var) for c in comps)
    lo = min(c.mu for c in comps) - WINDOW_SDS * sd
    hi = max(c.mu for c in comps) + WINDOW_SDS * sd

    def integrand(x):
        d = np.sqrt(_pdf_ld(f, x)) - np.sqrt(_pdf_ld(g, x))
        return 0.5 * d * d

    val, err = adaptive_simpson(integrand, lo, hi, tol=1e-300, rtol=H2_RTOL, dtype=np.longdouble)
    tail = math.erfc(WINDOW_SDS / math.sqrt(2))  # two-sided mass beyond 12 sd
    return max(0.0, val), err + tail


def hellinger_sq(f: Mixture1D, g: Mixture1D) -> float:
    return hellinger_sq_with_error(f, g)[0]


def hellinger_scaling_experiment(f: Mixture1D, g: Mixture1D, sigmas):
    """Rows ``(sigma, H^2, local log-log slope)`` after smoothing by ``N(0, sigma^2)``.

    The slope of the first row is ``nan``.
    """
    rows = []
    prev = None
    for s in sigmas:
        h2 = hellinger_sq(add_noise(f, s * s), add_noise(g, s * s))
        slope = math.nan
        if prev is not None and prev[1] > 0 and h2 > 0:
            slope = math.log(h2 / prev[1]) / math.log(s / prev[0])
        rows.append((float(s), h2, slope))
        prev = (s, h2)
    return rows
