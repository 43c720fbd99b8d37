"""Top-level 1-D estimator: pick a regime from the moments, then dispatch.

Three regimes are distinguished by comparing the sampling-noise scale
``f = (ln(1/delta) / n) ** (1/12)`` against moment-based proxies for the
mean gap and the variance gap:

* ``MeansSeparated``: full recovery through the alpha polynomials,
* ``VariancesSeparated``: equal-means closed form,
* ``SingleGaussian``: both components set to the fitted normal.

The precision handed to the alpha search starts at the noise-scale formula
and is doubled (up to ``EPS_CAP``) while no candidate passes.  A
mean-separated recovery that still fails falls through to the next regime
down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .mixture import VAR_FLOOR, ExcessMoments, Gaussian1D, Mixture1D
from .moments import estimate_excess_moments
from .pearson import means_from_alpha, recover_alpha_batch
from .samemean import same_mean_params

C_MEANS = 0.25
C_VARS = 1.0
EPS_CAP = 0.99
# the precision formula carries an unknown constant; it is discovered by
# doubling until some candidate alpha passes the residual test
EPS_GROWTH = 2.0


class Branch(str, Enum):
    MEANS_SEPARATED = "MeansSeparated"
    VARIANCES_SEPARATED = "VariancesSeparated"
    SINGLE_GAUSSIAN = "SingleGaussian"


@dataclass
class RegimeReport:
    f: float
    delta_mu_bar: float
    delta_sigma2_bar: float
    branch: Branch
    used_branch: Branch | None = None
    eps: float | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "f": self.f,
            "delta_mu_bar": self.delta_mu_bar,
            "delta_sigma2_bar": self.delta_sigma2_bar,
            "branch": self.branch.value,
            "used_branch": None if self.used_branch is None else self.used_branch.value,
            "eps": self.eps,
            "notes": list(self.notes),
        }


def noise_scale(n, delta):
    return (math.log(1.0 / delta) / n) ** (1.0 / 12.0)


def gap_proxies(x3, x4):
    """Moment-based proxies for the mean gap and the variance gap.

    The mean-gap proxy is ``|X3|^(1/3) + |X4|^(1/4)``, tightened to
    ``|X3| / sqrt(X4)`` when that is smaller and X4 is positive.
    """
    x3 = np.asarray(x3, dtype=float)
    x4 = np.asarray(x4, dtype=float)
    dmu = np.cbrt(np.abs(x3)) + np.abs(x4) ** 0.25
    with np.errstate(divide="ignore", invalid="ignore"):
        alt = np.where(x4 > 0, np.abs(x3) / np.sqrt(np.where(x4 > 0, x4, 1.0)), np.inf)
    return np.minimum(dmu, alt), np.sqrt(np.abs(x4))


def branch_codes(x2, x3, x4, n, delta, c_means=C_MEANS, c_vars=C_VARS):
    """Vectorised regime decision: 0 means-separated, 1 variances-separated, 2 single."""
    f = noise_scale(n, delta)
    dmu, dvar = gap_proxies(x3, x4)
    x2 = np.maximum(np.asarray(x2, dtype=float), np.finfo(float).tiny)
    means = f * f <= c_means * dmu * dmu / x2
    vars_ = (f * f <= c_vars * dvar / x2) & (np.asarray(x4) > 0)
    return np.where(means, 0, np.where(vars_, 1, 2)), f, dmu, dvar


def regime(x: ExcessMoments, n: int, delta: float, c_means=C_MEANS, c_vars=C_VARS) -> RegimeReport:
    code, f, dmu, dvar = branch_codes(x.x2, x.x3, x.x4, n, delta, c_means, c_vars)
    return RegimeReport(float(f), float(dmu), float(dvar), list(Branch)[int(code)])


def alg1_eps(x2, dmu, n, delta):
    """Target precision handed to the alpha recovery."""
    with np.errstate(divide="ignore", over="ignore"):
        ratio = np.sqrt(np.asarray(x2, dtype=float)) / np.asarray(dmu, dtype=float)
        eps = np.sqrt(ratio ** 12 * math.log(1.0 / delta) / n)
    return np.minimum(EPS_CAP, eps)


@dataclass
class BatchFit:
    """Row-wise 1-D fits; ``branch`` and ``used`` hold codes 0/1/2."""

    p1: np.ndarray
    mu1: np.ndarray
    var1: np.ndarray
    mu2: np.ndarray
    var2: np.ndarray
    branch: np.ndarray
    used: np.ndarray
    eps: np.ndarray
    f: float
    dmu: np.ndarray
    dvar: np.ndarray


def fit_from_moments_batch(x1, x2, x3, x4, x5, x6, n, delta,
                           c_means=C_MEANS, c_vars=C_VARS) -> BatchFit:
    """Dispatch every row of moment estimates to the matching recovery."""
    x1, x2, x3, x4, x5, x6 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x1, x2, x3, x4, x5, x6))
    B = x1.size
    code, f, dmu, dvar = branch_codes(x2, x3, x4, n, delta, c_means, c_vars)
    eps = np.where(code == 0, alg1_eps(x2, dmu, n, delta), np.nan)

    p1 = np.full(B, 0.5)
    mu1 = x1.copy()
    mu2 = x1.copy()
    var1 = np.maximum(x2, VAR_FLOOR)
    var2 = var1.copy()
    used = np.full(B, 2)

    sep = np.nonzero(code == 0)[0]
    if sep.size:
        res = recover_alpha_batch(x3[sep], x4[sep], x5[sep], x6[sep], eps[sep],
                                  growth=EPS_GROWTH, cap=EPS_CAP)
        eps[sep] = res.eps
        good = sep[res.ok]
        a = res.alpha[res.ok]
        if good.size:
            m1, m2, gamma = means_from_alpha(a, x3[good], x4[good], x5[good])
            span = m2 - m1
            q1 = m2 / span
            q2 = -m1 / span
            v1 = x2[good] - (q1 * m1 * m1 + q2 * m2 * m2 - m1 * gamma)
            v2 = v1 + span * gamma
            floor = VAR_FLOOR * x2[good]
            p1[good] = q1
            mu1[good] = x1[good] + m1
            mu2[good] = x1[good] + m2
            var1[good] = np.maximum(v1, floor)
            var2[good] = np.maximum(v2, floor)
            used[good] = 0

    rows = np.nonzero((used == 2) & (code <= 1) & (x4 > 0))[0]
    if rows.size:
        sm = same_mean_params(x2[rows], x4[rows], x6[rows])
        p1[rows] = sm.p1
        var1[rows] = sm.var1
        var2[rows] = sm.var2
        used[rows] = 1
    return BatchFit(p1, mu1, var1, mu2, var2, code, used, eps, float(f), dmu, dvar)


def fit_from_moments(x: ExcessMoments, n: int, delta: float,
                     c_means=C_MEANS, c_vars=C_VARS):
    """Scalar wrapper around :func:`fit_from_moments_batch`."""
    fit = fit_from_moments_batch(*x.as_tuple(), n, delta, c_means, c_vars)
    branches = list(Branch)
    report = RegimeReport(fit.f, float(fit.dmu[0]), float(fit.dvar[0]),
                          branches[int(fit.branch[0])], branches[int(fit.used[0])],
                          None if np.isnan(fit.eps[0]) else float(fit.eps[0]))
    if report.used_branch != report.branch:
        report.notes.append(f"{report.branch.value} failed; fell through to {report.used_branch.value}")
    p1 = float(fit.p1[0])
    if not 0.0 < p1 < 1.0:
        p1 = min(max(p1, 1e-12), 1 - 1e-12)
    m = Mixture1D(p1, 1.0 - p1, Gaussian1D(fit.mu1[0], fit.var1[0]), Gaussian1D(fit.mu2[0], fit.var2[0]))
    return m, report


def recover_1d(samples, delta: float, c_means=C_MEANS, c_vars=C_VARS):
    """Estimate a two-component mixture from 1-D samples.

    Returns
    -------
    (Mixture1D, RegimeReport)

    Raises
    ------
    TooFewSamples
        If there are fewer than ``48 * ceil(ln(1/delta))`` samples.
    """
    x = np.asarray(samples, dtype=float).ravel()
    est = estimate_excess_moments(x, delta)
    return fit_from_moments(est.excess, x.size, delta, c_means, c_vars)
