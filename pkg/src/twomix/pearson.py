"""Recovery of a mean-separated 1-D mixture from its excess moments.

The unknown ``alpha = -mu1 * mu2`` is the joint root of two degree-9
polynomials built from X3..X6: ``p5`` (only X3..X5) and ``p6`` (adds X6).
With noisy moments neither polynomial vanishes exactly, so we search the
near-roots of ``r = p5**2 + p6**2`` on ``(0, y_max]``.

All root finding happens in the rescaled variable ``u = y / y_max`` with
moments ``X_i / y_max**(i/2)``.  Both polynomials are weighted-homogeneous
of degree 9 in that scaling, so ``p(y) = y_max**9 * p~(u)`` and the search
interval becomes ``(0, 1 + eps/kappa]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeDiscriminant, NoValidRoot
from .mixture import Gaussian1D, Mixture1D, recover_probs_and_vars
from .poly import Poly, bracket_roots, horner, horner_batch, padd_batch, pderiv_batch, pmul_batch

RESIDUAL_CONST = 10.0
MIN_ALPHA_REL = 1e-12
YMAX_REL_TOL = 1e-12
# r is evaluated from expanded coefficients; below this fraction of the
# absolute-coefficient envelope a value is rounding noise
ROUNDOFF_REL = 1e-14


@dataclass
class AlphaResult:
    alpha: float
    ymax: float
    kappa: float
    residual: float
    candidates: list = field(default_factory=list)


# ------------------------------------------------------------ polynomials

def _col(v):
    return np.asarray(v, dtype=float).reshape(-1, 1)


def _p5_coeffs(x3, x4, x5):
    """Batched ascending coefficients of p5, shape ``(B, 10)``."""
    x3, x4, x5 = _col(x3), _col(x4), _col(x5)
    z = np.zeros_like(x3)
    # numerator of the fifth-moment formula for alpha*gamma
    num = np.hstack([2 * x3 ** 3, -3 * x3 * x4, x5, 2 * x3])
    # (2y^3 + 3 X4 y - 4 X3^2) and the cubic defining y_max
    den = np.hstack([-4 * x3 ** 2, 3 * x4, z, 2 + z])
    cubic = np.hstack([-x3 ** 2, x4, z, 2 + z])
    return padd_batch(6 * pmul_batch(num, num), pmul_batch(pmul_batch(den, den), cubic))


def _p6_coeffs(x3, x4, x5, x6):
    x3, x4, x5, x6 = _col(x3), _col(x4), _col(x5), _col(x6)
    z = np.zeros_like(x3)
    den5 = np.hstack([4 * x3 ** 2, -3 * x4, z, -2 + z])
    num6 = np.hstack([4 * x3 ** 4, -4 * x3 ** 2 * x4, -x4 ** 2, x6 - 8 * x3 ** 2, 8 * x4, z, 4 + z])
    den6 = np.hstack([10 * x3 ** 3, -7 * x3 * x4, z, -2 * x3])
    num5 = np.hstack([2 * x3 ** 3, -3 * x3 * x4, x5, 2 * x3])
    return padd_batch(pmul_batch(den5, num6), -pmul_batch(den6, num5))


def build_p5(x3, x4, x5) -> Poly:
    return Poly(_p5_coeffs(x3, x4, x5)[0])


def build_p6(x3, x4, x5, x6) -> Poly:
    return Poly(_p6_coeffs(x3, x4, x5, x6)[0])


def build_r(x3, x4, x5, x6) -> Poly:
    p5 = build_p5(x3, x4, x5)
    p6 = build_p6(x3, x4, x5, x6)
    return p5 * p5 + p6 * p6


def alpha_gamma_from_x5(alpha, x3, x4, x5):
    """``alpha * gamma`` from the fifth excess moment."""
    num = alpha ** 2 * x5 + 2 * x3 ** 3 + 2 * alpha ** 3 * x3 - 3 * x3 * x4 * alpha
    den = 4 * x3 ** 2 - 2 * alpha ** 3 - 3 * x4 * alpha
    return num / den


def alpha_gamma_from_x6(alpha, x3, x4, x6):
    """``alpha * gamma`` from the sixth excess moment."""
    num = (4 * x3 ** 4 - 4 * x3 ** 2 * x4 * alpha - 8 * x3 ** 2 * alpha ** 3
           - x4 ** 2 * alpha ** 2 + 8 * x4 * alpha ** 4 + x6 * alpha ** 3 + 4 * alpha ** 6)
    den = 10 * x3 ** 3 - 7 * x3 * x4 * alpha - 2 * x3 * alpha ** 3
    return num / den


# ------------------------------------------------------------------ y_max

def y_max_batch(x3, x4):
    """Unique nonnegative root of ``2y^3 + X4 y - X3^2`` (vectorised)."""
    x3 = np.asarray(x3, dtype=float)
    x4 = np.asarray(x4, dtype=float)
    c = x3 * x3
    # the cubic is nonnegative at max(sqrt(-X4), |X3|^(2/3))
    hi = np.maximum(np.sqrt(np.maximum(-x4, 0.0)), np.cbrt(c)) * (1 + 1e-12) + 1e-300
    lo = np.zeros_like(hi)

    def g(y):
        return (2 * y * y + x4) * y - c

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        neg = g(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.all(hi - lo <= 1e-15 * hi):
            break
    y = 0.5 * (lo + hi)
    for _ in range(2):
        d = 6 * y * y + x4
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d > 0, y - g(y) / d, y)
        y = np.where((step >= lo) & (step <= hi), step, y)
    degenerate = (c == 0) & (x4 >= 0)
    y = np.where(degenerate, 0.0, y)
    return np.where((c == 0) & (x4 < 0), np.sqrt(np.maximum(-x4, 0.0) / 2), y)


def y_max(x3, x4) -> float:
    return float(y_max_batch(np.array([x3]), np.array([x4]))[0])


# ------------------------------------------------------- alpha recovery

@dataclass
class AlphaBatch:
    """Vectorised result of alpha recovery; ``ok`` flags rows with a root.

    ``eps`` holds the precision at which each row succeeded (or the last
    one tried).  ``candidates`` is filled only when diagnostics are asked for.
    """

    alpha: np.ndarray
    ymax: np.ndarray
    kappa: np.ndarray
    residual: np.ndarray
    ok: np.ndarray
    eps: np.ndarray
    candidates: list


def _scaled_polys(x3, x4, x5, x6, ym):
    s = np.sqrt(ym)
    P5 = _p5_coeffs(x3 / s ** 3, x4 / s ** 4, x5 / s ** 5)
    P6 = _p6_coeffs(x3 / s ** 3, x4 / s ** 4, x5 / s ** 5, x6 / s ** 6)
    R = padd_batch(pmul_batch(P5, P5), pmul_batch(P6, P6))
    return R, pderiv_batch(R)


def recover_alpha_batch(x3, x4, x5, x6, eps, growth=None, cap=None,
                        diagnostics=False) -> AlphaBatch:
    """Row-wise alpha recovery.

    With ``growth`` and ``cap`` set, a row whose search fails at ``eps`` is
    retried at ``growth * eps`` and so on up to ``cap``.  The critical
    points of ``r`` do not depend on the precision, so they are located
    once on the widest interval and reused at every rung.
    """
    x3, x4, x5, x6 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x3, x4, x5, x6))
    eps0 = np.broadcast_to(np.asarray(eps, dtype=float), x3.shape).astype(float)
    B = x3.size
    ym = y_max_batch(x3, x4)
    live = ym > 0
    safe = np.where(live, ym, 1.0)
    kappa = 1.0 + np.sqrt(np.abs(x4)) / safe

    levels = [eps0]
    if growth is not None:
        top = eps0 if cap is None else np.maximum(eps0, cap)
        while np.any(levels[-1] < top):
            levels.append(np.minimum(top, levels[-1] * growth))
    widest = levels[-1]

    R, dR = _scaled_polys(x3, x4, x5, x6, safe)
    ddR = pderiv_batch(dR)
    crit = bracket_roots(lambda U: horner_batch(dR, U), np.zeros(B), 1.0 + widest / kappa,
                         dfun=lambda U: horner_batch(ddR, U))
    width = max(1, max(len(c) for c in crit))
    C = np.full((B, width), np.nan)
    for i, c in enumerate(crit):
        C[i, : len(c)] = c
    filled = np.where(np.isnan(C), 0.5, C)
    RC = horner_batch(R, filled)
    RA = np.abs(R)
    floor_c = ROUNDOFF_REL * horner_batch(RA, filled)

    alpha = np.zeros(B)
    resid = np.full(B, np.inf)
    used = levels[-1].copy()
    ok = np.zeros(B, dtype=bool)
    for lev in levels:
        todo = live & ~ok
        if not np.any(todo):
            break
        upper = 1.0 + lev / kappa
        thresh = lev ** 2 * kappa ** 10 * RESIDUAL_CONST
        r_end = horner_batch(R, upper[:, None])[:, 0]
        floor_end = ROUNDOFF_REL * horner_batch(RA, upper[:, None])[:, 0]
        end_ok = r_end <= np.maximum(thresh * upper ** 18, floor_end)
        with np.errstate(invalid="ignore"):
            pas = ((C <= upper[:, None]) & (C >= MIN_ALPHA_REL)
                   & (RC <= np.maximum(thresh[:, None] * filled ** 18, floor_c)))
        cand = np.where(pas, C, -np.inf)
        k = np.argmax(cand, axis=1)
        best = cand[np.arange(B), k]
        found = end_ok | np.isfinite(best)
        take = todo & found
        u = np.where(end_ok, upper, best)
        r = np.where(end_ok, r_end, RC[np.arange(B), k])
        alpha[take] = (u * ym)[take]
        resid[take] = (r * ym ** 18)[take]
        used[todo] = lev[todo]
        ok |= take

    candidates = []
    if diagnostics:
        for i in range(B):
            if not live[i]:
                candidates.append([(0.0, math.inf, "y_max is zero")])
                continue
            upper = 1.0 + used[i] / kappa[i]
            thresh = used[i] ** 2 * kappa[i] ** 10 * RESIDUAL_CONST
            us = [c for c in crit[i] if c <= upper] + [upper]
            cand = []
            for u in sorted(us, reverse=True):
                rv = float(horner(R[i], u))
                y = float(u * ym[i])
                limit = max(thresh * u ** 18, ROUNDOFF_REL * float(horner(RA[i], u)))
                if u < MIN_ALPHA_REL:
                    why = "alpha too small"
                elif rv > limit:
                    why = "residual above threshold"
                elif ok[i] and abs(y - alpha[i]) <= 1e-12 * ym[i]:
                    why = "accepted"
                else:
                    why = "smaller than accepted root"
                cand.append((y, rv * float(ym[i]) ** 18, why))
            candidates.append(cand)
    return AlphaBatch(alpha, ym, kappa, resid, ok, used, candidates)


def recover_alpha(x3, x4, x5, x6, eps) -> AlphaResult:
    """Largest near-root of ``r`` on ``(0, (1 + eps/kappa) * y_max]``.

    Raises
    ------
    NoValidRoot
        When ``y_max`` is zero or no candidate passes the residual test.
    """
    res = recover_alpha_batch(x3, x4, x5, x6, eps, diagnostics=True)
    if not res.ok[0]:
        raise NoValidRoot("no candidate alpha passes the residual test", res.candidates[0])
    return AlphaResult(float(res.alpha[0]), float(res.ymax[0]), float(res.kappa[0]),
                       float(res.residual[0]), res.candidates[0])


# ------------------------------------------------------ mixture recovery

def means_from_alpha(alpha, x3, x4, x5):
    """Component means ``(mu1, mu2)`` and ``gamma`` of the centred mixture."""
    z = alpha_gamma_from_x5(alpha, x3, x4, x5)
    gamma = z / alpha
    beta = (x3 - 3 * z) / alpha
    disc = beta * beta + 4 * alpha
    if np.any(disc < 0):
        raise NegativeDiscriminant(f"beta^2 + 4 alpha = {disc}")
    root = np.sqrt(disc)
    return (beta - root) / 2, (beta + root) / 2, gamma


def mixture_from_alpha(alpha, mu, sigma_sq, x3, x4, x5) -> Mixture1D:
    mu1, mu2, gamma = means_from_alpha(alpha, x3, x4, x5)
    p1, p2, v1, v2, _ = recover_probs_and_vars(mu1, mu2, gamma, sigma_sq)
    return Mixture1D(p1, p2, Gaussian1D(mu + mu1, v1), Gaussian1D(mu + mu2, v2))


def recover_from_moments(mu, sigma_sq, x3, x4, x5, x6, eps) -> Mixture1D:
    """Mixture with overall mean ``mu`` and variance ``sigma_sq`` matching X3..X6."""
    res = recover_alpha(x3, x4, x5, x6, eps)
    return mixture_from_alpha(res.alpha, mu, sigma_sq, x3, x4, x5)
