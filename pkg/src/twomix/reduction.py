"""Learning a d-dimensional mixture from low-dimensional sub-problems.

Two layers:

* :func:`recover_4d` learns a mixture in at most four dimensions from 1-D
  recoveries along random directions.  Candidate parameters are checked
  against every direction: a candidate survives only if, in each direction,
  its projection lies near one of the two 1-D estimates.
* :func:`recover_d` learns a mixture in any dimension from coordinate,
  pair and quadruple sub-problems, using an "anchor" coordinate (or pair)
  where the two components visibly differ to keep component labels
  consistent across sub-problems.

All sub-problems share one sample set.  Their sufficient statistics are
per-group products of monomials of degree at most three, from which the
per-group power means of any projection follow by a quadratic form.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .combined import fit_from_moments_batch
from .errors import DimensionMismatch, MatchFailure, RecoveryFailure
from .mixture import VAR_FLOOR, MixtureD
from .moments import (VARIANCE_INFLATION, check_sample_size, group_count, group_power_sums, lower_median,
                      median_excess)

MAX_DIRECTION_NORM = 9.0
ACCEPT_CONST = 5.0
PROJECTIONS_PER_DIM = 8
INNER_EPS_DIV = 20
MAX_SHARED_FEATURES = 600

# Error bars of a single 1-D fit, in units of the projected standard
# deviation s and the noise scale f of the fit.  Calibrated on random
# mixtures at n = 1e6 so that nearly every observed error lies inside.
MEANS_TRUST_EPS = 0.4
MEANS_MU_ERR = (0.4, 4.0)     # s * (a * f + b * eps)
MEANS_VAR_ERR = (0.4, 3.0)    # s^2 * (a * f^2 + b * eps)
UNSEPARATED_MU_ERR = 2.6      # s * k * f
SAMEMEAN_VAR_ERR = 6.5        # s^2 * k * f^2
SINGLE_VAR_ERR = 1.8          # s^2 * k * f^2
# median-of-means sampling noise, in units of s^4 / sqrt(n) and s^2 / sqrt(n),
# taken at about one and a half standard deviations
X4_NOISE = 9.0
X2_NOISE = 5.0
WEIGHT_ERR = 0.05             # pooled weight error times the gap
SIGN_ITERS = 20
OUTLIER_FRACTION = 0.1
ENUM_DIRECTIONS = 12
TOP_PATTERNS = 16
ASCENT_STARTS = 2
ASCENT_SWEEPS = 3
RANDOM_BLOCKS = 2
RESPLIT_ROUNDS = 2
COV_GAP_NOISE = 5.0


# ------------------------------------------------------------- directions

@dataclass(frozen=True)
class ProjectionSet:
    directions: np.ndarray

    def __post_init__(self):
        norms = np.linalg.norm(self.directions, axis=1)
        if np.any(norms > MAX_DIRECTION_NORM):
            raise ValueError("every direction must have norm at most 9")

    @property
    def m(self) -> int:
        return self.directions.shape[0]


def sample_truncated_directions(d: int, m: int, seed=None) -> ProjectionSet:
    """``m`` standard normal vectors in ``R^d``, redrawn while their norm exceeds 9."""
    if d < 1:
        raise ValueError("d must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = rng.standard_normal((m, d))
    bad = np.linalg.norm(out, axis=1) > MAX_DIRECTION_NORM
    while np.any(bad):
        out[bad] = rng.standard_normal((int(bad.sum()), d))
        bad = np.linalg.norm(out, axis=1) > MAX_DIRECTION_NORM
    return ProjectionSet(out)


# ------------------------------------------------------------------- nets

@dataclass(frozen=True)
class NetSpec:
    """Axis-aligned grid ``center + spacing * k`` covering the box of ``half_width``.

    The outermost points may sit up to one spacing outside the box, so every
    point of the box is within half a spacing of the grid.
    """

    center: np.ndarray
    half_width: float
    spacing: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not self.half_width >= self.spacing:
            raise ValueError("half_width must be at least the spacing")

    @property
    def steps(self) -> int:
        return int(math.ceil(self.half_width / self.spacing - 1e-12))

    @property
    def log_size(self) -> float:
        return self.center.size * math.log(2 * self.steps + 1)

    def snap(self, x):
        """Nearest net point."""
        k = np.rint((np.asarray(x, dtype=float) - self.center) / self.spacing)
        k = np.clip(k, -self.steps, self.steps)
        return self.center + k * self.spacing

    def contains(self, x) -> bool:
        return bool(np.all(np.abs(np.asarray(x) - self.center) <= self.half_width + 1e-12 * self.spacing))


def mean_net_spacing(eps: float, sigma: float, D: int) -> float:
    # rounding moves <a, mu> by at most half a step times ||a||_1 <= 9 sqrt(D)
    return eps * sigma / (MAX_DIRECTION_NORM * math.sqrt(D))


def cov_net_spacing(eps: float, sigma_sq: float, D: int) -> float:
    # |a' B a| <= max|B| * ||a||_1^2, so half a step never leaves the tolerance
    return eps ** 2 * sigma_sq / (MAX_DIRECTION_NORM ** 2 * D)


def projection_count(log_net_size: float, delta: float) -> int:
    return math.ceil(10 * (log_net_size + math.log(1.0 / delta)))


# -------------------------------------------------------- shared moments

def _monomials(coords, max_degree=3):
    out = [()]
    for k in range(1, max_degree + 1):
        out.extend(combinations_with_replacement(coords, k))
    return out


class ProjectionMoments:
    """Per-group power means of arbitrary projections of one sample set.

    Samples are centred by their overall mean and split into ``groups``
    contiguous blocks (the remainder is dropped).  For each block the mean
    outer product of the degree-<=3 monomial vector is stored; the k-th
    power mean of ``<a, x>`` is then a bilinear form in it.  Small
    dimensions get one shared table; larger ones build per-subset tables on
    demand.
    """

    def __init__(self, samples, groups: int):
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        self.n, self.d = x.shape
        self.groups = groups
        self.size = self.n // groups
        if self.size < 1:
            raise ValueError("fewer samples than groups")
        self.mean = x.mean(axis=0)
        centred = x[: groups * self.size] - self.mean
        self._xt = np.ascontiguousarray(centred.T, dtype=np.float32)
        self._cache = {}
        self._full = None
        coords = tuple(range(self.d))
        if len(_monomials(coords)) <= MAX_SHARED_FEATURES:
            feats = _monomials(coords)
            index = {t: i for i, t in enumerate(feats)}
            G = self._gram(coords, feats)
            self._full = (feats, index, G)
            # pure powers x_c^k are the entries x_c^(k - k//2) * x_c^(k//2)
            self._axis = np.empty((groups, 6, self.d))      # (groups, 6, d)
            for c in coords:
                for k in range(1, 7):
                    self._axis[:, k - 1, c] = G[:, index[(c,) * (k - k // 2)], index[(c,) * (k // 2)]]
        else:
            self._axis = group_power_sums(centred, groups)

    @property
    def n_used(self) -> int:
        return self.groups * self.size

    def _gram(self, coords, feats):
        cols = list(coords)
        nf = len(feats)
        D = len(cols)
        G = np.empty((self.groups, nf, nf))
        F = np.empty((nf, self.size), dtype=np.float32)
        # squares and cubes are stored in lexicographic order, so the
        # monomials sharing a first variable c form contiguous blocks
        sq_start, cube_start = [], []
        o2, o3 = 1 + D, 1 + D + D * (D + 1) // 2
        for c in range(D):
            sq_start.append(o2)
            o2 += D - c
        for c in range(D):
            cube_start.append(o3)
            o3 += (D - c) * (D - c + 1) // 2
        F[0] = 1.0
        for g in range(self.groups):
            B = F[1: 1 + D]
            np.take(self._xt[:, g * self.size: (g + 1) * self.size], cols, axis=0, out=B)
            for c in range(D):
                np.multiply(B[c:], B[c], out=F[sq_start[c]: sq_start[c] + D - c])
            for c in range(D):
                w = (D - c) * (D - c + 1) // 2
                np.multiply(F[sq_start[c]: 1 + D + D * (D + 1) // 2], B[c], out=F[cube_start[c]: cube_start[c] + w])
            G[g] = np.matmul(F, F.T)
        G /= self.size
        return G

    def _table(self, coords):
        coords = tuple(sorted(set(coords)))
        if self._full is not None:
            feats, index, G = self._full
            if len(coords) == self.d:
                return feats, G
            sub = [t for t in feats if set(t) <= set(coords)]
            idx = np.array([index[t] for t in sub])
            return sub, G[:, idx[:, None], idx[None, :]]
        if coords not in self._cache:
            feats = _monomials(coords)
            self._cache[coords] = (feats, self._gram(coords, feats))
        return self._cache[coords]

    def axis_power_means(self, coords):
        """Per-group power means of single coordinates, ``(groups, 6, len(coords))``."""
        return self._axis[:, :, list(coords)]

    def power_means(self, A, coords):
        """Per-group means of ``<a, x>^k``, k = 1..6, shape ``(groups, 6, m)``."""
        coords = tuple(coords)
        if sorted(coords) != list(coords) or len(set(coords)) != len(coords):
            raise ValueError("coords must be strictly increasing")
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[1] != len(coords):
            raise DimensionMismatch(f"directions have {A.shape[1]} entries for {len(coords)} coordinates")
        feats, G = self._table(coords)
        pos = {c: i for i, c in enumerate(coords)}
        m = A.shape[0]
        C = np.zeros((4, len(feats), m))
        for f, t in enumerate(feats):
            k = len(t)
            counts = np.bincount([pos[c] for c in t], minlength=len(coords)) if k else np.zeros(len(coords), int)
            multi = math.factorial(k) / math.prod(math.factorial(int(c)) for c in counts)
            C[k, f] = multi * np.prod(A ** counts, axis=1)
        g, nf = G.shape[0], len(feats)
        # one flat product against the degree-1..3 blocks of C
        H = (G.reshape(g * nf, nf) @ C[1:].transpose(1, 0, 2).reshape(nf, 3 * m)).reshape(g, nf, 3, m)
        out = np.empty((g, 6, m))
        for j, (u, v) in enumerate(((0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3))):
            out[:, j] = np.einsum("fm,gfm->gm", C[u], H[:, :, v - 1])
        return out

    def coordinate_variances(self, coords):
        """Lower median over groups of every coordinate's variance."""
        return lower_median(self.axis_power_means(coords)[:, 1], axis=0)


# ----------------------------------------------------------- 1-D batches

@dataclass
class DirectionFits:
    """1-D fits along many directions, with per-fit error bars."""

    p1: np.ndarray
    mu: np.ndarray       # (m, 2)
    var: np.ndarray      # (m, 2)
    mu_err: np.ndarray
    var_err: np.ndarray
    used: np.ndarray
    x2: np.ndarray
    x4: np.ndarray


def fit_error_bars(fit, x4=None, n=None):
    """Heuristic error bars ``(mu_err, var_err)`` for each row of a batch fit.

    A mean-separated fit that needed a precision above ``MEANS_TRUST_EPS``
    carries no usable information and gets infinite bars.  Given the X4
    estimates and the sample count, unseparated rows get variance bars
    for the X4-based split done in :func:`label_consistent_pair`.
    """
    s2 = np.maximum(fit.var1 * fit.p1 + fit.var2 * (1 - fit.p1)
                    + fit.p1 * (1 - fit.p1) * (fit.mu2 - fit.mu1) ** 2, VAR_FLOOR)
    s = np.sqrt(s2)
    f = fit.f
    eps = np.nan_to_num(fit.eps, nan=np.inf)
    mu_err = UNSEPARATED_MU_ERR * f * s
    if x4 is None:
        var_err = np.where(fit.used == 1, SAMEMEAN_VAR_ERR, SINGLE_VAR_ERR) * f * f * s2
    else:
        # gap = sqrt(X4 / c) with c = 3 p1 p2 <= 3/4; its error interpolates
        # between sqrt(noise / c) at zero gap and noise / (2 c gap)
        c = 0.75
        noise = X4_NOISE * s2 * s2 / math.sqrt(n)
        gap = np.sqrt(np.maximum(x4, 0.0) / c)
        gap_err = noise / (2 * c * gap + np.sqrt(c * noise))
        var_err = gap_err + WEIGHT_ERR * gap + X2_NOISE * s2 / math.sqrt(n)
    sep = fit.used == 0
    trusted = sep & (eps <= MEANS_TRUST_EPS)
    mu_err = np.where(trusted, s * (MEANS_MU_ERR[0] * f + MEANS_MU_ERR[1] * eps), mu_err)
    var_err = np.where(trusted, s2 * (MEANS_VAR_ERR[0] * f * f + MEANS_VAR_ERR[1] * eps), var_err)
    mu_err = np.where(sep & ~trusted, np.inf, mu_err)
    var_err = np.where(sep & ~trusted, np.inf, var_err)
    return mu_err, var_err


def fit_directions(src: ProjectionMoments, A, coords, delta: float) -> DirectionFits:
    """1-D fits along the rows of ``A``; ``A=None`` means the coordinate axes."""
    if A is None:
        A = np.eye(len(coords))
        M = src.axis_power_means(coords)
    else:
        A = np.atleast_2d(A)
        M = src.power_means(A, coords)
    x2, x3, x4, x5, x6 = median_excess(M)
    x1 = A @ src.mean[list(coords)]
    fit = fit_from_moments_batch(x1, x2, x3, x4, x5, x6, src.n_used, delta)
    mu_err, var_err = fit_error_bars(fit, x4, src.n_used)
    return DirectionFits(fit.p1, np.stack([fit.mu1, fit.mu2], axis=1), np.stack([fit.var1, fit.var2], axis=1),
                         mu_err, var_err, fit.used, np.asarray(x2, dtype=float), np.asarray(x4, dtype=float))


# --------------------------------------------------------- accept tests

def _quad_features(A):
    """Rows ``w`` with ``w @ vech(S) == a^T S a`` for symmetric ``S``."""
    A = np.atleast_2d(A)
    D = A.shape[1]
    iu = np.triu_indices(D)
    scale = np.where(iu[0] == iu[1], 1.0, 2.0)
    return A[:, iu[0]] * A[:, iu[1]] * scale


def _vech(S):
    S = np.asarray(S)
    return S[np.triu_indices(S.shape[-1])]


def _unvech(v, D):
    S = np.zeros((D, D))
    S[np.triu_indices(D)] = v
    return S + np.triu(S, 1).T


def allowed_violations(m: int) -> int:
    """Directions that may miss their slab; a few 1-D fits are outliers."""
    return int(OUTLIER_FRACTION * m)


def _within(proj, estimates, tol, slack):
    gap = np.min(np.abs(proj[:, None] - np.asarray(estimates)), axis=1)
    misses = int(np.sum(~(gap <= tol)))
    return misses <= (allowed_violations(proj.size) if slack is None else slack)


def accept_mean(mu, A, estimates, tol, slack=None) -> bool:
    """True when the 1-D mean estimates agree with ``<a, mu>`` within ``tol``.

    ``estimates`` is ``(m, 2)``; ``tol`` is a scalar or per-direction array.
    Up to ``slack`` directions may disagree (default
    :func:`allowed_violations`); ``slack=0`` is the strict test.
    """
    proj = np.atleast_2d(A) @ np.asarray(mu, dtype=float)
    return _within(proj, estimates, tol, slack)


def accept_covariance(S, A, estimates, tol, slack=None) -> bool:
    """Covariance analogue of :func:`accept_mean` with ``a^T S a``."""
    return _within(_quad_features(A) @ _vech(S), estimates, tol, slack)


# ------------------------------------------------------ candidate search

def _weighted_lstsq(L, y, w, ridge_center, ridge):
    """Solve ``min sum w (L x - y)^2 + ridge |x - ridge_center|^2``."""
    sw = np.sqrt(w)
    k = L.shape[1]
    Lw = np.vstack([L * sw[:, None], math.sqrt(ridge) * np.eye(k)])
    yw = np.concatenate([y * sw, math.sqrt(ridge) * ridge_center])
    return np.linalg.lstsq(Lw, yw, rcond=None)[0]


def _assign_signs(L, w, diff, starts, ridge):
    """Alternate label signs and the half-difference fit from many starts at once.

    Returns ``(cost, half, signs)`` of the cheapest fixed point reached.
    """
    m = diff.size // 2
    k = L.shape[1]
    P = np.linalg.solve(L.T @ (L * w[:, None]) + ridge * np.eye(k), (L * w[:, None]).T)
    S = np.atleast_2d(np.asarray(starts, dtype=float))
    best_cost = np.full(S.shape[0], np.inf)
    best_half = np.zeros((S.shape[0], k))
    best_signs = S.copy()
    for _ in range(SIGN_ITERS):
        H = (np.concatenate([S, S], axis=1) * diff) @ P.T / 2
        pred = 2 * H @ L.T
        new = np.where(pred[:, :m] * (w[:m] * diff[:m]) + pred[:, m:] * (w[m:] * diff[m:]) >= 0, 1.0, -1.0)
        cost = np.sum(w * (np.concatenate([new, new], axis=1) * diff - pred) ** 2, axis=1)
        better = cost < best_cost
        best_cost[better] = cost[better]
        best_half[better] = H[better]
        best_signs[better] = new[better]
        if np.array_equal(new, S):
            break
        S = new
    i = int(np.argmin(best_cost))
    return best_cost[i], best_half[i], best_signs[i]


def _spectral_signs(L, w, diff, ridge):
    """Signs from the leading generalized eigenvector of ``sum_i b_i b_i^T``
    against the information matrix, ``b_i = L_i^T W_i diff_i``."""
    m = diff.size // 2
    k = L.shape[1]
    Q = L.T @ (L * w[:, None]) + ridge * np.eye(k)
    wd = w * diff
    Bv = L[:m] * wd[:m, None] + L[m:] * wd[m:, None]
    try:
        Li = np.linalg.inv(np.linalg.cholesky(Q))
        lead = Li.T @ np.linalg.eigh(Li @ (Bv.T @ Bv) @ Li.T)[1][:, -1]
    except np.linalg.LinAlgError:
        return np.ones(m)
    s = np.sign(Bv @ lead)
    return np.where(s == 0, 1.0, s)


@functools.lru_cache(maxsize=None)
def _sign_patterns(q: int):
    """All sign vectors of length ``q`` with a leading +1, one per row."""
    codes = np.arange(2 ** max(q - 1, 0))
    pats = np.ones((codes.size, q))
    for j in range(1, q):
        pats[:, j] = np.where((codes >> (j - 1)) & 1, -1.0, 1.0)
    pats.flags.writeable = False
    return pats


def _sign_gain(L, w, diff, ridge):
    """Matrix ``M`` with fit cost ``const - s^T M s`` for direction signs ``s``."""
    m = diff.size // 2
    k = L.shape[1]
    Lw = L * w[:, None]
    proj = Lw @ np.linalg.solve(L.T @ Lw + ridge * np.eye(k), Lw.T)
    full = proj * np.outer(diff, diff)
    return full[:m, :m] + full[:m, m:] + full[m:, :m] + full[m:, m:]


def _block_ascent(M, s, blocks):
    """Raise ``s^T M s`` by exhaustive search over each block in turn.

    ``blocks`` holds ``(index, patterns, pattern gains within the block)``.
    """
    s = s.copy()
    value = s @ M @ s
    for _ in range(ASCENT_SWEEPS):
        moved = False
        for blk, pats, gain in blocks:
            out = np.ones(s.size, dtype=bool)
            out[blk] = False
            cross = 2 * (pats @ (M[np.ix_(blk, out)] @ s[out]))
            k = int(np.argmax(gain + np.abs(cross)))
            new = s.copy()
            new[blk] = pats[k] * (1.0 if cross[k] >= 0 else -1.0)
            v = new @ M @ new
            if v > value * (1 + 1e-12) + 1e-300:
                s, value, moved = new, v, True
        if not moved:
            break
    return s, value


def _best_signs(L, w, diff, ridge, warm=None):
    """Near-global minimiser of the fit cost over per-direction signs.

    Every sign pattern of the directions with the largest gain is
    enumerated (up to the global flip); the best few, extended to the
    other directions, are improved by exhaustive search over blocks of
    directions and finally polished by alternation.  A ``warm`` sign
    vector replaces the enumeration.
    """
    m = diff.size // 2
    M = _sign_gain(L, w, diff, ridge)
    order = np.argsort(-np.diag(M), kind="stable")
    sub, rest = order[:ENUM_DIRECTIONS], order[ENUM_DIRECTIONS:]
    if warm is None:
        pats = _sign_patterns(sub.size)
        gain = np.sum((pats @ M[np.ix_(sub, sub)]) * pats, axis=1)
        top = pats[np.argsort(-gain, kind="stable")[:TOP_PATTERNS]]
        starts = np.empty((top.shape[0], m))
        starts[:, sub] = top
        if rest.size:
            ext = top @ M[np.ix_(sub, rest)]
            starts[:, rest] = np.where(ext >= 0, 1.0, -1.0)
        starts = np.vstack([starts, _spectral_signs(L, w, diff, ridge)])
    else:
        starts = np.vstack([warm, _spectral_signs(L, w, diff, ridge)])
    if rest.size:
        rng = np.random.default_rng(0)
        q = ENUM_DIRECTIONS
        index = [order[i: i + q] for i in range(0, m - q // 2, q // 2)]
        index += [rng.choice(m, size=q, replace=False) for _ in range(RANDOM_BLOCKS)]
        blocks = []
        for blk in index:
            bp = _sign_patterns(blk.size)
            blocks.append((blk, bp, np.sum((bp @ M[np.ix_(blk, blk)]) * bp, axis=1)))
        values = np.einsum("pi,ij,pj->p", starts, M, starts)
        keep = np.argsort(-values, kind="stable")[:ASCENT_STARTS]
        starts = np.vstack([_block_ascent(M, starts[i], blocks)[0] for i in keep])
    _, half, signs = _assign_signs(L, w, diff, starts, ridge)
    return half, signs


def label_consistent_pair(A, fits: DirectionFits, mu0, cov0, weight_hint=None):
    """Two parameter vectors explaining the 1-D estimates up to per-direction labels.

    The label-free sums ``mu1 + mu2`` (and variance sums) give the midpoint
    by weighted least squares.  The differences are known only up to a sign
    per direction; the half-difference comes from alternating sign
    assignment and refitting, keeping the cheapest of several starts.

    Returns ``(mu, cov, signs, p1, var)`` where ``mu`` is ``(2, D)`` and
    ``cov`` is ``(2, D, D)``; ``signs[i] = +1`` means the 1-D fit's second
    component belongs to output component 2.  ``var`` holds the 1-D
    variance estimates with the mean spread removed from unseparated fits,
    which report the total variance of their direction.

    ``weight_hint`` is a mixing weight known from elsewhere; it replaces
    the weight pooled over directions, oriented to agree with it.
    """
    A = np.atleast_2d(A)
    m, D = A.shape
    W = _quad_features(A)
    K = W.shape[1]
    L = np.zeros((2 * m, D + K))
    L[:m, :D] = A
    L[m:, D:] = W
    w = np.concatenate([1.0 / fits.mu_err ** 2, 1.0 / fits.var_err ** 2])
    w = np.where(np.isfinite(w), w, 0.0)
    ridge = 1e-9 * max(float(np.max(w, initial=0.0)), 1.0)
    total = np.concatenate([fits.mu.sum(axis=1), fits.var.sum(axis=1)])
    diff = np.concatenate([fits.mu[:, 1] - fits.mu[:, 0], fits.var[:, 1] - fits.var[:, 0]])
    center = np.concatenate([2 * np.asarray(mu0, dtype=float), 2 * _vech(cov0)])
    mid = _weighted_lstsq(L, total, w, center, ridge) / 2

    half, signs = _best_signs(L, w, diff, ridge)

    p1 = _aligned_weight(fits, signs)
    if weight_hint is not None:
        p1 = weight_hint if (weight_hint - 0.5) * (p1 - 0.5) >= 0 else 1 - weight_hint
    var = fits.var.copy()
    # unseparated and equal-means fits carry little gap information of their
    # own (the sixth-moment weight is noisy and biased under median of
    # means); with the pooled weight the gap follows from X4 alone, after
    # removing what the spread of the means contributes to X4 and to the
    # variance
    resplit = fits.used >= 1
    for rnd in range(RESPLIT_ROUNDS if np.any(resplit) else 0):
        q = np.clip(np.where(signs[resplit] > 0, p1, 1 - p1), 0.01, 0.99)
        pq = q * (1 - q)
        spread = A[resplit] @ (2 * half[:D])
        x2 = fits.x2[resplit] - pq * spread ** 2
        x4 = fits.x4[resplit] - pq * (1 - 6 * pq) * spread ** 4
        gap = np.sqrt(np.maximum(x4, 0.0) / (3 * pq))
        var[resplit, 0] = x2 - (1 - q) * gap
        var[resplit, 1] = x2 + q * gap
        total[m:] = var.sum(axis=1)
        diff[m:] = var[:, 1] - var[:, 0]
        mid = _weighted_lstsq(L, total, w, center, ridge) / 2
        half, signs = _best_signs(L, w, diff, ridge, warm=signs if rnd else None)
    theta = np.stack([mid - half, mid + half])
    mu = theta[:, :D]
    cov = np.stack([_unvech(t[D:], D) for t in theta])
    return mu, cov, signs, p1, var


def _nearest_psd(S, floor):
    vals, vecs = np.linalg.eigh((S + S.T) / 2)
    if vals.min() >= floor:
        return (S + S.T) / 2
    return (vecs * np.maximum(vals, floor)) @ vecs.T


# --------------------------------------------------------------- 4-D step

@dataclass
class SubsetFit:
    """Output of the low-dimensional learner on a coordinate subset."""

    coords: tuple
    p1: float
    mu: np.ndarray          # (2, D)
    cov: np.ndarray         # (2, D, D)
    sigma_sq: float
    m: int
    m_literal: int
    swapped_cov: bool = False
    notes: list = field(default_factory=list)

    def entry_mean(self, coord):
        k = self.coords.index(coord)
        return self.mu[:, k]

    def entry_cov(self, a, b):
        return self.cov[:, self.coords.index(a), self.coords.index(b)]


def _aligned_weight(fits: DirectionFits, signs):
    """Median over informative directions of the weight of output component 1."""
    p_first = np.where(signs > 0, fits.p1, 1 - fits.p1)
    informative = fits.used <= 1
    if not np.any(informative):
        return 0.5
    return float(np.median(p_first[informative]))


def fit_subset(src: ProjectionMoments, coords, eps: float, delta: float, rng,
               max_projections=None, weight_hint=None, center=None) -> SubsetFit:
    """Learner on the coordinates ``coords`` (at most four) of a shared sample.

    ``center`` is a coarse mean for the net; by default it comes from 1-D
    runs on the coordinates.
    """
    coords = tuple(sorted(coords))
    D = len(coords)
    if not 1 <= D <= 4:
        raise DimensionMismatch(f"subset learner handles 1 to 4 coordinates, got {D}")
    sigma_sq = float(VARIANCE_INFLATION * np.max(src.coordinate_variances(coords)))
    sigma = math.sqrt(sigma_sq)

    # coarse center from per-coordinate runs
    if center is None:
        center = fit_directions(src, None, coords, delta).mu[:, 0]
    mean_net = NetSpec(center, 2 * sigma, mean_net_spacing(eps, sigma, D))
    cov_net = NetSpec(np.zeros(D * (D + 1) // 2), sigma_sq, cov_net_spacing(eps, sigma_sq, D))
    m_literal = projection_count(mean_net.log_size + cov_net.log_size, delta)
    cap = PROJECTIONS_PER_DIM * D if max_projections is None else max_projections
    m = max(1, min(m_literal, cap))
    A = sample_truncated_directions(D, m, rng).directions
    fits = fit_directions(src, A, coords, delta / m)

    mu_tol = np.maximum(eps * sigma / 2, fits.mu_err)
    var_tol = np.maximum(eps ** 2 * sigma_sq / 2, fits.var_err)
    cov0 = np.diag(np.full(D, sigma_sq / VARIANCE_INFLATION))
    mu, cov, signs, p1, var_est = label_consistent_pair(A, fits, src.mean[list(coords)], cov0, weight_hint)
    fits = DirectionFits(fits.p1, fits.mu, var_est, fits.mu_err, fits.var_err, fits.used, fits.x2, fits.x4)

    mu = np.stack([mean_net.snap(v) for v in mu])
    cov = np.stack([_unvech(cov_net.snap(_vech(S)), D) for S in cov])
    accepted_mu = [accept_mean(v, A, fits.mu, mu_tol) for v in mu]
    accepted_cov = [accept_covariance(S, A, fits.var, var_tol) for S in cov]
    if not any(accepted_mu):
        raise RecoveryFailure(f"no candidate mean accepted on coordinates {coords}")
    if not any(accepted_cov):
        raise RecoveryFailure(f"no candidate covariance accepted on coordinates {coords}")
    notes = []
    if not all(accepted_mu):
        mu = mu[[accepted_mu.index(True)] * 2]
        notes.append("one mean candidate rejected; returning the accepted one twice")
    if not all(accepted_cov):
        cov = cov[[accepted_cov.index(True)] * 2]
        notes.append("one covariance candidate rejected; returning the accepted one twice")

    swapped = _should_swap_cov(A, fits, mu, cov, mu_tol, var_tol)
    if swapped:
        cov = cov[::-1].copy()
        notes.append("covariances swapped to agree with the means")
    floor = VAR_FLOOR * sigma_sq
    cov = np.stack([_nearest_psd(S, floor) for S in cov])
    return SubsetFit(coords, p1, mu, cov, sigma_sq, m, m_literal, swapped, notes)


def _violations(A, fits, mu, cov, mu_tol, var_tol):
    """Directions where no single labelling fits both means and covariances."""
    pm = A @ mu.T                                # (m, 2)
    pv = _quad_features(A) @ np.stack([_vech(S) for S in cov]).T
    ok = np.zeros(A.shape[0], dtype=bool)
    for perm in ((0, 1), (1, 0)):
        good = np.ones(A.shape[0], dtype=bool)
        for p in (0, 1):
            q = perm[p]
            good &= np.abs(pm[:, p] - fits.mu[:, q]) <= mu_tol
            good &= np.abs(pv[:, p] - fits.var[:, q]) <= var_tol
        ok |= good
    return int(np.sum(~ok))


def _should_swap_cov(A, fits, mu, cov, mu_tol, var_tol) -> bool:
    here = _violations(A, fits, mu, cov, mu_tol, var_tol)
    if here == 0:
        return False
    return _violations(A, fits, mu, cov[::-1], mu_tol, var_tol) < here


def inner_delta(delta: float, dims: int) -> float:
    """Failure probability handed to each 1-D run inside a subset fit."""
    return delta / (PROJECTIONS_PER_DIM * dims)


def recover_4d(samples, eps: float, delta: float, seed=None) -> MixtureD:
    """Learn a mixture in at most four dimensions.

    Raises
    ------
    RecoveryFailure
        If no candidate mean or covariance survives the direction checks.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or not 1 <= x.shape[1] <= 4:
        raise DimensionMismatch("recover_4d expects an n x D array with D <= 4")
    D = x.shape[1]
    d1 = inner_delta(delta, D)
    check_sample_size(x.shape[0], d1)
    src = ProjectionMoments(x, group_count(d1))
    fit = fit_subset(src, tuple(range(D)), eps, delta, np.random.default_rng(seed))
    return _to_mixture(fit.p1, fit.mu, fit.cov)


def _to_mixture(p1, mu, cov) -> MixtureD:
    p1 = min(max(float(p1), 1e-12), 1 - 1e-12)
    return MixtureD(p1, 1 - p1, mu[0], mu[1], cov[0], cov[1])


# --------------------------------------------------------------- d-D step

@dataclass
class ReductionReport:
    mean_anchor: int | None = None
    cov_anchor: tuple | None = None
    subsets_run: int = 0
    swapped_cov: bool = False
    notes: list = field(default_factory=list)


def _match(reference, candidates, floor):
    """Permutation sending reference labels to candidate labels.

    ``reference`` and ``candidates`` hold one value per component.  The
    permutation with the smaller total gap wins; it must bring both
    components within ``max(floor, half the reference gap)``.
    """
    tol = max(floor, abs(reference[1] - reference[0]) / 2)
    straight = abs(reference[0] - candidates[0]) + abs(reference[1] - candidates[1])
    crossed = abs(reference[0] - candidates[1]) + abs(reference[1] - candidates[0])
    perm = (0, 1) if straight <= crossed else (1, 0)
    for p in (0, 1):
        if abs(reference[p] - candidates[perm[p]]) > tol:
            raise MatchFailure(f"no component within {tol:.3g} of the anchor value {reference[p]:.6g}")
    return perm


def recover_d(samples, eps: float, delta: float, seed=None, report: ReductionReport | None = None) -> MixtureD:
    """Learn a mixture in any dimension from sub-problems of dimension <= 4.

    Raises
    ------
    MatchFailure
        If a sub-problem's estimates cannot be matched to the anchor.
    RecoveryFailure
        If a sub-problem fails.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if d <= 4:
        return recover_4d(x, eps, delta, seed)
    rep = report if report is not None else ReductionReport()
    rng = np.random.default_rng(seed)
    sub_delta = delta / (10 * d * d)
    d1 = inner_delta(sub_delta, 4)
    check_sample_size(n, d1)
    src = ProjectionMoments(x, group_count(d1))
    sigma_sq = float(VARIANCE_INFLATION * np.max(src.coordinate_variances(tuple(range(d)))))
    sigma = math.sqrt(sigma_sq)
    inner_eps = eps / INNER_EPS_DIV

    coord = fit_directions(src, None, tuple(range(d)), sub_delta)
    xi = coord.mu                        # (d, 2)
    xi_var = coord.var
    runs = {}

    # the mixing weight is shared by every sub-problem; a mean-separated
    # coordinate pins it far better than variance-only directions do
    separated = np.nonzero(coord.used == 0)[0]
    hint = None
    if separated.size:
        best = separated[np.argmax(np.abs(coord.mu[separated, 1] - coord.mu[separated, 0])
                                   / np.sqrt(coord.var[separated].max(axis=1)))]
        hint = float(coord.p1[best])

    # one run per coordinate set: entries that share a set reuse its fit
    def subset_fit(*coords):
        key = tuple(sorted(set(coords)))
        if key not in runs:
            runs[key] = fit_subset(src, key, inner_eps, sub_delta, rng, weight_hint=hint,
                                   center=xi[list(key), 0])
            rep.subsets_run += 1
        return runs[key]

    # means
    mu = np.zeros((2, d))
    p1 = 0.5
    gaps = np.abs(xi[:, 0] - xi[:, 1])
    if np.all(gaps <= eps * sigma / 4):
        mu[:] = xi[:, 0]
        anchor = None
    else:
        anchor = int(np.argmax(gaps > eps * sigma / 4))
        rep.mean_anchor = anchor
        mu[:, anchor] = xi[anchor]
        p1 = float(coord.p1[anchor])
        for j in range(d):
            if j == anchor:
                continue
            fit = subset_fit(anchor, j)
            perm = _match(xi[anchor], fit.entry_mean(anchor), eps * sigma / 10)
            vals = fit.entry_mean(j)
            mu[:, j] = vals[list(perm)]
    # covariances
    xi_cov = np.zeros((d, d, 2))
    # diagonal entries carry the labels of the coordinate runs
    for i in range(d):
        xi_cov[i, i] = xi_var[i]
    for i in range(d):
        for j in range(i + 1, d):
            xi_cov[i, j] = xi_cov[j, i] = subset_fit(i, j).entry_cov(i, j)
    cov = np.zeros((2, d, d))
    iu = [(i, j) for i in range(d) for j in range(i, d)]
    cgaps = {ij: abs(xi_cov[ij][0] - xi_cov[ij][1]) for ij in iu}
    # variance splits read off fourth moments carry noise of order n**-1/4,
    # well above the nominal threshold at practical sample sizes
    cov_gate = max(eps ** 2 * sigma_sq / 4, COV_GAP_NOISE * sigma_sq * n ** -0.25)
    cov_anchor = next((ij for ij in iu if cgaps[ij] > cov_gate), None)
    if cov_anchor is None:
        for i, j in iu:
            cov[:, i, j] = cov[:, j, i] = xi_cov[i, j, 0]
    else:
        rep.cov_anchor = cov_anchor
        a, b = cov_anchor
        ref = xi_cov[a, b]
        cov[:, a, b] = cov[:, b, a] = ref
        if anchor is None:
            if a == b:
                p1 = float(coord.p1[a])
            else:
                p1 = subset_fit(a, b).p1
        for k, l in iu:
            if (k, l) == cov_anchor:
                continue
            fit = subset_fit(a, b, k, l)
            perm = _match(ref, fit.entry_cov(a, b), eps ** 2 * sigma_sq / 10)
            vals = fit.entry_cov(k, l)
            cov[:, k, l] = cov[:, l, k] = vals[list(perm)]
        if anchor is not None:
            rep.swapped_cov = _joint_matching(subset_fit(a, b, anchor), cov_anchor, anchor, mu, cov)
            if rep.swapped_cov:
                cov = cov[::-1].copy()
    floor = VAR_FLOOR * sigma_sq
    fixed = np.stack([_nearest_psd(S, floor) for S in cov])
    if not np.allclose(fixed, cov):
        rep.notes.append("assembled covariance repaired to be positive definite")
    return _to_mixture(p1, mu, fixed)


def _joint_matching(fit: SubsetFit, cov_anchor, mean_anchor, mu, cov) -> bool:
    """True when the covariance labels disagree with the mean labels.

    ``fit`` is a run on a coordinate set holding both anchors.
    """
    a, b = cov_anchor
    sig = fit.entry_cov(a, b)
    nu = fit.entry_mean(mean_anchor)
    by_cov = abs(cov[0, a, b] - sig[0]) < abs(cov[0, a, b] - sig[1])
    by_mean = abs(mu[0, mean_anchor] - nu[0]) < abs(mu[0, mean_anchor] - nu[1])
    return by_cov != by_mean
