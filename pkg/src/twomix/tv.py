"""Learning a two-Gaussian mixture in total variation.

The overall covariance is estimated and used to whiten the data.  A
parameter fit on the whitened samples comes first.  If both fitted
covariances stay well conditioned, their un-whitened parameters are
returned.  Otherwise one component is nearly flat along some direction
``v``.  The samples are then split by their distance to that component
along ``v``, empirical Gaussians are fitted to each side, and the round is
repeated on fresh blocks.  A median vote across rounds picks the answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TooFewSamples
from .mixture import MixtureD, VAR_FLOOR, tv_gaussians_upper_bound
from .moments import lower_median
from .reduction import _nearest_psd, recover_d

EPS_PRIME_CONST = 0.1
CLUSTER_CONST = 3.0          # K_c in the split threshold
ROUNDS_PER_LOG = 10
COV_SAMPLES_PER_LOG = 100    # whitening block: this many times d^2 ln(1/delta)
BLOCK_CONST = 100            # clustering block: this many times d^2 / eps^2
EIG_CLAMP = 1e-12


@dataclass(frozen=True)
class TVConfig:
    eps: float = 0.3
    delta: float = 0.05
    isotropic: bool = False

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    def eps_prime(self, d: int) -> float:
        """Accuracy requested from the parameter fit."""
        log_term = math.log(max(d / self.eps, math.e))
        if self.isotropic:
            return EPS_PRIME_CONST * self.eps / math.sqrt(d * log_term)
        return EPS_PRIME_CONST * self.eps ** 3 / (d ** 2.5 * math.sqrt(log_term))

    def branch_threshold(self, d: int) -> float:
        """Smallest whitened eigenvalue for which parameters are trusted."""
        return 2.0 * self.eps_prime(d) ** 2 * d / self.eps ** 2

    def split_width(self, d: int) -> float:
        log_term = math.log(max(d / self.eps, math.e))
        return CLUSTER_CONST * self.eps_prime(d) * math.sqrt(d * log_term) / self.eps

    def rounds(self) -> int:
        return math.ceil(ROUNDS_PER_LOG * math.log(1.0 / self.delta))


@dataclass
class EmpiricalGaussian:
    mean: np.ndarray
    cov: np.ndarray
    n: int
    singular: bool


def empirical_gaussian(samples) -> EmpiricalGaussian:
    """Sample mean and unbiased sample covariance.

    Raises
    ------
    TooFewSamples
        If there are no more samples than dimensions.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n <= d:
        raise TooFewSamples(f"need more than {d} samples for a {d}-dimensional covariance, got {n}")
    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.T @ centred / (n - 1)
    scale = max(float(np.max(np.abs(cov))), np.finfo(float).tiny)
    singular = bool(np.linalg.eigvalsh(cov)[0] <= 1e-12 * scale)
    return EmpiricalGaussian(mean, cov, n, singular)


def gaussian_distance(lam):
    """Distance ``(||dmu|| + ||dSigma||_F) / lam`` with a fixed normaliser."""
    def metric(a, b):
        return (float(np.linalg.norm(a[0] - b[0])) + float(np.linalg.norm(a[1] - b[1]))) / lam
    return metric


def median_select(candidates, metric=None):
    """Candidate with the smallest median distance to all candidates.

    ``candidates`` holds ``(mean, cov)`` pairs.  When ``metric`` is None the
    bound from :func:`tv_gaussians_upper_bound` is used, normalised by the
    first candidate's smallest eigenvalue so that it stays symmetric.
    Returns ``(index, candidate)``.
    """
    cands = list(candidates)
    if not cands:
        raise ValueError("median_select needs at least one candidate")
    if metric is None:
        lam_sq = float(np.linalg.eigvalsh(np.atleast_2d(cands[0][1]))[0])
        metric = gaussian_distance(math.sqrt(max(lam_sq, EIG_CLAMP)))
    k = len(cands)
    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            dist[i, j] = dist[j, i] = metric(cands[i], cands[j])
    scores = lower_median(dist, axis=1)
    best = int(np.argmin(scores))
    return best, cands[best]


def symmetric_sqrt(S):
    """``(A, A^-1)`` with ``A`` symmetric and ``A @ A = S``."""
    w, V = np.linalg.eigh(S)
    w = np.maximum(w, EIG_CLAMP)
    r = np.sqrt(w)
    return (V * r) @ V.T, (V / r) @ V.T


@dataclass
class ClusterRound:
    start: int
    stop: int
    inside: np.ndarray       # True where the sample was assigned to component 1
    skipped: bool = False


@dataclass
class TVReport:
    branch: str = ""
    eps_prime: float = 0.0
    lam_sq: float = 0.0
    threshold: float = 0.0
    split_width: float = 0.0
    direction: np.ndarray | None = None
    rounds: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "branch": self.branch,
            "eps_prime": self.eps_prime,
            "lambda_sq": self.lam_sq,
            "threshold": self.threshold,
            "split_width": self.split_width,
            "rounds": len(self.rounds),
            "skipped_rounds": sum(r.skipped for r in self.rounds),
            "notes": list(self.notes),
        }


def _block_layout(n, d, cfg: TVConfig):
    n_cov = math.ceil(COV_SAMPLES_PER_LOG * d * d * math.log(1.0 / cfg.delta))
    block = math.ceil(BLOCK_CONST * d * d / cfg.eps ** 2)
    T = cfg.rounds()
    n_fit = n - n_cov - T * block
    if n_fit < n // 4:
        raise TooFewSamples(
            f"{n} samples leave too few for the parameter fit after whitening "
            f"({n_cov}) and {T} clustering blocks of {block}")
    return n_cov, n_fit, block, T


def recover_tv(samples, cfg: TVConfig | None = None, seed=None, report: TVReport | None = None) -> MixtureD:
    """Estimate a mixture whose components are close in total variation.

    The sample is consumed in order: a whitening block, the parameter-fit
    block, then one fresh block per clustering round.
    """
    cfg = cfg or TVConfig()
    rep = report if report is not None else TVReport()
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    n_cov, n_fit, block, T = _block_layout(n, d, cfg)

    whiten = empirical_gaussian(x[:n_cov])
    A, A_inv = symmetric_sqrt(whiten.cov)
    centre = whiten.mean

    def to_white(v):
        return (v - centre) @ A_inv

    eps_p = cfg.eps_prime(d)
    rep.eps_prime = eps_p
    fit = recover_d(to_white(x[n_cov:n_cov + n_fit]), eps_p, cfg.delta, seed=seed)
    covs = (fit.Sigma1, fit.Sigma2)
    eig = [np.linalg.eigh(S) for S in covs]
    flat = int(np.argmin([w[0] for w, _ in eig]))
    rep.lam_sq = float(eig[flat][0][0])
    rep.threshold = cfg.branch_threshold(d)

    if rep.lam_sq > rep.threshold:
        rep.branch = "parameters"
        return MixtureD(fit.p1, fit.p2, centre + A @ fit.mu1, centre + A @ fit.mu2,
                        A @ fit.Sigma1 @ A, A @ fit.Sigma2 @ A)

    rep.branch = "clustering"
    v = eig[flat][1][:, 0]
    rep.direction = v
    mu_flat = (fit.mu1, fit.mu2)[flat]
    width = cfg.split_width(d)
    rep.split_width = width
    first = n_cov + n_fit
    pairs, weights = [], []
    for t in range(T):
        lo, hi = first + t * block, first + (t + 1) * block
        xb = to_white(x[lo:hi])
        inside = np.abs((xb - mu_flat) @ v) <= width
        rnd = ClusterRound(lo, hi, inside)
        rep.rounds.append(rnd)
        if min(inside.sum(), (~inside).sum()) <= d:
            rnd.skipped = True
            continue
        g_in = empirical_gaussian(xb[inside])
        g_out = empirical_gaussian(xb[~inside])
        pairs.append(((g_in.mean, g_in.cov), (g_out.mean, g_out.cov)))
        weights.append(inside.mean())
    if not pairs:
        rep.notes.append("every clustering round left one side empty; returning the parameter fit")
        return MixtureD(fit.p1, fit.p2, centre + A @ fit.mu1, centre + A @ fit.mu2,
                        A @ fit.Sigma1 @ A, A @ fit.Sigma2 @ A)
    _, g1 = median_select([p[0] for p in pairs])
    _, g2 = median_select([p[1] for p in pairs])
    p_in = float(lower_median(np.asarray(weights)))
    p_in = min(max(p_in, 1e-12), 1 - 1e-12)
    out = []
    for mean, cov in (g1, g2):
        S = A @ cov @ A
        S = _nearest_psd(0.5 * (S + S.T), VAR_FLOOR * max(float(np.max(np.abs(S))), 1.0))
        out.append((centre + A @ mean, S))
    return MixtureD(p_in, 1 - p_in, out[0][0], out[1][0], out[0][1], out[1][1])


def componentwise_tv_bound(truth: MixtureD, est: MixtureD) -> float:
    """Largest per-component TV upper bound, over the better labelling."""
    def worst(g: MixtureD):
        return max(tv_gaussians_upper_bound(truth.mu1, truth.Sigma1, g.mu1, g.Sigma1),
                   tv_gaussians_upper_bound(truth.mu2, truth.Sigma2, g.mu2, g.Sigma2))
    return min(worst(est), worst(est.swapped()))
