"""Two-component Gaussian mixtures: types, exact moments, sampling, distances.

One-dimensional mixtures carry variances (not standard deviations).
Multivariate mixtures carry full covariance matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateMeans,
    DimensionMismatch,
    InvalidMixture,
    NonZeroMean,
    SingularCovariance,
)
from .quadrature import adaptive_simpson

PROB_TOL = 1e-12
SYMMETRY_TOL = 1e-10
MEAN_ZERO_TOL = 1e-9
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class Gaussian1D:
    mu: float
    var: float

    def __post_init__(self):
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "var", float(self.var))
        if not (self.var > 0 and math.isfinite(self.var)):
            raise InvalidMixture(f"var must be positive and finite, got {self.var}")
        if not math.isfinite(self.mu):
            raise InvalidMixture(f"mu must be finite, got {self.mu}")

    def pdf(self, x):
        return np.exp(-0.5 * (x - self.mu) ** 2 / self.var) / math.sqrt(2 * math.pi * self.var)


@dataclass(frozen=True)
class Mixture1D:
    p1: float
    p2: float
    g1: Gaussian1D
    g2: Gaussian1D

    def __post_init__(self):
        object.__setattr__(self, "p1", float(self.p1))
        object.__setattr__(self, "p2", float(self.p2))
        if abs(self.p1 + self.p2 - 1.0) > PROB_TOL:
            raise InvalidMixture(f"p1 + p2 = {self.p1 + self.p2}, expected 1")
        if not (0.0 < self.p1 < 1.0 and 0.0 < self.p2 < 1.0):
            raise InvalidMixture(f"probabilities must lie in (0, 1), got {self.p1}, {self.p2}")

    @classmethod
    def from_params(cls, p1, mu1, var1, mu2, var2) -> "Mixture1D":
        return cls(float(p1), 1.0 - float(p1), Gaussian1D(float(mu1), float(var1)),
                   Gaussian1D(float(mu2), float(var2)))

    @property
    def mean(self) -> float:
        return self.p1 * self.g1.mu + self.p2 * self.g2.mu

    def swapped(self) -> "Mixture1D":
        return Mixture1D(self.p2, self.p1, self.g2, self.g1)

    def shifted(self, c: float) -> "Mixture1D":
        return Mixture1D(self.p1, self.p2, Gaussian1D(self.g1.mu + c, self.g1.var),
                         Gaussian1D(self.g2.mu + c, self.g2.var))

    def scaled(self, s: float) -> "Mixture1D":
        return Mixture1D(self.p1, self.p2, Gaussian1D(s * self.g1.mu, s * s * self.g1.var),
                         Gaussian1D(s * self.g2.mu, s * s * self.g2.var))

    def pdf(self, x):
        return self.p1 * self.g1.pdf(x) + self.p2 * self.g2.pdf(x)

    def to_d(self) -> "MixtureD":
        return MixtureD(self.p1, self.p2, np.array([self.g1.mu]), np.array([self.g2.mu]),
                        np.array([[self.g1.var]]), np.array([[self.g2.var]]))


@dataclass(frozen=True, eq=False)
class MixtureD:
    p1: float
    p2: float
    mu1: np.ndarray
    mu2: np.ndarray
    Sigma1: np.ndarray
    Sigma2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p1", float(self.p1))
        object.__setattr__(self, "p2", float(self.p2))
        if abs(self.p1 + self.p2 - 1.0) > PROB_TOL:
            raise InvalidMixture(f"p1 + p2 = {self.p1 + self.p2}, expected 1")
        if not (0.0 < self.p1 < 1.0):
            raise InvalidMixture(f"probabilities must lie in (0, 1), got {self.p1}, {self.p2}")
        for name in ("mu1", "mu2", "Sigma1", "Sigma2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        d = self.mu1.shape[0]
        if self.mu1.shape != (d,) or self.mu2.shape != (d,):
            raise DimensionMismatch("mean vectors must have equal length")
        for name in ("Sigma1", "Sigma2"):
            S = getattr(self, name)
            if S.shape != (d, d):
                raise DimensionMismatch(f"{name} must be {d}x{d}, got {S.shape}")
            scale = max(1.0, float(np.max(np.abs(S))))
            if np.max(np.abs(S - S.T)) > SYMMETRY_TOL * scale:
                raise InvalidMixture(f"{name} is not symmetric")
            if np.linalg.eigvalsh(S)[0] <= 0:
                raise InvalidMixture(f"{name} is not positive definite")

    @property
    def d(self) -> int:
        return self.mu1.shape[0]

    def swapped(self) -> "MixtureD":
        return MixtureD(self.p2, self.p1, self.mu2, self.mu1, self.Sigma2, self.Sigma1)

    def marginal(self, coords) -> "MixtureD":
        idx = np.asarray(coords)
        return MixtureD(self.p1, self.p2, self.mu1[idx], self.mu2[idx],
                        self.Sigma1[np.ix_(idx, idx)], self.Sigma2[np.ix_(idx, idx)])


@dataclass(frozen=True)
class Reparam:
    """Noise-invariant coordinates of a mean-zero mixture.

    ``gamma`` is meaningless (stored as 0) when the two means coincide;
    ``gamma_defined`` records that.
    """

    alpha: float
    beta: float
    gamma: float
    gamma_defined: bool = True


@dataclass(frozen=True)
class ExcessMoments:
    x1: float
    x2: float
    x3: float
    x4: float
    x5: float
    x6: float

    def as_tuple(self):
        return (self.x1, self.x2, self.x3, self.x4, self.x5, self.x6)


class ProbsAndVars(NamedTuple):
    p1: float
    p2: float
    var1: float
    var2: float
    clamped: bool


def variance_1d(m: Mixture1D) -> float:
    dmu = m.g1.mu - m.g2.mu
    return m.p1 * m.p2 * dmu * dmu + m.p1 * m.g1.var + m.p2 * m.g2.var


def variance_d(m: MixtureD) -> float:
    """Scale proxy using max-abs norms on the mean gap and both covariances."""
    gap = float(np.max(np.abs(m.mu1 - m.mu2)))
    return (m.p1 * m.p2 * gap * gap + m.p1 * float(np.max(np.abs(m.Sigma1)))
            + m.p2 * float(np.max(np.abs(m.Sigma2))))


def reparameterize(m: Mixture1D) -> Reparam:
    """Map a mean-zero mixture to ``(alpha, beta, gamma)``.

    Components are reordered internally so the first one has the smaller
    mean, which makes ``alpha = -mu1 * mu2`` nonnegative.
    """
    if abs(m.mean) > MEAN_ZERO_TOL * math.sqrt(variance_1d(m)):
        raise NonZeroMean(f"mixture mean is {m.mean}, expected 0")
    if m.g1.mu > m.g2.mu:
        m = m.swapped()
    mu1, mu2 = m.g1.mu, m.g2.mu
    alpha = max(0.0, -mu1 * mu2)
    beta = mu1 + mu2
    if mu1 == mu2:
        return Reparam(alpha, beta, 0.0, gamma_defined=False)
    return Reparam(alpha, beta, (m.g2.var - m.g1.var) / (mu2 - mu1))


def excess_from_reparam(r: Reparam):
    a, b, g = r.alpha, r.beta, r.gamma
    x3 = a * b + 3 * a * g
    x4 = -2 * a * a + a * b * b + 6 * a * b * g + 3 * a * g * g
    x5 = a * (b ** 3 - 8 * a * b + 10 * b * b * g + 15 * g * g * b - 20 * a * g)
    x6 = a * (16 * a * a - 12 * a * b * b - 60 * a * b * g + b ** 4 + 15 * b ** 3 * g
              + 45 * b * b * g * g + 15 * b * g ** 3)
    return x3, x4, x5, x6


def gaussian_raw_moments(mu: float, var: float, order: int):
    """E[x^k] for k = 0..order of N(mu, var)."""
    # E[x^k] = mu E[x^{k-1}] + (k-1) var E[x^{k-2}]
    out = [1.0, mu]
    for k in range(2, order + 1):
        out.append(mu * out[k - 1] + (k - 1) * var * out[k - 2])
    return out[: order + 1]


def raw_moments(m: Mixture1D, order: int = 6):
    """Uncentered moments E[x^k], k = 1..order (at most 6)."""
    if not 1 <= order <= 6:
        raise ValueError("order must be between 1 and 6")
    a = gaussian_raw_moments(m.g1.mu, m.g1.var, order)
    b = gaussian_raw_moments(m.g2.mu, m.g2.var, order)
    return tuple(m.p1 * a[k] + m.p2 * b[k] for k in range(1, order + 1))


def excess_from_raw(m1, m2, m3, m4, m5, m6) -> ExcessMoments:
    """Excess moments of a mean-zero distribution from its raw moments.

    ``m1`` is accepted for signature symmetry and ignored.
    """
    return ExcessMoments(
        x1=0.0,
        x2=m2,
        x3=m3,
        x4=m4 - 3 * m2 * m2,
        x5=m5 - 10 * m3 * m2,
        x6=m6 - 15 * m4 * m2 + 30 * m2 ** 3,
    )


def exact_excess_moments(m: Mixture1D) -> ExcessMoments:
    """Excess moments of ``m`` after centering it at its own mean."""
    mu = m.mean
    c = m.shifted(-mu)
    e = excess_from_raw(*raw_moments(c, 6))
    return ExcessMoments(mu, e.x2, e.x3, e.x4, e.x5, e.x6)


def recover_probs_and_vars(mu1, mu2, gamma, sigma_sq) -> ProbsAndVars:
    """Invert means, ``gamma`` and total variance into weights and variances.

    Variances that come out below ``VAR_FLOOR * sigma_sq`` are clamped there
    and ``clamped`` is set.
    """
    if mu1 == mu2:
        raise DegenerateMeans("component means coincide")
    span = mu2 - mu1
    p1 = mu2 / span
    p2 = -mu1 / span
    var1 = sigma_sq - (p1 * mu1 * mu1 + p2 * mu2 * mu2 - mu1 * gamma)
    var2 = var1 + span * gamma
    floor = VAR_FLOOR * sigma_sq
    clamped = var1 < floor or var2 < floor
    return ProbsAndVars(p1, p2, max(var1, floor), max(var2, floor), clamped)


def sample(m, n: int, seed) -> np.ndarray:
    """Draw ``n`` samples; shape ``(n,)`` for 1-D mixtures, ``(n, d)`` otherwise."""
    return sample_labeled(m, n, seed)[0]


def sample_labeled(m, n: int, seed):
    """Samples together with the component index (0 or 1) of each draw."""
    rng = np.random.default_rng(seed)
    second = rng.random(n) < m.p2
    labels = second.astype(np.int8)
    if isinstance(m, Mixture1D):
        z = rng.standard_normal(n)
        mu = np.where(second, m.g2.mu, m.g1.mu)
        sd = np.where(second, math.sqrt(m.g2.var), math.sqrt(m.g1.var))
        return mu + sd * z, labels
    z = rng.standard_normal((n, m.d))
    out = np.empty_like(z)
    for mask, mu, S in ((~second, m.mu1, m.Sigma1), (second, m.mu2, m.Sigma2)):
        L = np.linalg.cholesky(S)
        out[mask] = mu + z[mask] @ L.T
    return out, labels


def _as_d(m) -> MixtureD:
    return m.to_d() if isinstance(m, Mixture1D) else m


def param_distance(f, fhat) -> float:
    """Smallest eps such that ``fhat`` is eps-close to ``f`` in parameters.

    Mean errors are compared squared and covariance errors linearly, both
    against the scale ``variance_d(f)``, minimised over label permutations.
    """
    f, fhat = _as_d(f), _as_d(fhat)
    if f.d != fhat.d:
        raise DimensionMismatch(f"dimensions differ: {f.d} vs {fhat.d}")
    scale = variance_d(f)

    def worst(g):
        errs = [
            float(np.max(np.abs(f.mu1 - g.mu1))) ** 2,
            float(np.max(np.abs(f.mu2 - g.mu2))) ** 2,
            float(np.max(np.abs(f.Sigma1 - g.Sigma1))),
            float(np.max(np.abs(f.Sigma2 - g.Sigma2))),
        ]
        return max(errs)

    return math.sqrt(min(worst(fhat), worst(fhat.swapped())) / scale)


def tv_gaussians_1d(g: Gaussian1D, g2: Gaussian1D) -> float:
    """Total variation distance between two normals by piecewise quadrature.

    The densities cross at most twice; integrating between crossings keeps
    the integrand smooth.
    """
    if g == g2:
        return 0.0
    s_max = math.sqrt(max(g.var, g2.var))
    lo = min(g.mu, g2.mu) - 14 * s_max
    hi = max(g.mu, g2.mu) + 14 * s_max
    cuts = [lo] + [c for c in _density_crossings(g, g2) if lo < c < hi] + [hi]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = adaptive_simpson(lambda x: np.abs(g.pdf(x) - g2.pdf(x)), a, b, tol=1e-12)
        total += val
    return min(1.0, max(0.0, 0.5 * total))


def _density_crossings(g: Gaussian1D, g2: Gaussian1D):
    # log-density difference is the quadratic a x^2 + b x + c
    a = 0.5 / g2.var - 0.5 / g.var
    b = g.mu / g.var - g2.mu / g2.var
    c = (0.5 * g2.mu ** 2 / g2.var - 0.5 * g.mu ** 2 / g.var
         + 0.5 * math.log(g2.var / g.var))
    if a == 0.0:
        return [] if b == 0.0 else [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    r = math.sqrt(disc)
    return sorted([(-b - r) / (2 * a), (-b + r) / (2 * a)])


def tv_gaussians_upper_bound(muA, SigmaA, muB, SigmaB) -> float:
    """Upper-bound surrogate ``(||muA-muB||_2 + ||SigmaA-SigmaB||_F) / lambda``.

    ``lambda**2`` is the smallest eigenvalue of ``SigmaA``.
    """
    SigmaA = np.atleast_2d(np.asarray(SigmaA, dtype=float))
    SigmaB = np.atleast_2d(np.asarray(SigmaB, dtype=float))
    lam_sq = float(np.linalg.eigvalsh(SigmaA)[0])
    if lam_sq <= 0:
        raise SingularCovariance(f"smallest eigenvalue {lam_sq} is not positive")
    dmu = np.atleast_1d(np.asarray(muA, dtype=float) - np.asarray(muB, dtype=float))
    return (float(np.linalg.norm(dmu)) + float(np.linalg.norm(SigmaA - SigmaB))) / math.sqrt(lam_sq)


# ---------------------------------------------------------------- JSON io

def mixture_to_json(m) -> dict:
    if isinstance(m, Mixture1D):
        comps = [{"p": m.p1, "mu": m.g1.mu, "sigma": m.g1.var},
                 {"p": m.p2, "mu": m.g2.mu, "sigma": m.g2.var}]
    else:
        comps = [{"p": m.p1, "mu": m.mu1.tolist(), "sigma": m.Sigma1.tolist()},
                 {"p": m.p2, "mu": m.mu2.tolist(), "sigma": m.Sigma2.tolist()}]
    return {"components": comps}


def mixture_from_json(obj):
    """Parse the ``{"components": [...]}`` schema; scalar mu means 1-D."""
    if not isinstance(obj, dict) or "components" not in obj:
        raise InvalidMixture("missing field 'components'")
    comps = obj["components"]
    if not isinstance(comps, list) or len(comps) != 2:
        raise InvalidMixture("field 'components' must be a list of two entries")
    parsed = []
    for i, c in enumerate(comps):
        if not isinstance(c, dict):
            raise InvalidMixture(f"components[{i}] must be an object")
        for key in ("p", "mu", "sigma"):
            if key not in c:
                raise InvalidMixture(f"missing field 'components[{i}].{key}'")
        try:
            p = float(c["p"])
        except (TypeError, ValueError):
            raise InvalidMixture(f"field 'components[{i}].p' is not a number") from None
        parsed.append((p, c["mu"], c["sigma"]))
    scalar = [isinstance(mu, (int, float)) for _, mu, _ in parsed]
    try:
        if all(scalar):
            (p1, mu1, v1), (p2, mu2, v2) = parsed
            return Mixture1D(p1, p2, Gaussian1D(float(mu1), float(v1)),
                             Gaussian1D(float(mu2), float(v2)))
        if any(scalar):
            raise InvalidMixture("field 'components[].mu' mixes scalars and vectors")
        (p1, mu1, S1), (p2, mu2, S2) = parsed
        return MixtureD(p1, p2, np.array(mu1, dtype=float), np.array(mu2, dtype=float),
                        np.array(S1, dtype=float), np.array(S2, dtype=float))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidMixture):
            raise
        raise InvalidMixture(f"field 'components[].sigma' or 'mu' is malformed: {exc}") from None
