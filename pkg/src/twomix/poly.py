"""Dense univariate polynomials and bracketing real-root search.

Coefficients are stored in ascending order.  Batched helpers operate on
2-D arrays of shape ``(batch, degree + 1)`` so that many small polynomial
problems can be solved in one vectorised pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRID_POINTS = 4096
DEDUP_REL = 1e-9
TOUCH_REL = 1e-12
BISECT_ITERS = 80


@dataclass(frozen=True, eq=False)
class Poly:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        nz = np.nonzero(c)[0]
        c = c[: nz[-1] + 1] if nz.size else c[:1] * 0.0
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return -1 if self.is_zero() else len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __call__(self, x):
        return horner(self.coeffs, x)

    def __add__(self, other: "Poly") -> "Poly":
        n = max(len(self.coeffs), len(other.coeffs))
        return Poly(np.pad(self.coeffs, (0, n - len(self.coeffs)))
                    + np.pad(other.coeffs, (0, n - len(other.coeffs))))

    def __sub__(self, other: "Poly") -> "Poly":
        return self + other.scale(-1.0)

    def __mul__(self, other: "Poly") -> "Poly":
        return Poly(np.convolve(self.coeffs, other.coeffs))

    def scale(self, s: float) -> "Poly":
        return Poly(s * self.coeffs)

    def deriv(self) -> "Poly":
        if len(self.coeffs) == 1:
            return Poly([0.0])
        return Poly(self.coeffs[1:] * np.arange(1, len(self.coeffs)))

    def norm1(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))


def horner(coeffs, x):
    """Evaluate ascending ``coeffs`` at ``x`` (broadcasting over ``x``)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x) + coeffs[-1]
    for c in coeffs[-2::-1]:
        out = out * x + c
    return out


def horner_batch(C, X):
    """Row-wise evaluation: ``C`` is ``(B, k)``, ``X`` is ``(B, ...)``."""
    extra = (1,) * (X.ndim - 1)
    out = np.broadcast_to(C[:, -1].reshape(-1, *extra), X.shape).copy()
    for j in range(C.shape[1] - 2, -1, -1):
        out *= X
        out += C[:, j].reshape(-1, *extra)
    return out


def pmul_batch(A, B):
    """Row-wise polynomial product of ``(n, ka)`` and ``(n, kb)`` arrays."""
    out = np.zeros((A.shape[0], A.shape[1] + B.shape[1] - 1))
    for i in range(A.shape[1]):
        out[:, i: i + B.shape[1]] += A[:, i: i + 1] * B
    return out


def padd_batch(*terms):
    k = max(t.shape[1] for t in terms)
    out = np.zeros((terms[0].shape[0], k))
    for t in terms:
        out[:, : t.shape[1]] += t
    return out


def pderiv_batch(C):
    return C[:, 1:] * np.arange(1, C.shape[1])


def bracket_roots(f, lo, hi, grid=GRID_POINTS, dfun=None):
    """Roots of row-wise functions by sign changes on a uniform grid.

    Parameters
    ----------
    f : callable
        Maps a ``(B, m)`` array of abscissae to values, row ``b`` belonging
        to problem ``b``.
    lo, hi : arrays of shape ``(B,)``
    dfun : callable, optional
        Derivative of ``f`` in the same calling convention; when given, each
        bisected root gets one guarded Newton step.

    Returns
    -------
    list of sorted 1-D arrays, one per problem, deduplicated at
    ``DEDUP_REL * (hi - lo)``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    t = np.linspace(0.0, 1.0, grid)
    X = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    F = f(X)
    s = np.sign(F)

    exact = s == 0
    change = (s[:, :-1] * s[:, 1:]) < 0
    rows, cols = np.nonzero(change)
    a = X[rows, cols]
    b = X[rows, cols + 1]
    fa = F[rows, cols]
    for _ in range(BISECT_ITERS):
        if a.size == 0 or np.all(b - a <= 4 * np.spacing(np.maximum(np.abs(a), np.abs(b)))):
            break
        m = 0.5 * (a + b)
        fm = _eval_rows(f, rows, m, lo.size)
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, m, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, m)
    root = 0.5 * (a + b)
    if dfun is not None and root.size:
        fr = _eval_rows(f, rows, root, lo.size)
        dr = _eval_rows(dfun, rows, root, lo.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dr != 0, root - fr / dr, root)
        inside = (step >= a) & (step <= b)
        root = np.where(inside, step, root)

    er, ec = np.nonzero(exact)
    all_rows = np.concatenate([rows, er])
    all_vals = np.concatenate([root, X[er, ec]])
    out = []
    for i in range(lo.size):
        v = np.sort(all_vals[all_rows == i])
        out.append(_dedup(v, DEDUP_REL * (hi[i] - lo[i])))
    return out


def _eval_rows(f, rows, x, nrows):
    """Evaluate a row-wise function at scattered (row, x) pairs."""
    if x.size == 0:
        return x
    # pack into a (nrows, width) array; unused slots are filled with row 0's point
    counts = np.bincount(rows, minlength=nrows)
    width = int(counts.max())
    order = np.argsort(rows, kind="stable")
    slot = np.empty_like(rows)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    slot[order] = np.arange(rows.size) - np.repeat(starts, counts)
    X = np.zeros((nrows, width))
    X[:] = x[order[0]]
    X[rows, slot] = x
    return f(X)[rows, slot]


def _dedup(v, tol):
    if v.size <= 1:
        return v
    keep = [v[0]]
    for x in v[1:]:
        if x - keep[-1] > tol:
            keep.append(x)
        else:
            keep[-1] = x  # ties resolve toward the larger value
    return np.array(keep)


def real_roots(p: Poly, lo: float, hi: float):
    """All real roots of ``p`` in ``[lo, hi]``, sorted.

    Simple roots are found by bracketing.  Even-multiplicity roots (no sign
    change) are found as sign changes of ``p'`` where ``|p|`` is negligible
    relative to the absolute-coefficient envelope.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if p.is_zero():
        raise ValueError("polynomial is identically zero")
    c = p.coeffs
    dc = p.deriv().coeffs
    ddc = p.deriv().deriv().coeffs

    def f(X):
        return horner(c, X)

    def df(X):
        return horner(dc, X)

    def ddf(X):
        return horner(ddc, X)

    roots = bracket_roots(f, [lo], [hi], dfun=df)[0]
    if p.degree >= 2:
        absc = np.abs(c)
        crit = bracket_roots(df, [lo], [hi], dfun=ddf)[0]
        if crit.size:
            env = horner(absc, np.abs(crit))
            touch = crit[np.abs(horner(c, crit)) <= TOUCH_REL * env]
            roots = np.sort(np.concatenate([roots, touch]))
    return [float(r) for r in _dedup(roots, DEDUP_REL * (hi - lo))]
