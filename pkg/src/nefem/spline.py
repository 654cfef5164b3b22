"""Univariate B-splines on open knot vectors.

Basis evaluation follows the Cox-de Boor recursion in its triangular-table
form (all non-zero functions of a span at once), vectorised over the
evaluation points.  Knot insertion uses Boehm's single-knot algorithm in
homogeneous coordinates so that rational curves are preserved.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DegenerateDerivativeWarning, DomainError, KnotVectorError

__all__ = [
    "KnotVector",
    "basis_functions",
    "basis_matrix",
    "eval_bspline_basis",
    "eval_bspline_derivs",
    "greville_points",
    "bspline_moment",
    "bspline_moments",
    "insert_knot",
]

_TOL = 1e-14


class KnotVector:
    """Open knot vector on [0, 1] with its degree.

    Parameters
    ----------
    knots : array_like
        Non-decreasing knots. The first and last knot must be 0 and 1, each
        repeated exactly ``degree + 1`` times; interior knots may repeat at
        most ``degree`` times.
    degree : int
        Polynomial degree ``p >= 0``.
    """

    __slots__ = ("_knots", "degree")

    def __init__(self, knots, degree):
        knots = np.array(knots, dtype=float)
        p = int(degree)
        if p < 0:
            raise KnotVectorError(f"degree must be non-negative, got {degree}")
        if knots.ndim != 1 or knots.size < 2 * (p + 1):
            raise KnotVectorError(f"need at least {2 * (p + 1)} knots for degree {p}")
        if np.any(np.diff(knots) < 0):
            raise KnotVectorError("knots must be non-decreasing")
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise KnotVectorError("knot vector must span exactly [0, 1]")
        if np.any(knots[: p + 1] != 0.0) or np.any(knots[-(p + 1):] != 1.0):
            raise KnotVectorError("knot vector is not open (end knots need multiplicity p+1)")
        interior = knots[p + 1: knots.size - p - 1]
        if interior.size and (interior[0] == 0.0 or interior[-1] == 1.0):
            raise KnotVectorError("end knots repeated more than p+1 times")
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if counts.max() > p:
                raise KnotVectorError(
                    f"interior knot multiplicity {counts.max()} exceeds degree {p}")
        knots.setflags(write=False)
        self._knots = knots
        self.degree = p

    @classmethod
    def uniform(cls, n_cells, degree):
        """Open uniform knot vector with ``n_cells`` equal knot spans."""
        interior = np.linspace(0.0, 1.0, n_cells + 1)[1:-1]
        knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
        return cls(knots, degree)

    @property
    def knots(self):
        return self._knots

    @property
    def n(self):
        """Number of basis functions."""
        return self._knots.size - self.degree - 1

    @property
    def breakpoints(self):
        """Distinct knot values (the Bezier element boundaries)."""
        return np.unique(self._knots)

    @property
    def n_cells(self):
        return self.breakpoints.size - 1

    def multiplicity(self, u):
        return int(np.count_nonzero(np.abs(self._knots - u) <= _TOL))

    def span(self, u):
        """Index ``i`` with ``knots[i] <= u < knots[i+1]`` (last span at ``u = 1``)."""
        return find_spans(self, np.atleast_1d(np.asarray(u, dtype=float)))

    def __eq__(self, other):
        return (isinstance(other, KnotVector) and self.degree == other.degree
                and np.array_equal(self._knots, other._knots))

    def __hash__(self):
        return hash((self.degree, self._knots.tobytes()))

    def __repr__(self):
        return f"KnotVector({self._knots.tolist()}, degree={self.degree})"


def find_spans(kv, u):
    """Vectorised knot-span lookup; points outside [0, 1] use the end spans."""
    span = np.searchsorted(kv.knots, u, side="right") - 1
    return np.clip(span, kv.degree, kv.n - 1)


def _check_domain(u):
    if np.any(u < -_TOL) or np.any(u > 1.0 + _TOL):
        bad = u[(u < -_TOL) | (u > 1.0 + _TOL)]
        raise DomainError(f"parameter(s) outside [0, 1]: {bad[:5]}")


def basis_functions(kv, u, nderiv=0, extrapolate=False):
    """Non-zero basis functions (and derivatives) at each point.

    Parameters
    ----------
    kv : KnotVector
    u : array_like, shape (m,)
    nderiv : int
        Highest derivative order. Orders above the degree come back as zeros.
    extrapolate : bool
        Allow points outside [0, 1]; the end-span polynomials are continued.

    Returns
    -------
    spans : ndarray of int, shape (m,)
        Function ``spans[k] - p + a`` owns ``values[:, k, a]``.
    values : ndarray, shape (nderiv + 1, m, p + 1)
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if not extrapolate:
        _check_domain(u)
    p = kv.degree
    knots = kv.knots
    spans = find_spans(kv, u)
    m = u.size
    nd = min(nderiv, p)

    ndu = np.zeros((p + 1, p + 1, m))
    ndu[0, 0] = 1.0
    left = np.zeros((p + 1, m))
    right = np.zeros((p + 1, m))
    for j in range(1, p + 1):
        left[j] = u - knots[spans + 1 - j]
        right[j] = knots[spans + j] - u
        saved = np.zeros(m)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    out = np.zeros((nderiv + 1, m, p + 1))
    out[0] = ndu[:, p].T
    if nd > 0:
        for r in range(p + 1):
            a = np.zeros((2, p + 1, m))
            a[0, 0] = 1.0
            s1, s2 = 0, 1
            for k in range(1, nd + 1):
                d = np.zeros(m)
                rk, pk = r - k, p - k
                if r >= k:
                    a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                    d += a[s2, 0] * ndu[rk, pk]
                j1 = 1 if rk >= -1 else -rk
                j2 = k - 1 if r - 1 <= pk else p - r
                for j in range(j1, j2 + 1):
                    a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                    d += a[s2, j] * ndu[rk + j, pk]
                if r <= pk:
                    a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                    d += a[s2, k] * ndu[r, pk]
                out[k, :, r] = d
                s1, s2 = s2, s1
        fac = float(p)
        for k in range(1, nd + 1):
            out[k] *= fac
            fac *= p - k
    return spans, out


def basis_matrix(kv, u, nderiv=0, extrapolate=False):
    """Dense basis values, shape ``(nderiv + 1, m, n)``."""
    spans, vals = basis_functions(kv, u, nderiv, extrapolate)
    m = spans.size
    full = np.zeros((nderiv + 1, m, kv.n))
    cols = spans[:, None] - kv.degree + np.arange(kv.degree + 1)
    rows = np.broadcast_to(np.arange(m)[:, None], cols.shape)
    for k in range(nderiv + 1):
        full[k, rows, cols] = vals[k]
    return full


def eval_bspline_basis(kv, u):
    """All ``n`` basis values at the scalar parameter ``u``.

    >>> eval_bspline_basis(KnotVector([0, 0, 0, 1, 1, 1], 2), 0.5)
    array([0.25, 0.5 , 0.25])
    """
    return basis_matrix(kv, [u])[0, 0]


def eval_bspline_derivs(kv, u, order):
    """Derivatives up to ``order`` of all basis functions at ``u``.

    Row ``k`` of the result holds the ``k``-th derivatives.  Rows beyond the
    degree are identically zero; requesting them emits
    :class:`DegenerateDerivativeWarning`.
    """
    if order > kv.degree:
        warnings.warn(
            f"derivative order {order} exceeds degree {kv.degree}; higher rows are zero",
            DegenerateDerivativeWarning, stacklevel=2)
    return basis_matrix(kv, [u], order)[:, 0, :]


def greville_points(kv):
    """Greville abscissae: averages of ``p`` consecutive interior knots."""
    p = kv.degree
    if p == 0:
        raise KnotVectorError("Greville abscissae need degree >= 1")
    t = kv.knots
    # running sum over windows t[i+1 .. i+p]
    c = np.concatenate([[0.0], np.cumsum(t)])
    idx = np.arange(kv.n)
    pts = (c[idx + p + 1] - c[idx + 1]) / p
    if np.any(np.diff(pts) <= 0):
        raise KnotVectorError("Greville abscissae are not distinct")
    return pts


def bspline_moment(kv, i):
    """Exact integral of basis function ``i`` (0-based) over [0, 1]."""
    if not 0 <= i < kv.n:
        raise IndexError(f"basis index {i} out of range [0, {kv.n})")
    t, p = kv.knots, kv.degree
    return (t[i + p + 1] - t[i]) / (p + 1)


def bspline_moments(kv):
    t, p = kv.knots, kv.degree
    return (t[p + 1:] - t[: kv.n]) / (p + 1)


def insert_knot(kv, coefs, weights, u):
    """Insert ``u`` once, keeping the (rational) curve unchanged.

    Parameters
    ----------
    kv : KnotVector
    coefs : array_like, shape (n, ...)
        Control coefficients (points or scalars), Cartesian.
    weights : array_like, shape (n,) or None
        Positive weights; ``None`` means a polynomial spline.
    u : float
        New knot, strictly inside (0, 1).

    Returns
    -------
    (KnotVector, ndarray, ndarray)
        Refined knot vector, coefficients and weights.
    """
    p = kv.degree
    if not 0.0 < u < 1.0:
        raise KnotVectorError(f"can only insert strictly inside (0, 1), got {u}")
    s = kv.multiplicity(u)
    if s + 1 > p:
        raise KnotVectorError(
            f"inserting {u} would raise its multiplicity to {s + 1} > degree {p}")
    coefs = np.asarray(coefs, dtype=float)
    n = kv.n
    if coefs.shape[0] != n:
        raise ValueError(f"expected {n} coefficients, got {coefs.shape[0]}")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    t = kv.knots
    k = int(find_spans(kv, np.array([u]))[0])

    wshape = (n,) + (1,) * (coefs.ndim - 1)
    hom = coefs * w.reshape(wshape)
    new_hom = np.empty((n + 1,) + coefs.shape[1:])
    new_w = np.empty(n + 1)
    lo, hi = k - p + 1, k - s
    new_hom[:lo] = hom[:lo]
    new_w[:lo] = w[:lo]
    for i in range(lo, hi + 1):
        alpha = (u - t[i]) / (t[i + p] - t[i])
        new_hom[i] = alpha * hom[i] + (1.0 - alpha) * hom[i - 1]
        new_w[i] = alpha * w[i] + (1.0 - alpha) * w[i - 1]
    new_hom[hi + 1:] = hom[hi:]
    new_w[hi + 1:] = w[hi:]

    new_kv = KnotVector(np.insert(t, k + 1, u), p)
    new_coefs = new_hom / new_w.reshape((n + 1,) + (1,) * (coefs.ndim - 1))
    return new_kv, new_coefs, (None if weights is None else new_w)
