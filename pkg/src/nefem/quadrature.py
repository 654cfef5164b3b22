"""Quadrature rules: Gauss-Legendre, Greville moment fitting, and hybrid rules.

Rules on ``[-1, 1]^d`` are tagged ``"symmetric"``; rules on ``[0, 1]^d``
are tagged ``"unit"``.  Element-level code works on ``[0, 1]^3`` and uses
:meth:`QuadRule.to_unit` to convert.

The hybrid rule for a boundary element lifts the element's 2D Greville
rule to the face ``zeta = -1`` of ``[-1, 1]^3`` and pulls every point
towards the one-point Gauss datum ``(0, 0, 1)`` (weight 4) by weighted
averaging; the averaged points are then normalised to unit length.  The
weights are fitted by least squares against the exact integrals of all
local basis functions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DegeneratePointError, NegativeWeightWarning, QuadratureError, SurfaceMeasureError
from .spline import KnotVector, basis_matrix, bspline_moments, greville_points

__all__ = [
    "QuadRule",
    "MomentSystem",
    "gauss_legendre",
    "greville_weights",
    "greville_rule_2d",
    "bezier_greville_rule",
    "hybrid_points",
    "hybrid_weights",
    "tensor_rule",
    "integrate_volume",
    "integrate_surface",
    "GAUSS_POINT",
    "GAUSS_WEIGHT",
]

GAUSS_POINT = np.array([0.0, 0.0, 1.0])
GAUSS_WEIGHT = 4.0
HYBRID_MODES = ("hybrid", "hybrid2", "diagnostic_no_normalize")


@dataclass(frozen=True)
class QuadRule:
    """Quadrature points and weights.

    Attributes
    ----------
    points : ndarray, shape (n, d)
    weights : ndarray, shape (n,)
    domain : {"symmetric", "unit"}
        ``[-1, 1]^d`` or ``[0, 1]^d``.
    tag : str
        Construction: ``"gauss"``, ``"greville"``, ``"hybrid"``, ...
    residual : float or None
        Least-squares residual ``||A w - b||`` for fitted rules.
    has_negative : bool
    """

    points: np.ndarray
    weights: np.ndarray
    domain: str = "symmetric"
    tag: str = "gauss"
    residual: float | None = None
    rhs_norm: float | None = None
    has_negative: bool = False
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.size:
            raise QuadratureError(f"{pts.shape[0]} points but {w.size} weights")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.weights.size

    @property
    def relative_residual(self):
        if self.residual is None or not self.rhs_norm:
            return None
        return self.residual / self.rhs_norm

    def to_unit(self):
        if self.domain == "unit":
            return self
        return QuadRule((self.points + 1.0) / 2.0, self.weights / 2.0 ** self.dim, "unit",
                        self.tag, self.residual, self.rhs_norm, self.has_negative, self.info)

    def to_symmetric(self):
        if self.domain == "symmetric":
            return self
        return QuadRule(2.0 * self.points - 1.0, self.weights * 2.0 ** self.dim, "symmetric",
                        self.tag, self.residual, self.rhs_norm, self.has_negative, self.info)

    def integrate(self, values):
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class MomentSystem:
    matrix: np.ndarray     # (equations, points): basis k evaluated at point i
    moments: np.ndarray
    residual: float


def gauss_legendre(n, d=1):
    """Tensor-product Gauss-Legendre rule with ``n`` points per direction on ``[-1,1]^d``."""
    if not 1 <= int(n) <= 20:
        raise QuadratureError(f"Gauss-Legendre order must be in 1..20, got {n}")
    x, w = np.polynomial.legendre.leggauss(int(n))
    return tensor_rule([QuadRule(x[:, None], w)] * d, tag="gauss")


def tensor_rule(rules, tag=None):
    """Tensor product of 1D rules sharing one domain tag (first factor fastest)."""
    pts = [r.points[:, 0] for r in rules]
    wts = [r.weights for r in rules]
    grids = np.meshgrid(*pts, indexing="ij")
    wgrid = np.ones_like(grids[0])
    for k, w in enumerate(wts):
        shape = [1] * len(rules)
        shape[k] = -1
        wgrid = wgrid * w.reshape(shape)
    P = np.column_stack([g.transpose().ravel() for g in grids])
    W = wgrid.transpose().ravel()
    return QuadRule(P, W, rules[0].domain, tag or rules[0].tag,
                    has_negative=any(r.has_negative for r in rules))


def greville_weights(kv):
    """Moment-fitted rule at the Greville abscissae of ``kv`` on ``[0, 1]``.

    Solves ``sum_i w_i N_j(gamma_i) = int N_j`` for all basis functions.
    Negative weights are allowed but flagged with
    :class:`NegativeWeightWarning`.
    """
    g = greville_points(kv)
    A = basis_matrix(kv, g)[0].T       # A[j, i] = N_j(gamma_i)
    b = bspline_moments(kv)
    try:
        lu = sla.lu_factor(A, check_finite=True)
        if np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.max(np.abs(A)):
            raise np.linalg.LinAlgError("singular")
        w = sla.lu_solve(lu, b)
    except (np.linalg.LinAlgError, sla.LinAlgError, ValueError) as exc:
        raise QuadratureError("singular Greville collocation matrix") from exc
    neg = bool(np.any(w < 0))
    if neg:
        warnings.warn(f"Greville rule has negative weights (min {w.min():.3e})",
                      NegativeWeightWarning, stacklevel=2)
    return QuadRule(g[:, None], w, "unit", "greville",
                    residual=float(np.linalg.norm(A @ w - b)), rhs_norm=float(np.linalg.norm(b)),
                    has_negative=neg)


def greville_rule_2d(kv_u, kv_v):
    return tensor_rule([greville_weights(kv_u), greville_weights(kv_v)], tag="greville")


def bezier_greville_rule(p, q):
    """Greville rule of a single Bezier cell of degrees ``(p, q)`` on ``[-1, 1]^2``.

    For ``p = q = 2`` this is the tensor Simpson rule.
    """
    rules = [greville_weights(KnotVector.uniform(1, d)).to_symmetric() for d in (p, q)]
    return tensor_rule(rules, tag="greville")


def hybrid_points(gamma, weights, mode="hybrid", tol=1e-12):
    """Hybrid quadrature points in ``[-1, 1]^3``.

    Parameters
    ----------
    gamma : array_like, shape (n, 2)
        Greville points in ``[-1, 1]^2``.
    weights : array_like, shape (n, 2)
        1D Greville weights ``(w_i, w_j)`` of each point.
    mode : {"hybrid", "hybrid2", "diagnostic_no_normalize"}
        ``hybrid2`` averages with each of the two Gauss points
        ``(+-1/sqrt3, 0, 1)`` of weight 2 and returns ``2n`` points (the
        first ``n`` for the negative Gauss point).  The diagnostic mode skips
        the final normalisation and is not the method as designed.

    Returns
    -------
    ndarray, shape (n, 3) or (2n, 3)
    """
    if mode not in HYBRID_MODES:
        raise QuadratureError(f"unknown hybrid mode {mode!r}")
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    wi, wj = weights[:, 0], weights[:, 1]
    wij = wi * wj
    if mode == "hybrid2":
        s = 1.0 / np.sqrt(3.0)
        data = [(np.array([-s, 0.0, 1.0]), 2.0), (np.array([s, 0.0, 1.0]), 2.0)]
    else:
        data = [(GAUSS_POINT, GAUSS_WEIGHT)]
    out = []
    for qg, w in data:
        sw = np.sqrt(w)
        qt = np.column_stack([
            (qg[0] * sw + gamma[:, 0] * wi) / (sw + wi),
            (qg[1] * sw + gamma[:, 1] * wj) / (sw + wj),
            (w * qg[2] + wij * -1.0) / (w + wij),
        ])
        if mode == "diagnostic_no_normalize":
            out.append(qt)
            continue
        nrm = np.linalg.norm(qt, axis=1)
        if np.any(nrm < tol):
            raise DegeneratePointError(f"hybrid point with norm {nrm.min():.3e} cannot be normalised")
        out.append(qt / nrm[:, None])
    return np.vstack(out)


def hybrid_weights(points, basis_values, moments, tag="hybrid", space_dim=None):
    """Least-squares weights for given points.

    Parameters
    ----------
    points : ndarray, shape (n, 3)
        Points in ``[-1, 1]^3``.
    basis_values : callable or ndarray
        ``basis_values(xhat)`` with ``xhat`` in ``[0, 1]^3`` returning
        ``(n, m)`` values of the ``m`` local basis functions, or the
        ``(m, n)`` matrix itself.
    moments : ndarray, shape (m,)
        Integrals of the basis functions over ``[-1, 1]^3``.
    space_dim : int, optional
        Dimension of the span of the basis functions on the element, when it
        is smaller than ``m``.  The system counts as rank deficient if its
        rank is below ``min(n, space_dim)``; otherwise the minimum-norm
        least-squares solution is returned.
    """
    points = np.atleast_2d(points)
    if callable(basis_values):
        A = np.asarray(basis_values((points + 1.0) / 2.0)).T
    else:
        A = np.asarray(basis_values)
    b = np.asarray(moments, dtype=float)
    if A.shape != (b.size, points.shape[0]):
        raise QuadratureError(f"moment matrix shape {A.shape} does not match {b.size} moments")
    sv = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * max(A.shape) * np.finfo(float).eps))
    need = min(A.shape) if space_dim is None else min(A.shape[1], space_dim)
    if rank < need:
        raise QuadratureError(f"moment matrix is rank deficient (rank {rank} < {need})")
    w, *_ = sla.lstsq(A, b, lapack_driver="gelsy")
    res = float(np.linalg.norm(A @ w - b))
    neg = bool(np.any(w < 0))
    return QuadRule(points, w, "symmetric", tag, residual=res, rhs_norm=float(np.linalg.norm(b)),
                    has_negative=neg, info={"system": MomentSystem(A, b, res), "rank": rank})


def integrate_volume(mesh, elem, f, rule):
    """Integrate ``f(x)`` over one element with a rule in reference coordinates.

    ``rule`` may live on ``[-1,1]^3`` or ``[0,1]^3``; the determinant of the
    element map supplies the volume factor.
    """
    r = rule.to_unit()
    ev = mesh.geometric_map(elem, r.points)
    vals = np.asarray(f(ev.point), dtype=float)
    return float(np.dot(r.weights, vals * ev.det))


def integrate_surface(patch, f, rule=None):
    """Integrate ``f(x)`` over the patch surface.

    Uses the Greville rule of the patch knot vectors unless ``rule`` (on
    ``[0, 1]^2`` in patch parameters) is given.
    """
    if rule is None:
        rule = greville_rule_2d(patch.kv_u, patch.kv_v)
    r = rule.to_unit()
    u, v = r.points[:, 0], r.points[:, 1]
    J = patch.jacobian(u, v)
    dA = np.linalg.norm(np.cross(J[:, :, 0], J[:, :, 1]), axis=1)
    scale = max(1.0, patch.diameter ** 2)
    if np.any(dA <= 1e-14 * scale):
        raise SurfaceMeasureError("degenerate surface tangents at a quadrature point")
    x = patch.evaluate(u, v)
    return float(np.dot(r.weights, np.asarray(f(x), dtype=float) * dA))


def dense_surface_rule(patch, order=12):
    """Gauss rule with ``order`` points per direction on every Bezier cell, on ``[0,1]^2``."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    pts, wts = [], []
    bu, bv = patch.kv_u.breakpoints, patch.kv_v.breakpoints
    for a, b in zip(bv[:-1], bv[1:]):
        for c, d in zip(bu[:-1], bu[1:]):
            U, V = np.meshgrid(c + (d - c) * x, a + (b - a) * x, indexing="ij")
            pts.append(np.column_stack([U.T.ravel(), V.T.ravel()]))
            wts.append(np.outer((b - a) * w, (d - c) * w).ravel())
    return QuadRule(np.vstack(pts), np.concatenate(wts), "unit", "gauss")


def hybrid_moments(local_basis, eid, order=12):
    """Integrals over ``[-1, 1]^3`` of all hybrid basis functions of one element.

    The patch part is integrated with an ``order x order`` Gauss rule on the
    element's Bezier cell (the ``zeta`` factor integrates to 1/2 exactly);
    each interface-vertex function integrates to 1.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    A, B = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([A.ravel(), B.ravel(), np.zeros(A.size)])
    W = np.outer(w, w).ravel()
    N, _ = local_basis.evaluate([eid], pts)
    n = local_basis.n_cp
    patch_part = 8.0 * 0.5 * (W @ N[0, :, :n])
    return np.concatenate([patch_part, np.ones(4)])


def element_hybrid_rule(local_basis, eid, mode="hybrid", moment_order=12):
    """Hybrid rule for one boundary element, on ``[-1, 1]^3``.

    Points come from the single-cell Greville rule of the patch degrees; the
    weights are least-squares fitted against :func:`hybrid_moments`.
    """
    p, q = local_basis.mesh.patch.degrees
    g2 = bezier_greville_rule(p, q)
    w1u = greville_weights(KnotVector.uniform(1, p)).to_symmetric().weights
    w1v = greville_weights(KnotVector.uniform(1, q)).to_symmetric().weights
    wi = np.tile(w1u, q + 1)
    wj = np.repeat(w1v, p + 1)
    pts = hybrid_points(g2.points, np.column_stack([wi, wj]), mode=mode)
    b = hybrid_moments(local_basis, eid, moment_order)
    vals = lambda xh: local_basis.evaluate([eid], xh)[0][0]  # noqa: E731
    # on one cell the patch functions span only the (p+1)(q+1) local polynomials
    return hybrid_weights(pts, vals, b, tag=mode, space_dim=(p + 1) * (q + 1) + 4)
