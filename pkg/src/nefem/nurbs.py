"""Tensor-product NURBS surface patches and the Greville-transformed basis.

A :class:`NurbsPatch` stores control points as an ``(n1, n2, 3)`` grid.
Whenever basis functions are flattened, index ``k = i + n1 * j`` is used
(first parametric direction fastest), and control points / weights are
flattened the same way.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import IllConditionedTransformError, InvalidPatchError
from .spline import KnotVector, basis_functions, basis_matrix, greville_points, insert_knot

__all__ = [
    "NurbsPatch",
    "TransformedPatchBasis",
    "BezierMesh",
    "GrevilleMesh2D",
    "eval_nurbs_basis_2d",
    "eval_surface",
    "eval_surface_jacobian",
    "build_transformed_basis",
    "bezier_mesh",
    "greville_mesh",
    "control_mesh_eval",
]

COND_LIMIT = 1e12


def _flat(grid):
    """(n1, n2, ...) -> (n1 * n2, ...) with the first index fastest."""
    n1, n2 = grid.shape[:2]
    return np.swapaxes(grid, 0, 1).reshape((n1 * n2,) + grid.shape[2:])


def _unflat(arr, n1, n2):
    return np.swapaxes(arr.reshape((n2, n1) + arr.shape[1:]), 0, 1)


class NurbsPatch:
    """Rational tensor-product surface ``S: [0,1]^2 -> R^3``.

    Parameters
    ----------
    kv_u, kv_v : KnotVector
    control_points : array_like, shape (n1, n2, 3)
    weights : array_like, shape (n1, n2), optional
        Defaults to all ones (a polynomial B-spline surface).
    check : bool
        Sample the weight function on a 20x20 grid per Bezier cell and
        reject the patch if it is not positive.
    """

    def __init__(self, kv_u, kv_v, control_points, weights=None, check=True):
        cp = np.array(control_points, dtype=float)
        n1, n2 = kv_u.n, kv_v.n
        if cp.shape != (n1, n2, 3):
            raise InvalidPatchError(
                f"control grid has shape {cp.shape}, expected {(n1, n2, 3)}")
        w = np.ones((n1, n2)) if weights is None else np.array(weights, dtype=float)
        if w.shape != (n1, n2):
            raise InvalidPatchError(f"weight grid has shape {w.shape}, expected {(n1, n2)}")
        if not np.all(np.isfinite(cp)) or not np.all(np.isfinite(w)):
            raise InvalidPatchError("non-finite control data")
        if np.any(w <= 0):
            raise InvalidPatchError("weights must be positive")
        cp.setflags(write=False)
        w.setflags(write=False)
        self.kv_u, self.kv_v = kv_u, kv_v
        self.control_points = cp
        self.weights = w
        if check:
            self._check_weight_function()

    def _check_weight_function(self, per_cell=20):
        us = _sample_cells(self.kv_u.breakpoints, per_cell)
        vs = _sample_cells(self.kv_v.breakpoints, per_cell)
        Bu = basis_matrix(self.kv_u, us)[0]
        Bv = basis_matrix(self.kv_v, vs)[0]
        W = Bu @ self.weights @ Bv.T
        if np.min(W) <= 0:
            raise InvalidPatchError("weight function is not positive on [0,1]^2")

    # -- sizes -------------------------------------------------------------
    @property
    def shape(self):
        return self.kv_u.n, self.kv_v.n

    @property
    def n_cp(self):
        return self.kv_u.n * self.kv_v.n

    @property
    def degrees(self):
        return self.kv_u.degree, self.kv_v.degree

    @property
    def flat_points(self):
        return _flat(self.control_points)

    @property
    def flat_weights(self):
        return _flat(self.weights)

    @property
    def is_rational(self):
        return not np.allclose(self.weights, self.weights.flat[0])

    # -- evaluation --------------------------------------------------------
    def basis(self, u, v, derivs=False, extrapolate=False):
        """Rational basis values, shape ``(m, n_cp)``.

        With ``derivs=True`` returns ``(R, R_u, R_v)``.
        """
        u, v = _as_points(u, v)
        nd = 1 if derivs else 0
        Bu = basis_matrix(self.kv_u, u, nd, extrapolate)
        Bv = basis_matrix(self.kv_v, v, nd, extrapolate)
        w = self.weights
        N = Bu[0][:, :, None] * Bv[0][:, None, :] * w
        W = N.sum(axis=(1, 2))
        if np.any(W <= 0):
            raise InvalidPatchError("weight function is not positive")
        R = N / W[:, None, None]
        flat = lambda a: np.swapaxes(a, 1, 2).reshape(a.shape[0], -1)  # noqa: E731
        if not derivs:
            return flat(R)
        Nu = Bu[1][:, :, None] * Bv[0][:, None, :] * w
        Nv = Bu[0][:, :, None] * Bv[1][:, None, :] * w
        Wu = Nu.sum(axis=(1, 2))[:, None, None]
        Wv = Nv.sum(axis=(1, 2))[:, None, None]
        Wb = W[:, None, None]
        Ru = (Nu - R * Wu) / Wb
        Rv = (Nv - R * Wv) / Wb
        return flat(R), flat(Ru), flat(Rv)

    def field(self, coefs, u, v, derivs=False, extrapolate=False):
        """Evaluate ``sum_k R_k(u, v) c_k`` using only the non-zero functions.

        ``coefs`` has shape ``(n1, n2)`` or ``(n1, n2, k)``.  Returns values
        of shape ``(m,)`` / ``(m, k)``, plus ``(d/du, d/dv)`` if requested.
        """
        u, v = _as_points(u, v)
        coefs = np.asarray(coefs, dtype=float)
        scalar = coefs.ndim == 2
        c = coefs[..., None] if scalar else coefs
        hom = np.concatenate([c * self.weights[..., None], self.weights[..., None]], axis=-1)
        nd = 1 if derivs else 0
        su, Nu = basis_functions(self.kv_u, u, nd, extrapolate)
        sv, Nv = basis_functions(self.kv_v, v, nd, extrapolate)
        p, q = self.degrees
        iu = su[:, None] - p + np.arange(p + 1)
        iv = sv[:, None] - q + np.arange(q + 1)
        H = hom[iu[:, :, None], iv[:, None, :]]  # (m, p+1, q+1, k+1)
        val = np.einsum("ma,mb,mabk->mk", Nu[0], Nv[0], H)
        W = val[:, -1:]
        f = val[:, :-1] / W
        if not derivs:
            return f[:, 0] if scalar else f
        du = np.einsum("ma,mb,mabk->mk", Nu[1], Nv[0], H)
        dv = np.einsum("ma,mb,mabk->mk", Nu[0], Nv[1], H)
        fu = (du[:, :-1] - f * du[:, -1:]) / W
        fv = (dv[:, :-1] - f * dv[:, -1:]) / W
        if scalar:
            return f[:, 0], fu[:, 0], fv[:, 0]
        return f, fu, fv

    def evaluate(self, u, v, extrapolate=False):
        """Surface points, shape ``(m, 3)``."""
        return self.field(self.control_points, u, v, extrapolate=extrapolate)

    def jacobian(self, u, v, extrapolate=False):
        """Tangent matrix ``[S_u, S_v]``, shape ``(m, 3, 2)``."""
        _, su, sv = self.field(self.control_points, u, v, derivs=True, extrapolate=extrapolate)
        return np.stack([su, sv], axis=-1)

    def weight_function(self, u, v):
        u, v = _as_points(u, v)
        Bu = basis_matrix(self.kv_u, u)[0]
        Bv = basis_matrix(self.kv_v, v)[0]
        return np.einsum("mi,ij,mj->m", Bu, self.weights, Bv)

    # -- refinement / reparametrisation -------------------------------------
    def insert_knot_u(self, u):
        cols = [insert_knot(self.kv_u, self.control_points[:, j], self.weights[:, j], u)
                for j in range(self.kv_v.n)]
        kv = cols[0][0]
        cp = np.stack([c[1] for c in cols], axis=1)
        w = np.stack([c[2] for c in cols], axis=1)
        return NurbsPatch(kv, self.kv_v, cp, w, check=False)

    def insert_knot_v(self, v):
        return self.transposed().insert_knot_u(v).transposed()

    def transposed(self):
        return NurbsPatch(self.kv_v, self.kv_u, np.swapaxes(self.control_points, 0, 1),
                          self.weights.T, check=False)

    def reversed_u(self):
        kv = KnotVector(1.0 - self.kv_u.knots[::-1], self.kv_u.degree)
        return NurbsPatch(kv, self.kv_v, self.control_points[::-1], self.weights[::-1],
                          check=False)

    def refine_uniform(self):
        """Insert one knot at the midpoint of every Bezier cell in both directions."""
        patch = self
        bu = self.kv_u.breakpoints
        for m in 0.5 * (bu[:-1] + bu[1:]):
            patch = patch.insert_knot_u(m)
        bv = self.kv_v.breakpoints
        for m in 0.5 * (bv[:-1] + bv[1:]):
            patch = patch.insert_knot_v(m)
        return patch

    def refine_to(self, n_u, n_v):
        """Uniformly refine (by midpoint insertion) until the cell counts match.

        Only reachable when each target is the current count times a power of two.
        """
        patch = self
        while patch.kv_u.n_cells < n_u or patch.kv_v.n_cells < n_v:
            if patch.kv_u.n_cells < n_u:
                bu = patch.kv_u.breakpoints
                for m in 0.5 * (bu[:-1] + bu[1:]):
                    patch = patch.insert_knot_u(m)
            if patch.kv_v.n_cells < n_v:
                bv = patch.kv_v.breakpoints
                for m in 0.5 * (bv[:-1] + bv[1:]):
                    patch = patch.insert_knot_v(m)
        if (patch.kv_u.n_cells, patch.kv_v.n_cells) != (n_u, n_v):
            raise InvalidPatchError(
                f"cannot reach {n_u}x{n_v} cells from "
                f"{self.kv_u.n_cells}x{self.kv_v.n_cells} by uniform refinement")
        return patch

    # -- meshes --------------------------------------------------------------
    @cached_property
    def greville(self):
        """Greville abscissae ``(gamma_u, gamma_v)``."""
        return greville_points(self.kv_u), greville_points(self.kv_v)

    def greville_flat(self):
        """Greville points as ``(n_cp, 2)`` in flattened order."""
        gu, gv = self.greville
        U, V = np.meshgrid(gu, gv, indexing="ij")
        return np.column_stack([_flat(U), _flat(V)])

    @cached_property
    def diameter(self):
        pts = self.flat_points
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def _as_points(u, v):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    u, v = np.broadcast_arrays(u, v)
    return u.ravel(), v.ravel()


def _sample_cells(breaks, per_cell):
    t = np.linspace(0.0, 1.0, per_cell)
    return np.unique(np.concatenate([a + (b - a) * t for a, b in zip(breaks[:-1], breaks[1:])]))


# ---------------------------------------------------------------------------
# Transformed basis
# ---------------------------------------------------------------------------


class TransformedPatchBasis:
    """Basis ``R_hat = T^{-1} R`` interpolatory at the Greville images.

    ``T[i, j] = R_i(gamma_j)``.  The transformed control points
    ``C_hat = T^t C`` coincide with the Greville images ``S(gamma_j)``.
    """

    def __init__(self, patch):
        self.patch = patch
        g = patch.greville_flat()
        R = patch.basis(g[:, 0], g[:, 1])  # R[j, i] = R_i(gamma_j)
        T = R.T.copy()
        self.condition = float(np.linalg.cond(T))
        if not np.isfinite(self.condition) or self.condition > COND_LIMIT:
            raise IllConditionedTransformError(
                f"Greville transform condition number {self.condition:.3e} exceeds {COND_LIMIT:.0e}")
        self.T = T
        self._lu = sla.lu_factor(T)
        self.greville_params = g
        self.transformed_points = T.T @ patch.flat_points
        self.greville_images = patch.evaluate(g[:, 0], g[:, 1])
        for a in (self.T, self.transformed_points, self.greville_params):
            a.setflags(write=False)

    @property
    def n(self):
        return self.patch.n_cp

    @cached_property
    def inverse(self):
        Tinv = sla.lu_solve(self._lu, np.eye(self.n))
        Tinv.setflags(write=False)
        return Tinv

    def evaluate(self, u, v, derivs=False, extrapolate=False):
        """Transformed basis values ``(m, n_cp)`` (and parametric derivatives)."""
        out = self.patch.basis(u, v, derivs=derivs, extrapolate=extrapolate)
        TiT = self.inverse.T
        if not derivs:
            return out @ TiT
        return tuple(a @ TiT for a in out)

    def control_coefficients(self, nodal):
        """Map coefficients in the transformed basis to original-basis ones.

        ``sum_k d_k R_hat_k = sum_i c_i R_i`` with ``c = T^{-t} d``.
        """
        return sla.lu_solve(self._lu, np.asarray(nodal, dtype=float), trans=1)

    def nodal_values(self, control):
        """Inverse of :meth:`control_coefficients`: values at Greville images."""
        return self.T.T @ np.asarray(control, dtype=float)


# ---------------------------------------------------------------------------
# Parametric meshes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BezierMesh:
    """Cells ``[alpha_i, alpha_{i+1}] x [beta_j, beta_{j+1}]`` of the knot net."""

    breaks_u: np.ndarray
    breaks_v: np.ndarray

    @property
    def shape(self):
        return self.breaks_u.size - 1, self.breaks_v.size - 1

    @property
    def cells(self):
        bu, bv = self.breaks_u, self.breaks_v
        return [((bu[i], bu[i + 1]), (bv[j], bv[j + 1]))
                for j in range(bv.size - 1) for i in range(bu.size - 1)]

    def __len__(self):
        nu, nv = self.shape
        return nu * nv

    def physical_corners(self, patch):
        U, V = np.meshgrid(self.breaks_u, self.breaks_v, indexing="ij")
        return patch.evaluate(U.ravel(), V.ravel()).reshape(U.shape + (3,))


@dataclass(frozen=True)
class GrevilleMesh2D:
    points: np.ndarray  # (n1, n2, 2)

    @property
    def shape(self):
        return self.points.shape[:2]


def eval_nurbs_basis_2d(patch, u, v, derivs=False):
    return patch.basis(u, v, derivs=derivs)


def eval_surface(patch, u, v):
    return patch.evaluate(u, v)


def eval_surface_jacobian(patch, u, v):
    return patch.jacobian(u, v)


def build_transformed_basis(patch):
    return TransformedPatchBasis(patch)


def bezier_mesh(patch):
    return BezierMesh(patch.kv_u.breakpoints, patch.kv_v.breakpoints)


def greville_mesh(patch):
    gu, gv = patch.greville
    U, V = np.meshgrid(gu, gv, indexing="ij")
    return GrevilleMesh2D(np.stack([U, V], axis=-1))


def _hat_matrix(nodes, x):
    """Piecewise-linear functions dual to ``nodes``, evaluated at ``x``: (m, n)."""
    x = np.clip(x, nodes[0], nodes[-1])
    idx = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, nodes.size - 2)
    t = (x - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    H = np.zeros((x.size, nodes.size))
    rows = np.arange(x.size)
    H[rows, idx] = 1.0 - t
    H[rows, idx + 1] += t
    return H


def control_mesh_eval(patch, u, v):
    """Piecewise-bilinear interpolant of the control net over the Greville grid."""
    u, v = _as_points(u, v)
    gu, gv = patch.greville
    Hu = _hat_matrix(gu, u)
    Hv = _hat_matrix(gv, v)
    return np.einsum("mi,ijk,mj->mk", Hu, patch.control_points, Hv)
