"""Interpolation operators and error norms.

Every discrete object here implements ``evaluate(eids, xhat, gradient=False)``
for a homogeneous list of elements (all boundary or all interior), so errors
are measured with quadrature in reference coordinates and no point location
is needed.

The extruded NURBS space on the boundary layer is parametrised by
``(u, v, zeta)`` with ``S*(u, v, zeta) = (1 - zeta) S(u, v) + zeta I(u, v)``,
where ``I`` is the piecewise-bilinear interface of the mesh.  On a boundary
element ``S*`` coincides with the element map, so reference coordinates of
the element translate to ``(u, v, zeta)`` by scaling only.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import DomainError, PointLocationError, WrongElementKindError
from .mesh import bilinear_shape, trilinear_shape
from .quadrature import gauss_legendre
from .spaces import FEFunction, build_dof_map
from .spline import KnotVector, basis_matrix, greville_points

__all__ = [
    "spline_interpolate",
    "ExtrudedNurbsSpace",
    "NurbsProjection",
    "NodalInterpolant",
    "HybridInterpolant",
    "nurbs_project",
    "lagrange_interpolate",
    "hybrid_interpolate",
    "global_interpolate",
    "blend_coefficients",
    "error_norms",
    "locate_point",
]


# ---------------------------------------------------------------------------
# Tensor spline interpolation at Greville points
# ---------------------------------------------------------------------------


def _collocation(kv):
    g = greville_points(kv)
    return g, basis_matrix(kv, g)[0]      # M[k, i] = B_i(gamma_k)


def spline_interpolate(f, kvs):
    """Coefficients of the spline interpolating ``f`` at the Greville grid.

    Parameters
    ----------
    f : callable
        Called as ``f(*grids)`` with one ``ij``-indexed coordinate array per
        direction; must return values of the same shape.
    kvs : KnotVector or sequence of KnotVector (1 to 3 of them)

    Returns
    -------
    ndarray of shape ``(n1, ..., nd)``
    """
    if isinstance(kvs, KnotVector):
        kvs = [kvs]
    data = [_collocation(kv) for kv in kvs]
    grids = np.meshgrid(*[g for g, _ in data], indexing="ij")
    c = np.asarray(f(*grids), dtype=float)
    for axis, (_, M) in enumerate(data):
        lu = sla.lu_factor(M)
        c = np.moveaxis(c, axis, 0)
        shp = c.shape
        c = sla.lu_solve(lu, c.reshape(shp[0], -1)).reshape(shp)
        c = np.moveaxis(c, 0, axis)
    return c


# ---------------------------------------------------------------------------
# Extruded NURBS space on the boundary layer
# ---------------------------------------------------------------------------


def blend_coefficients(zeta_tilde):
    """``((1 - z) / (1 + z), 2 z / (1 + z))`` for ``z`` in (0, 1)."""
    z = float(zeta_tilde)
    if not 0.0 < z < 1.0:
        raise DomainError(f"zeta_tilde must lie in (0, 1), got {zeta_tilde}")
    return (1.0 - z) / (1.0 + z), 2.0 * z / (1.0 + z)


class ExtrudedNurbsSpace:
    """Rational space ``span{R_ij(u, v) * {1 - zeta, zeta}}`` with weight 1 at the interface.

    Functions are stored as numerator coefficients ``(a, b)`` on the
    polynomial tensor B-splines: value ``[(1-zeta) A(u,v) + zeta B(u,v)] / W``
    with ``A = sum a_ij B_ij``, ``B = sum b_ij B_ij`` and
    ``W = (1 - zeta) W_S(u, v) + zeta``.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self.patch = mesh.patch
        self._gu, self._Mu = _collocation(self.patch.kv_u)
        self._gv, self._Mv = _collocation(self.patch.kv_v)

    # -- geometry ------------------------------------------------------------
    def interface_point(self, u, v):
        """Piecewise-bilinear interface ``I(u, v)`` built from the mesh nodes."""
        m = self.mesh
        u = np.asarray(u, dtype=float).ravel()
        v = np.asarray(v, dtype=float).ravel()
        bu, bv = self.patch.kv_u.breakpoints, self.patch.kv_v.breakpoints
        i = np.clip(np.searchsorted(bu, u, side="right") - 1, 0, m.NX - 1)
        j = np.clip(np.searchsorted(bv, v, side="right") - 1, 0, m.NY - 1)
        a = (u - bu[i]) / (bu[i + 1] - bu[i])
        b = (v - bv[j]) / (bv[j + 1] - bv[j])
        sh, _ = bilinear_shape(a, b)
        G = m.nodes_grid[:, :, 1]
        corners = np.stack([G[i, j], G[i + 1, j], G[i + 1, j + 1], G[i, j + 1]], axis=1)
        return np.einsum("ma,mak->mk", sh, corners)

    def s_star(self, u, v, zeta):
        u, v, zeta = (np.asarray(t, dtype=float).ravel() for t in np.broadcast_arrays(u, v, zeta))
        return (1 - zeta)[:, None] * self.patch.evaluate(u, v) + zeta[:, None] * self.interface_point(u, v)

    # -- interpolation -------------------------------------------------------
    def collocate(self, vhat):
        """``Pi_p(W vhat)`` for a parametric function ``vhat(u, v, zeta)``.

        Returns the numerator coefficient grids ``(a, b)``.
        """
        U, V = np.meshgrid(self._gu, self._gv, indexing="ij")
        u, v = U.ravel(), V.ravel()
        WS = self.patch.weight_function(u, v)
        top = WS * np.asarray(vhat(u, v, np.zeros_like(u)), dtype=float)
        bot = np.asarray(vhat(u, v, np.ones_like(u)), dtype=float)
        a = self._solve(top.reshape(U.shape))
        b = self._solve(bot.reshape(U.shape))
        return a, b

    def _solve(self, vals):
        c = np.linalg.solve(self._Mu, vals)
        return np.linalg.solve(self._Mv, c.T).T

    def project(self, v):
        """Coefficients of ``Pi_N(v o S*)`` for a physical function ``v(x)``."""
        return self.collocate(lambda u, w, z: v(self.s_star(u, w, z)))

    def evaluate_param(self, coefs, u, v, zeta, derivs=False):
        """Values (and ``d/du, d/dv, d/dzeta``) at parametric points."""
        a, b = coefs
        u, v, zeta = (np.asarray(t, dtype=float).ravel() for t in np.broadcast_arrays(u, v, zeta))
        nd = 1 if derivs else 0
        Bu = basis_matrix(self.patch.kv_u, u, nd, extrapolate=True)
        Bv = basis_matrix(self.patch.kv_v, v, nd, extrapolate=True)
        w = self.patch.weights

        def tp(c, du, dv):
            return np.einsum("mi,ij,mj->m", Bu[du], c, Bv[dv])

        A, B, WS = tp(a, 0, 0), tp(b, 0, 0), tp(w, 0, 0)
        W = (1 - zeta) * WS + zeta
        P = (1 - zeta) * A + zeta * B
        val = P / W
        if not derivs:
            return val
        Pu = (1 - zeta) * tp(a, 1, 0) + zeta * tp(b, 1, 0)
        Pv = (1 - zeta) * tp(a, 0, 1) + zeta * tp(b, 0, 1)
        Pz = B - A
        Wu = (1 - zeta) * tp(w, 1, 0)
        Wv = (1 - zeta) * tp(w, 0, 1)
        Wz = 1.0 - WS
        grads = [(Pd - val * Wd) / W for Pd, Wd in ((Pu, Wu), (Pv, Wv), (Pz, Wz))]
        return val, np.column_stack(grads)

    def element_params(self, eids, xhat):
        """Parametric coordinates of reference points on boundary elements: ``(E, m)`` each."""
        m = self.mesh
        eids = np.atleast_1d(eids)
        if not np.all(m.is_boundary[eids]):
            raise WrongElementKindError("the extruded NURBS space lives on boundary elements only")
        cb = m._cell_bounds[np.searchsorted(m.boundary_ids, eids)]
        xhat = np.atleast_2d(xhat)
        du = cb[:, 1] - cb[:, 0]
        dv = cb[:, 3] - cb[:, 2]
        u = cb[:, 0:1] + xhat[None, :, 0] * du[:, None]
        v = cb[:, 2:3] + xhat[None, :, 1] * dv[:, None]
        z = np.broadcast_to(xhat[None, :, 2], u.shape)
        return u, v, z, du, dv


class _BoundaryFunction:
    """Shared helper for functions defined on boundary elements by reference formulas."""

    mesh = None

    def _finish(self, eids, xhat, vals, gref, gradient):
        if not gradient:
            return vals
        _, J = self.mesh.map_boundary(eids, xhat)
        grad = np.linalg.solve(np.swapaxes(J, -1, -2), gref[..., None])[..., 0]
        return vals, grad


class NurbsProjection(_BoundaryFunction):
    """Element of the extruded NURBS space (output of :func:`nurbs_project`)."""

    def __init__(self, space, coefs):
        self.space = space
        self.mesh = space.mesh
        self.coefs = coefs

    def evaluate(self, eids, xhat, gradient=False):
        eids = np.atleast_1d(eids)
        u, v, z, du, dv = self.space.element_params(eids, xhat)
        E, m = u.shape
        if not gradient:
            return self.space.evaluate_param(self.coefs, u, v, z).reshape(E, m)
        val, g = self.space.evaluate_param(self.coefs, u, v, z, derivs=True)
        gref = g.reshape(E, m, 3) * np.stack([np.broadcast_to(du[:, None], (E, m)),
                                              np.broadcast_to(dv[:, None], (E, m)),
                                              np.ones((E, m))], axis=-1)
        return self._finish(eids, xhat, val.reshape(E, m), gref, True)

    def at_points(self, x):
        """Evaluate at physical points by locating them in the boundary layer."""
        x = np.atleast_2d(x)
        out = np.empty(x.shape[0])
        for k, p in enumerate(x):
            e, xh = locate_point(self.mesh, p, self.mesh.boundary_ids)
            out[k] = self.evaluate([e], xh[None, :])[0, 0]
        return out


class NodalInterpolant:
    """Trilinear nodal interpolant from values at every mesh node.

    On boundary elements this is the interpolant through the eight vertices,
    four of which lie on the curved face.
    """

    def __init__(self, mesh, node_values):
        self.mesh = mesh
        self.node_values = np.asarray(node_values, dtype=float)

    def evaluate(self, eids, xhat, gradient=False):
        eids = np.atleast_1d(eids)
        N, dN = trilinear_shape(xhat)
        C = self.node_values[self.mesh.vertex_ids[eids]]
        vals = C @ N.T
        if not gradient:
            return vals
        gref = np.einsum("mad,ea->emd", dN, C)
        _, J = self.mesh.map_points(eids, xhat)
        return vals, np.linalg.solve(np.swapaxes(J, -1, -2), gref[..., None])[..., 0]


class HybridInterpolant(_BoundaryFunction):
    """Blend ``c1 * Pi_N v + c2 * Pi_1^B v`` on the boundary layer.

    ``evaluate`` gives the blend itself.  :attr:`greville_values` and
    :attr:`vertex_values` are its realisation in the hybrid element space:
    Greville DOFs take the blend's values at the Greville images, and
    interface-vertex DOFs take ``v`` at the vertices so that the result
    joins continuously with the interior nodal interpolant.
    """

    def __init__(self, mesh, v, zeta_tilde=0.5, space=None):
        self.mesh = mesh
        self.zeta_tilde = zeta_tilde
        self.c1, self.c2 = blend_coefficients(zeta_tilde)
        self.space = space or ExtrudedNurbsSpace(mesh)
        self.nurbs = NurbsProjection(self.space, self.space.project(v))
        self.lagrange = lagrange_interpolate(v, mesh, "boundary_layer")
        # Greville images lie on the curved face, where Pi_N v equals v exactly
        # and Pi_1^B v is the bilinear interpolant of the face corners.
        g = mesh.basis.greville_params
        xg = mesh.basis.greville_images
        face = self._face_lagrange(g[:, 0], g[:, 1])
        self.greville_values = self.c1 * np.asarray(v(xg), dtype=float) + self.c2 * face
        n_top = (mesh.NX + 1) * (mesh.NY + 1)
        self.vertex_values = self.lagrange.node_values[n_top:]

    def _face_lagrange(self, u, v):
        m = self.mesh
        bu, bv = m.patch.kv_u.breakpoints, m.patch.kv_v.breakpoints
        i = np.clip(np.searchsorted(bu, u, side="right") - 1, 0, m.NX - 1)
        j = np.clip(np.searchsorted(bv, v, side="right") - 1, 0, m.NY - 1)
        a = (u - bu[i]) / (bu[i + 1] - bu[i])
        b = (v - bv[j]) / (bv[j + 1] - bv[j])
        sh, _ = bilinear_shape(a, b)
        vals = self.lagrange.node_values
        ids = np.stack([m.node_id(i, j, 0), m.node_id(i + 1, j, 0),
                        m.node_id(i + 1, j + 1, 0), m.node_id(i, j + 1, 0)], axis=1)
        return np.einsum("ma,ma->m", sh, vals[ids])

    def evaluate(self, eids, xhat, gradient=False):
        if not gradient:
            return (self.c1 * self.nurbs.evaluate(eids, xhat)
                    + self.c2 * self.lagrange.evaluate(eids, xhat))
        v1, g1 = self.nurbs.evaluate(eids, xhat, True)
        v2, g2 = self.lagrange.evaluate(eids, xhat, True)
        return self.c1 * v1 + self.c2 * v2, self.c1 * g1 + self.c2 * g2

    def to_fe_function(self, dofmap=None):
        """The realisation in the hybrid space, as an :class:`FEFunction` on the whole mesh."""
        dofmap = dofmap or build_dof_map(self.mesh)
        c = np.concatenate([self.greville_values, self.vertex_values])
        return FEFunction(self.mesh, dofmap, c)


def nurbs_project(v, mesh):
    """NURBS projection of ``v`` on the boundary layer of ``mesh``."""
    space = ExtrudedNurbsSpace(mesh)
    return NurbsProjection(space, space.project(v))


def lagrange_interpolate(v, mesh, region="interior"):
    """Trilinear nodal interpolant of ``v``.

    ``region="interior"`` uses the nodes below the curved face (values at
    curved-face nodes are still filled so the object can be evaluated
    anywhere); ``"boundary_layer"`` is the same object, used on boundary
    elements with the curved-face corners as nodes.
    """
    if region not in ("interior", "boundary_layer"):
        raise ValueError(f"unknown region {region!r}")
    return NodalInterpolant(mesh, np.asarray(v(mesh.nodes), dtype=float))


def hybrid_interpolate(v, mesh, zeta_tilde=0.5):
    return HybridInterpolant(mesh, v, zeta_tilde)


def global_interpolate(v, mesh, zeta_tilde=0.5, dofmap=None):
    """Nodal interpolant inside, hybrid interpolant on the boundary layer, as one FE function."""
    return HybridInterpolant(mesh, v, zeta_tilde).to_fe_function(dofmap)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def error_norms(v_exact, v_h, grad_exact=None, elements=None, interior_order=6,
                boundary_order=8, chunk=8):
    """``(L2 error, H1-seminorm error)`` by over-integration.

    ``v_exact``/``grad_exact`` are physical callables (either may be
    ``None`` for zero); ``v_h`` is any object with ``evaluate``/``mesh``
    (or ``None`` for zero, in which case ``mesh`` must be reachable through
    ``elements=(mesh, ids)``).  ``elements`` restricts the integration to
    given element ids.
    """
    if isinstance(elements, tuple):
        mesh, ids = elements
    else:
        mesh = v_h.mesh
        ids = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    l2 = h1 = 0.0
    for bnd, order in ((True, boundary_order), (False, interior_order)):
        group = ids[mesh.is_boundary[ids] == bnd]
        if group.size == 0:
            continue
        rule = gauss_legendre(order, 3).to_unit()
        step = chunk if bnd else 64 * chunk
        for k in range(0, group.size, step):
            eids = group[k:k + step]
            X, J = mesh.map_points(eids, rule.points)
            wd = rule.weights[None, :] * np.linalg.det(J)
            xs = X.reshape(-1, 3)
            E, m = X.shape[:2]
            ve = np.zeros((E, m)) if v_exact is None else np.asarray(v_exact(xs)).reshape(E, m)
            ge = np.zeros((E, m, 3)) if grad_exact is None else np.asarray(grad_exact(xs)).reshape(E, m, 3)
            if v_h is None:
                vh, gh = 0.0, 0.0
            else:
                vh, gh = v_h.evaluate(eids, rule.points, gradient=True)
            l2 += float(np.sum(wd * (ve - vh) ** 2))
            h1 += float(np.sum(wd * np.sum((ge - gh) ** 2, axis=-1)))
    return np.sqrt(l2), np.sqrt(h1)


def locate_point(mesh, x, candidates=None, tol=1e-9):
    """Find an element containing ``x``; returns ``(element id, reference point)``.

    Candidates are tried in order of centroid distance.
    """
    x = np.asarray(x, dtype=float)
    ids = np.arange(mesh.n_elements) if candidates is None else np.asarray(candidates)
    cent = mesh.nodes[mesh.vertex_ids[ids]].mean(axis=1)
    order = np.argsort(np.linalg.norm(cent - x, axis=1))
    for e in ids[order[:27]]:
        try:
            r = mesh.inverse_geometric_map(int(e), x)
        except PointLocationError:
            continue
        if np.all(r.xhat >= -tol) and np.all(r.xhat <= 1 + tol):
            return int(e), np.clip(r.xhat, 0.0, 1.0)
    raise PointLocationError(f"point {x} not found in the mesh")
