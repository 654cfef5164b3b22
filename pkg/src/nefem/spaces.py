"""Local bases and global degrees of freedom.

Boundary elements carry the hybrid basis: the ``n_cp`` transformed patch
functions damped linearly towards the interface, ``R_hat_k(a, b) (1 - zeta)``,
followed by the four bilinear interface-vertex functions times ``zeta``.
Interior elements carry the trilinear (Q1) basis.

Global numbering: the ``n_cp`` Greville DOFs come first (flattened patch
index), then one DOF per mesh node below the curved face.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WrongElementKindError
from .mesh import bilinear_shape, trilinear_shape

__all__ = [
    "HybridLocalBasis",
    "DofMap",
    "FEFunction",
    "eval_hybrid_basis",
    "unisolvency_matrix",
    "build_dof_map",
    "q1_basis",
]

q1_basis = trilinear_shape


class HybridLocalBasis:
    """Hybrid basis on the boundary elements of a mesh (``n_cp + 4`` functions)."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.patch_basis = mesh.basis
        self.n_cp = mesh.patch.n_cp

    @property
    def count(self):
        return self.n_cp + 4

    def _cells(self, eids):
        m = self.mesh
        if not np.all(m.is_boundary[eids]):
            raise WrongElementKindError("hybrid basis is only defined on boundary elements")
        return m._cell_bounds[np.searchsorted(m.boundary_ids, eids)]

    def evaluate(self, eids, xhat, extrapolate=False):
        """Values ``(E, m, n_cp+4)`` and reference gradients ``(E, m, n_cp+4, 3)``."""
        eids = np.atleast_1d(eids)
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        cb = self._cells(eids)
        du = cb[:, 1] - cb[:, 0]
        dv = cb[:, 3] - cb[:, 2]
        u = cb[:, 0:1] + xhat[None, :, 0] * du[:, None]
        v = cb[:, 2:3] + xhat[None, :, 1] * dv[:, None]
        E, m = u.shape
        n = self.n_cp
        R, Ru, Rv = (a.reshape(E, m, n) for a in
                     self.patch_basis.evaluate(u.ravel(), v.ravel(), derivs=True, extrapolate=extrapolate))
        z = xhat[None, :, 2:3]
        b, db = bilinear_shape(xhat[:, 0], xhat[:, 1])
        N = np.empty((E, m, n + 4))
        N[..., :n] = R * (1 - z)
        N[..., n:] = b[None] * z
        G = np.empty((E, m, n + 4, 3))
        G[..., :n, 0] = Ru * (du[:, None, None] * (1 - z))
        G[..., :n, 1] = Rv * (dv[:, None, None] * (1 - z))
        G[..., :n, 2] = -R
        G[..., n:, 0] = db[None, :, :, 0] * z
        G[..., n:, 1] = db[None, :, :, 1] * z
        G[..., n:, 2] = b[None]
        return N, G

    def dof_nodes(self, elem):
        """Reference coordinates of the element's DOF nodes, shape ``(n_cp+4, 3)``.

        Greville nodes of other cells fall outside ``[0,1]^2`` in ``(a, b)``.
        """
        cb = self._cells(np.atleast_1d(elem))[0]
        g = self.patch_basis.greville_params
        a = (g[:, 0] - cb[0]) / (cb[1] - cb[0])
        b = (g[:, 1] - cb[2]) / (cb[3] - cb[2])
        greville = np.column_stack([a, b, np.zeros_like(a)])
        verts = np.array([[0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=float)
        return np.vstack([greville, verts])


def eval_hybrid_basis(mesh, elem, xhat):
    """Values and reference gradients of the hybrid basis of one boundary element."""
    N, G = HybridLocalBasis(mesh).evaluate([int(getattr(elem, "index", elem))], xhat)
    return N[0], G[0]


def unisolvency_matrix(mesh, elem, basis=None):
    """Nodal evaluation matrix ``M[j, i] = N_i(a_j)`` of a boundary element."""
    basis = basis or HybridLocalBasis(mesh)
    e = int(getattr(elem, "index", elem))
    nodes = basis.dof_nodes(e)
    N, _ = basis.evaluate([e], nodes, extrapolate=True)
    return N[0]


@dataclass(frozen=True)
class DofMap:
    """Global numbering of Greville and vertex DOFs.

    Attributes
    ----------
    n_global : int
    n_greville : int
    element_dofs : list of ndarray
        Global indices per element, in local basis order.
    kinds : ndarray of str
        ``"greville"`` or ``"vertex"`` per global DOF.
    positions : ndarray, shape (n_global, 3)
        Physical DOF locations (Greville images and nodes).
    dirichlet_mask : ndarray of bool
    dirichlet_values : ndarray
    vertex_node : ndarray of int
        Mesh node of each vertex DOF (-1 for Greville DOFs).
    """

    n_global: int
    n_greville: int
    element_dofs: list
    kinds: np.ndarray
    positions: np.ndarray
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray
    vertex_node: np.ndarray
    node_dof: np.ndarray

    @property
    def free(self):
        return np.flatnonzero(~self.dirichlet_mask)

    @property
    def n_free(self):
        return int(np.count_nonzero(~self.dirichlet_mask))


def build_dof_map(mesh, bc=None):
    """Global DOF numbering with optional Dirichlet data on the whole boundary.

    Parameters
    ----------
    mesh : HybridMesh
    bc : None, "homogeneous", or callable
        ``None`` leaves every DOF free.  ``"homogeneous"`` fixes all boundary
        DOFs to zero.  A callable ``g(x)`` (``x`` of shape ``(m, 3)``) fixes
        Greville DOFs to ``g`` at the Greville images and boundary vertex
        DOFs to ``g`` at the nodes.
    """
    n_cp = mesh.patch.n_cp
    NX, NY, NZ = mesh.NX, mesh.NY, mesh.NZ
    n_top = (NX + 1) * (NY + 1)
    n_vert = mesh.n_nodes - n_top
    n = n_cp + n_vert
    node_dof = np.full(mesh.n_nodes, -1)
    node_dof[n_top:] = n_cp + np.arange(n_vert)
    vertex_node = np.concatenate([np.full(n_cp, -1), np.arange(n_top, mesh.n_nodes)])
    kinds = np.array(["greville"] * n_cp + ["vertex"] * n_vert)
    positions = np.vstack([mesh.basis.greville_images, mesh.nodes[n_top:]])

    greville = np.arange(n_cp)
    elem_dofs = []
    for e in range(mesh.n_elements):
        vid = mesh.vertex_ids[e]
        if mesh.is_boundary[e]:
            elem_dofs.append(np.concatenate([greville, node_dof[vid[4:]]]))
        else:
            elem_dofs.append(node_dof[vid])

    mask = np.zeros(n, dtype=bool)
    values = np.zeros(n)
    if bc is not None:
        I, J, L = np.meshgrid(np.arange(NX + 1), np.arange(NY + 1), np.arange(NZ + 1), indexing="ij")
        on_bdry = (I == 0) | (I == NX) | (J == 0) | (J == NY) | (L == 0) | (L == NZ)
        ids = mesh.node_id(I[on_bdry], J[on_bdry], L[on_bdry])
        ids = ids[ids >= n_top]
        mask[:n_cp] = True
        mask[node_dof[ids]] = True
        if callable(bc):
            values[mask] = np.asarray(bc(positions[mask]), dtype=float)
        elif bc != "homogeneous":
            raise ValueError(f"unknown boundary condition {bc!r}")
    for a in (kinds, positions, mask, values, vertex_node, node_dof):
        a.setflags(write=False)
    return DofMap(n, n_cp, elem_dofs, kinds, positions, mask, values, vertex_node, node_dof)


class FEFunction:
    """Discrete function ``sum_k c_k phi_k`` on a mesh.

    Evaluation is by element and reference coordinates, so no point
    location is needed for quadrature-based norms.  On boundary elements the
    Greville part is converted once to original NURBS coefficients and
    evaluated with the locally supported basis.
    """

    def __init__(self, mesh, dofmap, coefs, basis=None):
        self.mesh = mesh
        self.dofmap = dofmap
        self.coefs = np.asarray(coefs, dtype=float)
        if self.coefs.shape != (dofmap.n_global,):
            raise ValueError(f"expected {dofmap.n_global} coefficients, got {self.coefs.shape}")
        n_cp = dofmap.n_greville
        n1, n2 = mesh.patch.shape
        c = mesh.basis.control_coefficients(self.coefs[:n_cp])
        self._surface_coefs = c.reshape(n2, n1).T

    def evaluate(self, eids, xhat, gradient=False):
        """Values ``(E, m)`` (and physical gradients ``(E, m, 3)``) on homogeneous element lists."""
        eids = np.atleast_1d(eids)
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        mesh = self.mesh
        C = self.coefs[np.stack([self.dofmap.element_dofs[e] for e in eids])]
        if mesh.is_boundary[eids].all():
            cb = mesh._cell_bounds[np.searchsorted(mesh.boundary_ids, eids)]
            du = cb[:, 1] - cb[:, 0]
            dv = cb[:, 3] - cb[:, 2]
            u = cb[:, 0:1] + xhat[None, :, 0] * du[:, None]
            v = cb[:, 2:3] + xhat[None, :, 1] * dv[:, None]
            E, m = u.shape
            fs, fu, fv = (a.reshape(E, m) for a in
                          mesh.patch.field(self._surface_coefs, u.ravel(), v.ravel(), derivs=True))
            b, db = bilinear_shape(xhat[:, 0], xhat[:, 1])
            top = C[:, -4:]
            B = top @ b.T
            z = xhat[None, :, 2]
            vals = (1 - z) * fs + z * B
            if not gradient:
                return vals
            gref = np.stack([(1 - z) * fu * du[:, None] + z * np.einsum("mad,ea->emd", db, top)[..., 0],
                             (1 - z) * fv * dv[:, None] + z * np.einsum("mad,ea->emd", db, top)[..., 1],
                             B - fs], axis=-1)
        elif not mesh.is_boundary[eids].any():
            N0, G0 = trilinear_shape(xhat)
            vals = C @ N0.T
            if not gradient:
                return vals
            gref = np.einsum("mad,ea->emd", G0, C)
        else:
            raise WrongElementKindError("evaluate needs elements of a single kind")
        _, J = mesh.map_points(eids, xhat)
        grad = np.linalg.solve(np.swapaxes(J, -1, -2), gref[..., None])[..., 0]
        return vals, grad
