"""Structured hexahedral meshes of extruded-patch domains.

Nodes form an ``(NX+1, NY+1, NZ+1)`` grid.  Layer ``l = 0`` lies on the
curved face, layer ``l = NZ`` on the planar bottom.  Element ``(i, j, l)``
spans nodes ``i..i+1, j..j+1, l..l+1``; its reference coordinates are
``(xi, eta, zeta)`` in ``[0, 1]^3`` with ``xi`` along ``i``, ``eta`` along
``j`` and ``zeta`` along increasing ``l``.  Local vertex order::

    0:(0,0,0) 1:(1,0,0) 2:(1,1,0) 3:(0,1,0) 4:(0,0,1) 5:(1,0,1) 6:(1,1,1) 7:(0,1,1)

Layer-0 elements are boundary elements: their ``zeta = 0`` face is the image
of one Bezier cell of the patch, and their map blends that face linearly
with the bilinear interface face at ``zeta = 1``.  All other elements are
trilinear.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    GeometryError,
    InvertedElementError,
    PointLocationError,
    UnsupportedTopologyError,
    WrongElementKindError,
)
from .geometry import ExtrudedDomain
from .nurbs import TransformedPatchBasis
from .quadrature import gauss_legendre

__all__ = [
    "HexElement",
    "HybridMesh",
    "GeometricMapEval",
    "InverseMapResult",
    "LocalNurbsMap",
    "build_mesh",
    "refine",
    "classify_elements",
    "trilinear_shape",
    "bilinear_shape",
    "HEX_FACES",
    "VERTEX_REF",
]

VERTEX_REF = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                       [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=float)
HEX_FACES = np.array([[0, 1, 2, 3], [4, 5, 6, 7], [0, 1, 5, 4],
                      [1, 2, 6, 5], [2, 3, 7, 6], [3, 0, 4, 7]])
INSIDE_MARGIN = 0.05


def bilinear_shape(xi, eta):
    """Bilinear shape functions on ``[0,1]^2`` in vertex order 0..3.

    Returns values ``(m, 4)`` and derivatives ``(m, 4, 2)``.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    a = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=-1)
    da = np.stack([
        np.stack([-(1 - eta), -(1 - xi)], axis=-1),
        np.stack([(1 - eta), -xi], axis=-1),
        np.stack([eta, xi], axis=-1),
        np.stack([-eta, (1 - xi)], axis=-1),
    ], axis=-2)
    return a, da


def trilinear_shape(xhat):
    """Trilinear shape functions at points ``(m, 3)``: values ``(m, 8)``, gradients ``(m, 8, 3)``."""
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    b, db = bilinear_shape(xhat[:, 0], xhat[:, 1])
    z = xhat[:, 2:3]
    N = np.concatenate([b * (1 - z), b * z], axis=1)
    dN = np.zeros(N.shape + (3,))
    dN[:, :4, :2] = db * (1 - z)[:, :, None]
    dN[:, 4:, :2] = db * z[:, :, None]
    dN[:, :4, 2] = -b
    dN[:, 4:, 2] = b
    return N, dN


@dataclass(frozen=True)
class HexElement:
    """One hexahedron of a :class:`HybridMesh`.

    ``bezier_cell`` is ``((u0, u1), (v0, v1))`` for boundary elements and
    ``None`` otherwise; ``cell_index`` numbers the Bezier cells with ``u``
    fastest.
    """

    index: int
    kind: str
    ijl: tuple
    vertex_ids: tuple
    bezier_cell: tuple | None = None
    cell_index: int | None = None

    @property
    def is_boundary(self):
        return self.kind == "boundary"


@dataclass(frozen=True)
class GeometricMapEval:
    point: np.ndarray     # (m, 3)
    jacobian: np.ndarray  # (m, 3, 3), columns d/dxi, d/deta, d/dzeta
    det: np.ndarray       # (m,)


@dataclass(frozen=True)
class InverseMapResult:
    xhat: np.ndarray
    iterations: int
    inside: bool
    residual: float


class LocalNurbsMap:
    """Pull-back of the surface to one Bezier cell: ``(a, b) -> S(u0 + a du, v0 + b dv)``."""

    def __init__(self, patch, cell):
        self.patch = patch
        (self.u0, self.u1), (self.v0, self.v1) = cell
        self.cell = cell

    def params(self, a, b):
        return (self.u0 + np.asarray(a, dtype=float) * (self.u1 - self.u0),
                self.v0 + np.asarray(b, dtype=float) * (self.v1 - self.v0))

    def __call__(self, a, b):
        return self.patch.evaluate(*self.params(a, b))

    def jacobian(self, a, b):
        J = self.patch.jacobian(*self.params(a, b))
        return J * np.array([self.u1 - self.u0, self.v1 - self.v0])


def classify_elements(vertex_ids, curved_node_mask):
    """Label hexahedra as ``"boundary"`` (one curved face) or ``"interior"``.

    Parameters
    ----------
    vertex_ids : array_like of int, shape (E, 8)
    curved_node_mask : array_like of bool
        True for nodes lying on the curved face.

    Raises
    ------
    UnsupportedTopologyError
        If an element has two or more faces made entirely of curved nodes.
    GeometryError
        If an element touches the curved face without owning a full face.
    """
    vid = np.asarray(vertex_ids)
    mask = np.asarray(curved_node_mask, dtype=bool)
    on = mask[vid]                                   # (E, 8)
    full = on[:, HEX_FACES].all(axis=2)              # (E, 6)
    n_faces = full.sum(axis=1)
    bad = np.flatnonzero(n_faces >= 2)
    if bad.size:
        raise UnsupportedTopologyError(
            f"element(s) {bad[:5].tolist()} have {int(n_faces[bad[0]])} curved faces; at most one is supported")
    touching = on.any(axis=1) & (n_faces == 0)
    if np.any(touching):
        raise GeometryError(
            f"element(s) {np.flatnonzero(touching)[:5].tolist()} touch the curved face without a full face")
    return np.where(n_faces == 1, "boundary", "interior")


def _insert_uniform(patch, n_u, n_v):
    """Refine a patch to ``n_u x n_v`` equal Bezier cells."""
    nu, nv = patch.kv_u.n_cells, patch.kv_v.n_cells
    if (nu, nv) == (n_u, n_v):
        return patch
    if nu == 1 and nv == 1:
        for k in range(1, n_u):
            patch = patch.insert_knot_u(k / n_u)
        for k in range(1, n_v):
            patch = patch.insert_knot_v(k / n_v)
        return patch
    try:
        return patch.refine_to(n_u, n_v)
    except Exception as exc:
        raise GeometryError(f"patch with {nu}x{nv} cells cannot match resolution {n_u}x{n_v}") from exc


class HybridMesh:
    """Boundary-layer / interior hexahedral mesh with element maps.

    Use :func:`build_mesh` and :func:`refine` to construct instances.
    """

    def __init__(self, domain, patch, nodes, level, h0, require_planar_interface=False,
                 planar_tol=1e-10):
        self.domain = domain
        self.patch = patch
        self.nodes_grid = np.asarray(nodes, dtype=float)
        self.nodes_grid.setflags(write=False)
        self.NX, self.NY, self.NZ = (s - 1 for s in self.nodes_grid.shape[:3])
        if self.NZ < 2:
            raise GeometryError("need at least two layers (one boundary, one interior)")
        if (patch.kv_u.n_cells, patch.kv_v.n_cells) != (self.NX, self.NY):
            raise GeometryError("patch Bezier cells do not match the boundary element grid")
        self.level = level
        self.h0 = h0
        self.require_planar_interface = require_planar_interface
        self.planar_tol = planar_tol
        self.nodes = self.nodes_grid.transpose(2, 1, 0, 3).reshape(-1, 3)  # i fastest
        self._build_elements()
        self.basis = TransformedPatchBasis(patch)
        self._check_interface()

    # -- topology ----------------------------------------------------------
    def node_id(self, i, j, l):
        return i + (self.NX + 1) * (j + (self.NY + 1) * l)

    def _build_elements(self):
        NX, NY, NZ = self.NX, self.NY, self.NZ
        i, j, l = np.meshgrid(np.arange(NX), np.arange(NY), np.arange(NZ), indexing="ij")
        i, j, l = (a.transpose(2, 1, 0).ravel() for a in (i, j, l))
        off = VERTEX_REF.astype(int)
        vid = self.node_id(i[:, None] + off[:, 0], j[:, None] + off[:, 1], l[:, None] + off[:, 2])
        curved = np.zeros(self.nodes.shape[0], dtype=bool)
        curved[: (NX + 1) * (NY + 1)] = True
        kinds = classify_elements(vid, curved)
        bu, bv = self.patch.kv_u.breakpoints, self.patch.kv_v.breakpoints
        elems = []
        for e in range(vid.shape[0]):
            if kinds[e] == "boundary":
                cell = ((bu[i[e]], bu[i[e] + 1]), (bv[j[e]], bv[j[e] + 1]))
                ci = int(i[e] + NX * j[e])
            else:
                cell, ci = None, None
            elems.append(HexElement(e, str(kinds[e]), (int(i[e]), int(j[e]), int(l[e])),
                                    tuple(int(v) for v in vid[e]), cell, ci))
        self.elements = elems
        self.vertex_ids = vid
        self.vertex_ids.setflags(write=False)
        self.ijl = np.column_stack([i, j, l])
        self.is_boundary = kinds == "boundary"
        self.boundary_ids = np.flatnonzero(self.is_boundary)
        self.interior_ids = np.flatnonzero(~self.is_boundary)
        cells = np.array([e.bezier_cell for e in elems if e.is_boundary]).reshape(-1, 4)
        self._cell_bounds = cells  # (n_boundary, 4): u0, u1, v0, v1

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_boundary(self):
        return int(self.boundary_ids.size)

    @property
    def n_interior(self):
        return int(self.interior_ids.size)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    def vertices(self, e):
        return self.nodes[self.vertex_ids[e]]

    # -- sizes -------------------------------------------------------------
    @property
    def h(self):
        """Nominal mesh size, halved at each refinement."""
        return self.h0 * 0.5 ** self.level

    @cached_property
    def element_diameters(self):
        X = self.nodes[self.vertex_ids]                     # (E, 8, 3)
        d = np.linalg.norm(X[:, :, None, :] - X[:, None, :, :], axis=-1)
        return d.max(axis=(1, 2))

    @property
    def h_max(self):
        return float(self.element_diameters.max())

    def shape_regularity(self):
        """Largest ratio of element diameter to shortest edge."""
        X = self.nodes[self.vertex_ids]
        edges = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
                 (0, 4), (1, 5), (2, 6), (3, 7)]
        lens = np.stack([np.linalg.norm(X[:, a] - X[:, b], axis=1) for a, b in edges], axis=1)
        return float(np.max(self.element_diameters / lens.min(axis=1)))

    # -- maps --------------------------------------------------------------
    def local_nurbs_map(self, elem):
        elem = self._elem(elem)
        if not elem.is_boundary:
            raise WrongElementKindError(f"element {elem.index} is interior; it has no NURBS face")
        return LocalNurbsMap(self.patch, elem.bezier_cell)

    def _elem(self, elem):
        return self.elements[elem] if isinstance(elem, (int, np.integer)) else elem

    def map_boundary(self, eids, xhat, extrapolate=False):
        """Blended maps of boundary elements ``eids`` at reference points ``xhat``.

        Returns points ``(E, m, 3)`` and Jacobians ``(E, m, 3, 3)``.
        """
        eids = np.atleast_1d(eids)
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        if not np.all(self.is_boundary[eids]):
            raise WrongElementKindError("map_boundary called with interior elements")
        cb = self._cell_bounds[np.searchsorted(self.boundary_ids, eids)]
        du = cb[:, 1] - cb[:, 0]
        dv = cb[:, 3] - cb[:, 2]
        u = cb[:, 0:1] + xhat[None, :, 0] * du[:, None]
        v = cb[:, 2:3] + xhat[None, :, 1] * dv[:, None]
        E, m = u.shape
        S, Su, Sv = self.patch.field(self.patch.control_points, u.ravel(), v.ravel(),
                                     derivs=True, extrapolate=extrapolate)
        S, Su, Sv = (a.reshape(E, m, 3) for a in (S, Su, Sv))
        top = self.nodes[self.vertex_ids[eids][:, 4:]]      # (E, 4, 3)
        b, db = bilinear_shape(xhat[:, 0], xhat[:, 1])
        B = np.einsum("ma,eak->emk", b, top)
        dB = np.einsum("mad,eak->emkd", db, top)
        z = xhat[None, :, 2:3]
        X = (1 - z) * S + z * B
        J = np.empty((E, m, 3, 3))
        J[..., 0] = (1 - z) * Su * du[:, None, None] + z * dB[..., 0]
        J[..., 1] = (1 - z) * Sv * dv[:, None, None] + z * dB[..., 1]
        J[..., 2] = B - S
        return X, J

    def map_interior(self, eids, xhat):
        """Trilinear maps; same return layout as :meth:`map_boundary`."""
        eids = np.atleast_1d(eids)
        N, dN = trilinear_shape(xhat)
        Xv = self.nodes[self.vertex_ids[eids]]
        return np.einsum("ma,eak->emk", N, Xv), np.einsum("mad,eak->emkd", dN, Xv)

    def map_points(self, eids, xhat, extrapolate=False):
        """Maps for a homogeneous list of elements (all boundary or all interior)."""
        eids = np.atleast_1d(eids)
        kinds = self.is_boundary[eids]
        if kinds.all():
            return self.map_boundary(eids, xhat, extrapolate)
        if not kinds.any():
            return self.map_interior(eids, xhat)
        raise WrongElementKindError("map_points needs elements of a single kind")

    def geometric_map(self, elem, xhat, check=True):
        """Point, Jacobian and determinant of one element's map at ``xhat (m, 3)``."""
        elem = self._elem(elem)
        X, J = self.map_points([elem.index], xhat)
        det = np.linalg.det(J[0])
        if check and np.any(det <= 0):
            raise InvertedElementError(
                f"element {elem.index}: non-positive Jacobian determinant {det.min():.3e}")
        return GeometricMapEval(X[0], J[0], det)

    def trilinear_map(self, elem, xhat):
        """Plain trilinear map through the element's vertices (any element kind)."""
        elem = self._elem(elem)
        X, J = self.map_interior([elem.index], xhat)
        return GeometricMapEval(X[0], J[0], np.linalg.det(J[0]))

    def inverse_geometric_map(self, elem, x, tol=1e-10, maxiter=50):
        """Locate ``x`` in reference coordinates by damped Newton iteration.

        Starts at the element centre; a step is halved while it does not
        decrease the residual.  ``inside`` is False when the converged point
        lies outside ``[-0.05, 1.05]^3``.
        """
        elem = self._elem(elem)
        x = np.asarray(x, dtype=float)
        hq = self.element_diameters[elem.index]
        target = tol * hq
        xh = np.full(3, 0.5)

        def resid(p):
            X, J = self.map_points([elem.index], p[None, :], extrapolate=True)
            return X[0, 0] - x, J[0, 0]

        r, J = resid(xh)
        nr = np.linalg.norm(r)
        it = 0
        while nr > target:
            if it >= maxiter:
                raise PointLocationError(
                    f"Newton did not converge in {maxiter} iterations (residual {nr:.3e})")
            it += 1
            try:
                step = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError as exc:
                raise PointLocationError("singular Jacobian during point location") from exc
            t = 1.0
            while True:
                cand = xh + t * step
                rc, Jc = resid(cand)
                nc = np.linalg.norm(rc)
                if nc < nr or t < 1e-6:
                    break
                t *= 0.5
            if nc >= nr and nr > target:
                raise PointLocationError(f"Newton stagnated at residual {nr:.3e}")
            xh, r, J, nr = cand, rc, Jc, nc
        inside = bool(np.all(xh >= -INSIDE_MARGIN) and np.all(xh <= 1 + INSIDE_MARGIN))
        return InverseMapResult(xh, it, inside, float(nr))

    # -- checks ------------------------------------------------------------
    def _check_interface(self):
        top = self.nodes[self.vertex_ids[self.boundary_ids][:, 4:]]
        warp = _face_warp(top)
        self.interface_warp = float(warp.max()) if warp.size else 0.0
        if self.require_planar_interface:
            bad = warp > self.planar_tol * np.maximum(self.element_diameters[self.boundary_ids], 1.0)
            if np.any(bad):
                raise GeometryError(
                    f"interface faces are not planar (max warp {warp.max():.3e})")

    def check_jacobians(self, n=3):
        """Minimum Jacobian determinant over an ``n^3`` Gauss grid, all elements."""
        rule = gauss_legendre(n, 3).to_unit()
        dmin = np.inf
        for ids in (self.boundary_ids, self.interior_ids):
            if ids.size:
                _, J = self.map_points(ids, rule.points)
                dmin = min(dmin, float(np.linalg.det(J).min()))
        if dmin <= 0:
            raise InvertedElementError(f"non-positive Jacobian determinant {dmin:.3e}")
        return dmin

    def check_conformity(self):
        """Every interior face is shared by exactly two elements with equal vertex sets."""
        faces = {}
        for e in range(self.n_elements):
            for f in HEX_FACES:
                key = tuple(sorted(self.vertex_ids[e, f].tolist()))
                faces.setdefault(key, []).append(e)
        counts = np.array([len(v) for v in faces.values()])
        return bool(np.all(counts <= 2))

    def report(self):
        lines = [
            f"geometry: {self.domain.name}",
            f"level: {self.level}",
            f"resolution: {self.NX} x {self.NY} x {self.NZ}",
            f"elements: {self.n_elements} (boundary {self.n_boundary}, interior {self.n_interior})",
            f"nodes: {self.n_nodes}",
            f"patch control points: {self.patch.n_cp}",
            f"h (nominal): {self.h:.6g}",
            f"h (max diameter): {self.h_max:.6g}",
            f"shape regularity: {self.shape_regularity():.4g}",
            f"interface warp: {self.interface_warp:.3e}",
            f"transform condition: {self.basis.condition:.4g}",
        ]
        return "\n".join(lines)


def _face_warp(quads):
    """Distance of the fourth vertex from the plane of the first three, per face."""
    a, b, c, d = (quads[:, k] for k in range(4))
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n, axis=1)
    nn = np.where(nn > 0, nn, 1.0)
    return np.abs(np.einsum("ek,ek->e", d - a, n)) / nn


def _oriented_patch(domain):
    patch = domain.patch
    ax = domain.axis
    g = np.array([0.5])
    S = patch.evaluate(g, g)[0]
    J = patch.jacobian(g, g)[0]
    inward = np.zeros(3)
    inward[ax] = np.sign(domain.bottom - S[ax])
    if np.dot(np.cross(J[:, 0], J[:, 1]), inward) < 0:
        patch = patch.reversed_u()
    return patch


def build_mesh(domain, resolution=None, require_planar_interface=False):
    """Level-0 mesh of an :class:`ExtrudedDomain`.

    Parameters
    ----------
    domain : ExtrudedDomain
    resolution : (nx, ny, nz), optional
        Boundary elements per patch direction and number of element layers.
        Defaults to ``domain.resolution``.  ``nz`` must be at least 2.
    require_planar_interface : bool
        Raise :class:`GeometryError` if any boundary element's interface face
        is warped (only flat and cylindrical patches pass).
    """
    if not isinstance(domain, ExtrudedDomain):
        raise TypeError("domain must be an ExtrudedDomain")
    nx, ny, nz = (int(r) for r in (resolution or domain.resolution))
    if min(nx, ny) < 1:
        raise GeometryError("resolution must be positive")
    if nz < 2:
        raise GeometryError("depth resolution must be at least 2 (one boundary and one interior layer)")
    patch = _insert_uniform(_oriented_patch(domain), nx, ny)
    bu, bv = patch.kv_u.breakpoints, patch.kv_v.breakpoints
    U, V = np.meshgrid(bu, bv, indexing="ij")
    top = patch.evaluate(U.ravel(), V.ravel()).reshape(nx + 1, ny + 1, 3)
    bottom = top.copy()
    bottom[..., domain.axis] = domain.bottom
    t = np.linspace(0.0, 1.0, nz + 1)
    nodes = (1 - t)[None, None, :, None] * top[:, :, None, :] + t[None, None, :, None] * bottom[:, :, None, :]
    X = nodes
    # diameter of the largest element at level 0, used as nominal h
    corners = np.stack([X[:-1, :-1, :-1], X[1:, :-1, :-1], X[1:, 1:, :-1], X[:-1, 1:, :-1],
                        X[:-1, :-1, 1:], X[1:, :-1, 1:], X[1:, 1:, 1:], X[:-1, 1:, 1:]], axis=3)
    d = np.linalg.norm(corners[..., :, None, :] - corners[..., None, :, :], axis=-1)
    h0 = float(d.max())
    mesh = HybridMesh(domain, patch, nodes, 0, h0, require_planar_interface)
    mesh.check_jacobians()
    return mesh


def refine(mesh):
    """Uniform refinement: every element is split into eight.

    The patch gets one new knot at each Bezier-cell midpoint in both
    directions; new nodes are images of the old element maps, so the curved
    face stays exact and the layer of boundary elements keeps one-element
    thickness (the inner halves of old boundary elements become interior).
    """
    NX, NY, NZ = mesh.NX, mesh.NY, mesh.NZ
    I, J, L = np.meshgrid(np.arange(2 * NX + 1), np.arange(2 * NY + 1), np.arange(2 * NZ + 1),
                          indexing="ij")
    i = np.minimum(I // 2, NX - 1)
    j = np.minimum(J // 2, NY - 1)
    l = np.minimum(L // 2, NZ - 1)
    ref = np.stack([(I - 2 * i) / 2.0, (J - 2 * j) / 2.0, (L - 2 * l) / 2.0], axis=-1)
    eid = i + NX * (j + NY * l)
    new = np.empty(I.shape + (3,))
    # group by the 27 possible reference offsets so maps are evaluated in batches
    flat_ref = ref.reshape(-1, 3)
    flat_eid = eid.ravel()
    out = new.reshape(-1, 3)
    keys = np.round(flat_ref * 2).astype(int) @ np.array([9, 3, 1])
    for key in np.unique(keys):
        sel = np.flatnonzero(keys == key)
        xh = flat_ref[sel[0]][None, :]
        es = flat_eid[sel]
        bnd = mesh.is_boundary[es]
        if bnd.any():
            X, _ = mesh.map_boundary(es[bnd], xh)
            out[sel[bnd]] = X[:, 0]
        if (~bnd).any():
            X, _ = mesh.map_interior(es[~bnd], xh)
            out[sel[~bnd]] = X[:, 0]
    patch = mesh.patch.refine_uniform()
    fine = HybridMesh(mesh.domain, patch, new, mesh.level + 1, mesh.h0,
                      mesh.require_planar_interface, mesh.planar_tol)
    fine.check_jacobians()
    return fine


def build_hierarchy(domain, levels, resolution=None):
    """Meshes for levels ``0..levels-1``."""
    meshes = [build_mesh(domain, resolution)]
    for _ in range(levels - 1):
        meshes.append(refine(meshes[-1]))
    return meshes
