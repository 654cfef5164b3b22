"""Galerkin assembly and solution of the Poisson problem ``-lap u = f``."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvertedElementError, SolverError
from .interpolation import error_norms
from .mesh import build_mesh, refine, trilinear_shape
from .quadrature import element_hybrid_rule, gauss_legendre, tensor_rule
from .spaces import FEFunction, HybridLocalBasis, build_dof_map

__all__ = [
    "SparseSystem",
    "SolveResult",
    "ConvergenceReport",
    "ManufacturedSolution",
    "assemble",
    "solve",
    "pcg",
    "manufactured_solve",
    "fit_rate",
    "boundary_gauss_rule",
    "QUAD_MODES",
]

QUAD_MODES = ("gauss", "hybrid", "hybrid2", "diagnostic_no_normalize")
CHUNK = 16


@dataclass
class SparseSystem:
    """Assembled linear system.

    ``matrix``/``rhs`` have Dirichlet rows and columns eliminated (identity
    rows, prescribed values on the right-hand side); ``stiffness``/``load``
    are the raw Galerkin operators before elimination.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: object
    stiffness: sp.csr_matrix
    load: np.ndarray
    assemble_seconds: float = 0.0
    quad_mode: str = "gauss"


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    seconds: float = 0.0


def boundary_gauss_rule(p, q):
    """``(p+1) x (q+1) x 2`` Gauss rule on ``[0,1]^3`` for boundary elements."""
    rules = [gauss_legendre(n, 1) for n in (p + 1, q + 1, 2)]
    return tensor_rule(rules).to_unit()


def _weighted_gram(wd, G):
    """``K[e] = sum_m wd[e, m] G[e, m] G[e, m]^T`` with ``G (E, m, k, 3)``."""
    E, m, k, d = G.shape
    Gt = np.ascontiguousarray(np.swapaxes(G, 1, 2)).reshape(E, k, m * d)
    w = np.repeat(wd, d, axis=1)[:, None, :]
    return np.matmul(Gt * w, np.swapaxes(Gt, 1, 2))


def _physical_grads(G, J):
    """Solve ``J^T g = g_ref`` for all basis functions: ``G (E,m,k,3)``, ``J (E,m,3,3)``."""
    JiT = np.linalg.inv(np.swapaxes(J, -1, -2))
    return np.einsum("emij,emkj->emki", JiT, G)


def _interior_blocks(mesh, ids, f, rule):
    N, dN = trilinear_shape(rule.points)
    X, J = mesh.map_interior(ids, rule.points)
    det = np.linalg.det(J)
    if np.any(det <= 0):
        raise InvertedElementError(f"non-positive Jacobian {det.min():.3e} in interior elements")
    E = ids.size
    G = _physical_grads(np.broadcast_to(dN, (E,) + dN.shape), J)
    wd = rule.weights[None, :] * det
    K = _weighted_gram(wd, G)
    if f is None:
        F = np.zeros((E, 8))
    else:
        fv = np.asarray(f(X.reshape(-1, 3)), dtype=float).reshape(E, -1)
        F = np.einsum("em,em,ma->ea", wd, fv, N)
    return K, F


def _boundary_chunk(mesh, basis, ids, f, quad_mode, rule):
    if quad_mode == "gauss":
        rules = [rule] * ids.size
        pts = rule.points
        N, Gref = basis.evaluate(ids, pts)
        X, J = mesh.map_boundary(ids, pts)
        W = np.broadcast_to(rule.weights, (ids.size, pts.shape[0]))
    else:
        rules = [element_hybrid_rule(basis, e, quad_mode).to_unit() for e in ids]
        parts = [basis.evaluate([e], r.points) for e, r in zip(ids, rules)]
        N = np.concatenate([a for a, _ in parts])
        Gref = np.concatenate([b for _, b in parts])
        maps = [mesh.map_boundary([e], r.points) for e, r in zip(ids, rules)]
        X = np.concatenate([a for a, _ in maps])
        J = np.concatenate([b for _, b in maps])
        W = np.stack([r.weights for r in rules])
    det = np.linalg.det(J)
    if np.any(det <= 0):
        raise InvertedElementError(f"non-positive Jacobian {det.min():.3e} in boundary elements")
    G = _physical_grads(Gref, J)
    wd = W * det
    K = _weighted_gram(wd, G)
    if f is None:
        F = np.zeros(N.shape[::2])
    else:
        fv = np.asarray(f(X.reshape(-1, 3)), dtype=float).reshape(ids.size, -1)
        F = np.einsum("em,em,ema->ea", wd, fv, N)
    return K, F


def assemble(mesh, dofmap, f=None, quad_mode="gauss", workers=1, basis=None):
    """Stiffness matrix and load vector, then Dirichlet elimination.

    Parameters
    ----------
    mesh : HybridMesh
    dofmap : DofMap
    f : callable or None
        Source term ``f(x)`` for ``x`` of shape ``(m, 3)``; ``None`` means zero.
    quad_mode : {"gauss", "hybrid", "hybrid2", "diagnostic_no_normalize"}
        Rule on boundary elements.  ``"gauss"`` uses ``(p+1) x (q+1) x 2``
        Gauss points; the others use the least-squares hybrid rules.
        Interior elements always use 2x2x2 Gauss.
    workers : int
        Threads for element computations.  Results are merged in element
        order, so the matrix does not depend on scheduling.
    """
    if quad_mode not in QUAD_MODES:
        raise ValueError(f"quad_mode must be one of {QUAD_MODES}, got {quad_mode!r}")
    t0 = time.perf_counter()
    basis = basis or HybridLocalBasis(mesh)
    n = dofmap.n_global
    n_cp = dofmap.n_greville
    edofs = dofmap.element_dofs

    g2 = gauss_legendre(2, 3).to_unit()
    brule = boundary_gauss_rule(*mesh.patch.degrees)
    ichunks = [mesh.interior_ids[k:k + 4 * CHUNK * 16] for k in range(0, mesh.n_interior, 4 * CHUNK * 16)]
    bchunks = [mesh.boundary_ids[k:k + CHUNK] for k in range(0, mesh.n_boundary, CHUNK)]

    def do_interior(ids):
        return ids, _interior_blocks(mesh, ids, f, g2)

    def do_boundary(ids):
        return ids, _boundary_chunk(mesh, basis, ids, f, quad_mode, brule)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            ires = list(ex.map(do_interior, ichunks))
            bres = list(ex.map(do_boundary, bchunks))
    else:
        ires = [do_interior(c) for c in ichunks]
        bres = [do_boundary(c) for c in bchunks]

    rows, cols, vals = [], [], []
    load = np.zeros(n)
    for ids, (K, F) in ires:
        D = np.stack([edofs[e] for e in ids])
        rows.append(np.repeat(D, 8, axis=1).ravel())
        cols.append(np.tile(D, (1, 8)).ravel())
        vals.append(K.ravel())
        np.add.at(load, D.ravel(), F.ravel())

    gg = np.zeros((n_cp, n_cp))
    for ids, (K, F) in bres:
        for e, Ke, Fe in zip(ids, K, F):
            d = edofs[e]
            gg += Ke[:n_cp, :n_cp]
            dv = d[n_cp:]
            rows.append(np.repeat(d, 4))
            cols.append(np.tile(dv, d.size))
            vals.append(Ke[:, n_cp:].ravel())
            rows.append(np.repeat(dv, n_cp))
            cols.append(np.tile(d[:n_cp], 4))
            vals.append(Ke[n_cp:, :n_cp].ravel())
            load[d] += Fe
    gi, gj = np.nonzero(gg)
    rows.append(gi)
    cols.append(gj)
    vals.append(gg[gi, gj])

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    keep = v != 0.0
    A = sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=(n, n)).tocsr()
    A.sum_duplicates()
    Ael, bel = _eliminate(A, load, dofmap)
    return SparseSystem(Ael, bel, dofmap, A, load, time.perf_counter() - t0, quad_mode)


def _eliminate(A, b, dofmap):
    mask = dofmap.dirichlet_mask
    if not mask.any():
        return A.copy(), b.copy()
    g = np.where(mask, dofmap.dirichlet_values, 0.0)
    rhs = b - A @ g
    keep = sp.diags((~mask).astype(float))
    Ael = (keep @ A @ keep + sp.diags(mask.astype(float))).tocsr()
    Ael.eliminate_zeros()
    rhs[mask] = g[mask]
    return Ael, rhs


def pcg(A, b, tol=1e-10, maxiter=20000, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``||b - A x|| <= tol * ||b||``.  Raises :class:`SolverError`
    with the residual history if ``maxiter`` is reached.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("matrix has non-positive diagonal entries; not SPD")
    Minv = 1.0 / d
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return SolveResult(np.zeros(n), 0, [0.0])
    r = b - A @ x
    z = Minv * r
    p = z.copy()
    rz = r @ z
    hist = [np.linalg.norm(r) / bn]
    for it in range(1, maxiter + 1):
        if hist[-1] <= tol:
            return SolveResult(x, it - 1, hist)
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("matrix is not positive definite", hist)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        hist.append(np.linalg.norm(r) / bn)
        z = Minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if hist[-1] <= tol:
        return SolveResult(x, maxiter, hist)
    raise SolverError(f"CG did not converge in {maxiter} iterations "
                      f"(relative residual {hist[-1]:.3e})", hist)


def solve(system, tol=1e-10, maxiter=20000):
    """Solve an assembled system; returns a :class:`SolveResult`."""
    t0 = time.perf_counter()
    res = pcg(system.matrix, system.rhs, tol, maxiter)
    res.seconds = time.perf_counter() - t0
    return res


# ---------------------------------------------------------------------------
# Manufactured solutions and convergence studies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact solution with gradient and Laplacian, all vectorised over ``(m, 3)``."""

    name: str
    u: object
    grad: object
    laplacian: object

    def source(self, x):
        return -self.laplacian(x)

    @classmethod
    def sine_product(cls, k=np.pi):
        def u(x):
            return np.sin(k * x[:, 0]) * np.sin(k * x[:, 1]) * np.sin(k * x[:, 2])

        def grad(x):
            s = np.sin(k * x)
            c = np.cos(k * x)
            return k * np.column_stack([c[:, 0] * s[:, 1] * s[:, 2],
                                        s[:, 0] * c[:, 1] * s[:, 2],
                                        s[:, 0] * s[:, 1] * c[:, 2]])

        def lap(x):
            return -3.0 * k ** 2 * u(x)

        return cls("sine_product", u, grad, lap)

    @classmethod
    def smooth_exponential(cls):
        """``exp(x/2 + y/3) cos(z)``: non-zero on every face, harmonic-free."""
        def u(x):
            return np.exp(0.5 * x[:, 0] + x[:, 1] / 3.0) * np.cos(x[:, 2])

        def grad(x):
            e = np.exp(0.5 * x[:, 0] + x[:, 1] / 3.0)
            return np.column_stack([0.5 * e * np.cos(x[:, 2]), e / 3.0 * np.cos(x[:, 2]),
                                    -e * np.sin(x[:, 2])])

        def lap(x):
            return (0.25 + 1.0 / 9.0 - 1.0) * u(x)

        return cls("smooth_exponential", u, grad, lap)

    @classmethod
    def quadratic(cls):
        def u(x):
            return x[:, 0] ** 2 + 0.5 * x[:, 1] ** 2 - x[:, 2] ** 2 + x[:, 0] * x[:, 1] + 1.0

        def grad(x):
            return np.column_stack([2 * x[:, 0] + x[:, 1], x[:, 1] + x[:, 0], -2 * x[:, 2]])

        def lap(x):
            return np.full(x.shape[0], 2.0 + 1.0 - 2.0)

        return cls("quadratic", u, grad, lap)


@dataclass
class LevelResult:
    level: int
    h: float
    ndof: int
    l2: float
    h1: float
    assemble_s: float
    solve_s: float
    iterations: int


@dataclass
class ConvergenceReport:
    geometry: str
    solution: str
    levels: list
    rate_l2: float
    rate_h1: float

    def rows(self):
        out = []
        for k, lv in enumerate(self.levels):
            rl2 = rh1 = float("nan")
            if k > 0:
                prev = self.levels[k - 1]
                rl2 = np.log(prev.l2 / lv.l2) / np.log(prev.h / lv.h)
                rh1 = np.log(prev.h1 / lv.h1) / np.log(prev.h / lv.h)
            out.append((lv.level, lv.h, lv.ndof, lv.l2, lv.h1, rl2, rh1, lv.assemble_s, lv.solve_s))
        return out


def fit_rate(h, err, last=3):
    """Least-squares slope of ``log err`` against ``log h`` over the last ``last`` entries."""
    h = np.asarray(h, dtype=float)[-last:]
    err = np.asarray(err, dtype=float)[-last:]
    if h.size < 2:
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def manufactured_solve(domain, solution, levels=3, resolution=None, quad_mode="gauss",
                       tol=1e-10, workers=1, meshes=None):
    """Solve ``-lap u = f`` with Dirichlet data from ``solution`` on successive levels."""
    results = []
    mesh = None
    for lev in range(levels):
        if meshes is not None:
            mesh = meshes[lev]
        else:
            mesh = build_mesh(domain, resolution) if mesh is None else refine(mesh)
        dm = build_dof_map(mesh, solution.u)
        system = assemble(mesh, dm, solution.source, quad_mode, workers)
        sol = solve(system, tol)
        uh = FEFunction(mesh, dm, sol.x)
        l2, h1 = error_norms(solution.u, uh, solution.grad)
        results.append(LevelResult(lev, mesh.h, dm.n_global, l2, h1, system.assemble_seconds,
                                   sol.seconds, sol.iterations))
    hs = [r.h for r in results]
    return ConvergenceReport(domain.name, solution.name, results,
                             fit_rate(hs, [r.l2 for r in results]),
                             fit_rate(hs, [r.h1 for r in results]))
