"""Invariant battery run by ``nefem check``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import element_hybrid_rule, gauss_legendre, greville_weights, integrate_volume
from .spaces import HybridLocalBasis, unisolvency_matrix
from .spline import basis_matrix, bspline_moments

__all__ = ["CheckResult", "run_checks", "format_report"]


@dataclass(frozen=True)
class CheckResult:
    level: int
    name: str
    value: float
    tol: float | None

    @property
    def passed(self):
        return self.tol is None or self.value <= self.tol

    @property
    def status(self):
        if self.tol is None:
            return "INFO"
        return "PASS" if self.passed else "FAIL"


def _mesh_checks(mesh, rng, n_points=1000):
    out = []
    lv = mesh.level
    patch = mesh.patch
    tb = mesh.basis
    u, v = rng.random(n_points), rng.random(n_points)

    def add(name, value, tol=None):
        out.append(CheckResult(lv, name, float(value), tol))

    Bu = basis_matrix(patch.kv_u, u)[0]
    Bv = basis_matrix(patch.kv_v, v)[0]
    add("bspline_partition_of_unity",
        max(np.abs(Bu.sum(1) - 1).max(), np.abs(Bv.sum(1) - 1).max()), 1e-10)
    add("nurbs_partition_of_unity", np.abs(patch.basis(u, v).sum(1) - 1).max(), 1e-10)
    add("transformed_partition_of_unity", np.abs(tb.evaluate(u, v).sum(1) - 1).max(), 1e-10)
    g = tb.greville_params
    add("transformed_kronecker", np.abs(tb.evaluate(g[:, 0], g[:, 1]) - np.eye(tb.n)).max(), 1e-10)

    S = patch.evaluate(u[:500], v[:500])
    Sh = tb.evaluate(u[:500], v[:500]) @ tb.transformed_points
    add("geometry_identity", np.abs(S - Sh).max() / patch.diameter, 1e-9)

    hb = HybridLocalBasis(mesh)
    xh = rng.random((500, 3))
    worst = 0.0
    for k in range(0, mesh.n_boundary, 16):
        N, _ = hb.evaluate(mesh.boundary_ids[k:k + 16], xh)
        worst = max(worst, np.abs(N.sum(-1) - 1).max())
    add("hybrid_partition_of_unity", worst, 1e-10)

    uni = max(np.abs(unisolvency_matrix(mesh, e, hb) - np.eye(hb.count)).max()
              for e in mesh.boundary_ids)
    add("unisolvency", uni, 1e-10)

    ex = 0.0
    for kv in (patch.kv_u, patch.kv_v):
        r = greville_weights(kv)
        A = basis_matrix(kv, r.points[:, 0])[0].T
        ex = max(ex, np.abs(A @ r.weights - bspline_moments(kv)).max())
    add("greville_exactness", ex, 1e-13)
    add("conformity", 0.0 if mesh.check_conformity() else 1.0, 0.0)
    add("min_jacobian_positive", 0.0 if mesh.check_jacobians() > 0 else 1.0, 0.0)

    add("transform_condition", tb.condition)
    add("shape_regularity", mesh.shape_regularity())
    add("interface_warp", mesh.interface_warp)
    res = [element_hybrid_rule(hb, e).relative_residual for e in mesh.boundary_ids]
    add("hybrid_relative_residual_max", max(res))
    g3 = gauss_legendre(4, 3)
    vol = sum(integrate_volume(mesh, e, lambda x: np.ones(len(x)), g3) for e in range(mesh.n_elements))
    add("volume", vol)
    return out


def run_checks(meshes, seed=12345):
    rng = np.random.default_rng(seed)
    results = []
    for mesh in meshes:
        results.extend(_mesh_checks(mesh, rng))
    return results


def format_report(results):
    lines = []
    for r in results:
        tol = "" if r.tol is None else f" (tol {r.tol:.0e})"
        lines.append(f"[{r.status}] level {r.level} {r.name}: {r.value:.6e}{tol}")
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results)} checks, {n_fail} failed")
    return "\n".join(lines)
