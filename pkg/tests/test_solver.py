import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from nefem.errors import SolverError
from nefem.geometry import bump_cube, cylinder_sector, flat_cube
from nefem.mesh import build_hierarchy, build_mesh
from nefem.solver import (
    ManufacturedSolution,
    assemble,
    fit_rate,
    manufactured_solve,
    pcg,
    solve,
)
from nefem.spaces import FEFunction, build_dof_map
from q1_oracle import assemble_q1, box_grid, solve_dirichlet

# measured on flat_cube (4,4,4), levels 0-1
QUADRATIC_L2 = [0.008715208609730081, 0.002178802146446485]
QUADRATIC_H1 = [0.21650635094610962, 0.10825317547305487]


def linear(x):
    return 1 + x[:, 0] + 2 * x[:, 1] - x[:, 2]


def oracle_permutation(mesh, dofmap):
    """Oracle grid plus the map from package DOFs to oracle nodes."""
    xs = np.linspace(0, 1, mesh.NY + 1)   # patch v runs along x
    ys = np.linspace(0, 1, mesh.NX + 1)
    zs = np.linspace(0, 1, mesh.NZ + 1)
    nodes, hexes = box_grid(xs, ys, zs)
    dist, perm = cKDTree(nodes).query(dofmap.positions)
    assert dist.max() < 1e-12
    assert np.unique(perm).size == perm.size == nodes.shape[0]
    return nodes, hexes, perm


@pytest.fixture(scope="module")
def flat_setup():
    m = build_mesh(flat_cube(), (3, 2, 4))
    sol = ManufacturedSolution.sine_product()
    dm = build_dof_map(m, sol.u)
    system = assemble(m, dm, sol.source)
    nodes, hexes, perm = oracle_permutation(m, dm)
    K, F = assemble_q1(nodes, hexes, sol.source)
    return m, sol, dm, system, nodes, perm, K, F


class TestOracleEquivalence:
    def test_stiffness_matches(self, flat_setup):
        _, _, _, system, _, perm, K, _ = flat_setup
        Kp = K[perm][:, perm]
        assert abs(system.stiffness - Kp).max() <= 1e-12

    def test_load_matches(self, flat_setup):
        _, _, _, system, _, perm, _, F = flat_setup
        np.testing.assert_allclose(system.load, F[perm], atol=1e-12)

    def test_solutions_match(self, flat_setup):
        m, sol, dm, system, nodes, perm, K, F = flat_setup
        x = solve(system, tol=1e-13).x
        fixed = perm[dm.dirichlet_mask]
        u = solve_dirichlet(K, F, fixed, sol.u(nodes[fixed]))
        np.testing.assert_allclose(x, u[perm], atol=1e-8)


class TestOperators:
    def test_constants_in_kernel(self):
        m = build_mesh(bump_cube(), (2, 2, 3))
        dm = build_dof_map(m)
        A = assemble(m, dm).stiffness
        np.testing.assert_allclose(A @ np.ones(dm.n_global), 0.0, atol=1e-11)

    def test_symmetric(self):
        m = build_mesh(cylinder_sector(), (2, 2, 2))
        dm = build_dof_map(m, "homogeneous")
        s = assemble(m, dm)
        assert abs(s.stiffness - s.stiffness.T).max() <= 1e-13
        assert abs(s.matrix - s.matrix.T).max() <= 1e-13

    def test_positive_definite_after_elimination(self):
        m = build_mesh(bump_cube(), (2, 2, 3))
        s = assemble(m, build_dof_map(m, "homogeneous"))
        assert np.linalg.eigvalsh(s.matrix.toarray()).min() > 0

    def test_zero_source_zero_solution(self):
        m = build_mesh(bump_cube(), (2, 2, 3))
        s = assemble(m, build_dof_map(m, "homogeneous"))
        r = solve(s)
        assert r.iterations == 0 and not np.any(r.x)

    def test_identity_system(self):
        b = np.arange(1.0, 6.0)
        r = pcg(sp.identity(5, format="csr"), b)
        np.testing.assert_allclose(r.x, b)
        assert r.iterations == 1

    def test_pcg_matches_direct(self):
        m = build_mesh(bump_cube(), (2, 2, 3))
        sol = ManufacturedSolution.smooth_exponential()
        s = assemble(m, build_dof_map(m, sol.u), sol.source)
        x = solve(s, tol=1e-13).x
        np.testing.assert_allclose(x, spla.spsolve(s.matrix.tocsc(), s.rhs), atol=1e-10)

    def test_residual_zero_on_free_dofs(self):
        m = build_mesh(bump_cube(), (2, 2, 3))
        sol = ManufacturedSolution.smooth_exponential()
        dm = build_dof_map(m, sol.u)
        s = assemble(m, dm, sol.source)
        x = solve(s, tol=1e-13).x
        r = s.load - s.stiffness @ x
        assert np.abs(r[dm.free]).max() <= 1e-10 * np.abs(s.load).max()

    def test_not_spd_detected(self):
        with pytest.raises(SolverError):
            pcg(sp.diags([1.0, -1.0]).tocsr(), np.ones(2))

    def test_maxiter(self):
        m = build_mesh(bump_cube(), (2, 2, 4))
        sol = ManufacturedSolution.sine_product()
        s = assemble(m, build_dof_map(m, sol.u), sol.source)
        with pytest.raises(SolverError) as info:
            solve(s, tol=1e-14, maxiter=2)
        assert len(info.value.residuals) == 3

    def test_workers_give_identical_matrix(self):
        m = build_hierarchy(bump_cube(resolution=(2, 2, 2)), 2)[1]
        sol = ManufacturedSolution.sine_product()
        dm = build_dof_map(m, sol.u)
        a = assemble(m, dm, sol.source, workers=1)
        b = assemble(m, dm, sol.source, workers=3)
        assert (a.matrix != b.matrix).nnz == 0
        np.testing.assert_array_equal(a.rhs, b.rhs)

    def test_unknown_quad_mode(self):
        m = build_mesh(flat_cube(), (1, 1, 2))
        with pytest.raises(ValueError):
            assemble(m, build_dof_map(m), quad_mode="simpson")


class TestPatchTest:
    def test_flat_linear_exact(self):
        m = build_hierarchy(flat_cube(resolution=(2, 3, 2)), 2)[1]
        dm = build_dof_map(m, linear)
        x = solve(assemble(m, dm), tol=1e-13).x
        np.testing.assert_allclose(x, linear(dm.positions), atol=1e-10)

    @pytest.mark.parametrize("make", [bump_cube, cylinder_sector])
    def test_curved_linear_error_shrinks(self, make):
        errs = []
        for m in build_hierarchy(make(resolution=(2, 2, 2)), 2):
            dm = build_dof_map(m, linear)
            x = solve(assemble(m, dm), tol=1e-13).x
            errs.append(np.abs(x - linear(dm.positions)).max())
        assert errs[1] < errs[0] / 4


class TestManufactured:
    def test_quadratic_frozen(self):
        rep = manufactured_solve(flat_cube(), ManufacturedSolution.quadratic(), 2)
        np.testing.assert_allclose([lv.l2 for lv in rep.levels], QUADRATIC_L2, rtol=1e-8)
        np.testing.assert_allclose([lv.h1 for lv in rep.levels], QUADRATIC_H1, rtol=1e-8)

    @pytest.mark.parametrize("name", ["sine_product", "smooth_exponential", "quadratic"])
    def test_laplacian_finite_difference(self, name, rng):
        sol = getattr(ManufacturedSolution, name)()
        x = rng.random((5, 3))
        eps = 1e-4
        lap = np.zeros(5)
        for d in range(3):
            e = np.zeros(3)
            e[d] = eps
            lap += (sol.u(x + e) - 2 * sol.u(x) + sol.u(x - e)) / eps ** 2
            g = (sol.u(x + e) - sol.u(x - e)) / (2 * eps)
            np.testing.assert_allclose(sol.grad(x)[:, d], g, atol=1e-6)
        np.testing.assert_allclose(sol.laplacian(x), lap, atol=1e-5)

    def test_cylinder_rates(self):
        rep = manufactured_solve(cylinder_sector(resolution=(2, 2, 2)),
                                 ManufacturedSolution.smooth_exponential(), 3)
        assert rep.rate_l2 >= 1.8
        assert rep.rate_h1 >= 0.9

    def test_hybrid_two_point_mode_converges_on_bump(self):
        rep = manufactured_solve(bump_cube(resolution=(2, 2, 2)),
                                 ManufacturedSolution.smooth_exponential(), 3, quad_mode="hybrid2")
        assert rep.rate_l2 >= 1.8
        assert rep.rate_h1 >= 0.9

    def test_hybrid_one_point_mode_inconsistent_on_flat(self):
        # the four-point rule cannot integrate the bilinear stiffness entries on a linear patch
        rep = manufactured_solve(flat_cube(resolution=(2, 2, 2)),
                                 ManufacturedSolution.sine_product(), 3, quad_mode="hybrid")
        assert rep.rate_h1 < 0.85

    def test_fit_rate(self):
        h = np.array([0.4, 0.2, 0.1])
        assert fit_rate(h, 3 * h ** 2) == pytest.approx(2.0)

    def test_fe_function_of_solution(self):
        m = build_mesh(flat_cube(), (2, 2, 2))
        dm = build_dof_map(m, linear)
        x = solve(assemble(m, dm), tol=1e-13).x
        uh = FEFunction(m, dm, x)
        v, g = uh.evaluate(m.interior_ids, np.full((1, 3), 0.3), gradient=True)
        np.testing.assert_allclose(g[:, 0], [[1.0, 2.0, -1.0]] * m.n_interior, atol=1e-10)
