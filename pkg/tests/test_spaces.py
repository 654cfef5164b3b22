import numpy as np
import pytest

from nefem.errors import WrongElementKindError
from nefem.geometry import bump_cube, cylinder_sector, flat_cube
from nefem.mesh import build_hierarchy, build_mesh
from nefem.spaces import (
    FEFunction,
    HybridLocalBasis,
    build_dof_map,
    eval_hybrid_basis,
    q1_basis,
    unisolvency_matrix,
)


@pytest.fixture(scope="module")
def bump2():
    return build_hierarchy(bump_cube(resolution=(2, 2, 2)), 2)[1]


class TestHybridBasis:
    def test_partition_of_unity_and_zero_gradient_sum(self, bump2, rng):
        hb = HybridLocalBasis(bump2)
        N, G = hb.evaluate(bump2.boundary_ids, rng.random((100, 3)))
        np.testing.assert_allclose(N.sum(-1), 1.0, atol=1e-12)
        np.testing.assert_allclose(G.sum(-2), 0.0, atol=1e-10)

    def test_interface_has_only_vertex_functions(self, bump2, rng):
        xh = np.column_stack([rng.random((20, 2)), np.ones(20)])
        N, _ = eval_hybrid_basis(bump2, int(bump2.boundary_ids[3]), xh)
        n_cp = bump2.patch.n_cp
        np.testing.assert_allclose(N[:, :n_cp], 0.0, atol=1e-15)
        np.testing.assert_allclose(N[:, n_cp:], q1_basis(xh)[0][:, 4:], atol=1e-15)

    def test_reference_gradient_finite_difference(self, bump2, rng):
        hb = HybridLocalBasis(bump2)
        e = bump2.boundary_ids[:2]
        xh = 0.1 + 0.8 * rng.random((8, 3))
        _, G = hb.evaluate(e, xh)
        eps = 1e-6
        for d in range(3):
            s = np.zeros(3)
            s[d] = eps
            fd = (hb.evaluate(e, xh + s)[0] - hb.evaluate(e, xh - s)[0]) / (2 * eps)
            np.testing.assert_allclose(G[..., d], fd, atol=1e-7)

    def test_interior_elements_rejected(self, bump2):
        with pytest.raises(WrongElementKindError):
            HybridLocalBasis(bump2).evaluate(bump2.interior_ids[:1], np.zeros((1, 3)))


class TestUnisolvency:
    @pytest.mark.parametrize("make", [bump_cube, cylinder_sector])
    def test_identity_matrix(self, make):
        m = build_mesh(make(), (1, 1, 2))
        hb = HybridLocalBasis(m)
        M = unisolvency_matrix(m, int(m.boundary_ids[0]), hb)
        assert M.shape == (hb.count, hb.count)
        np.testing.assert_allclose(M, np.eye(hb.count), atol=1e-12)

    def test_bilinear_patch_gives_eight_functions(self):
        m = build_mesh(flat_cube(), (1, 1, 2))
        M = unisolvency_matrix(m, 0)
        assert M.shape == (8, 8)
        np.testing.assert_allclose(M, np.eye(8), atol=1e-15)

    def test_bump_single_cell_count(self):
        m = build_mesh(bump_cube(), (1, 1, 2))
        assert HybridLocalBasis(m).count == 13


class TestDofMap:
    def test_counts(self):
        m = build_mesh(bump_cube(), (2, 2, 3))
        dm = build_dof_map(m)
        assert dm.n_greville == 16                   # 4 x 4 control points
        assert dm.n_global == 16 + 9 * 3
        assert dm.n_free == dm.n_global
        assert len(dm.element_dofs[0]) == 20
        assert len(dm.element_dofs[int(m.interior_ids[0])]) == 8

    def test_homogeneous_dirichlet(self):
        m = build_mesh(bump_cube(), (2, 2, 3))
        dm = build_dof_map(m, "homogeneous")
        # free vertex nodes: interior node of each of the layers l=1 and l=2
        assert dm.n_free == 2
        free_nodes = dm.vertex_node[dm.free]
        np.testing.assert_allclose(m.nodes[free_nodes][:, :2], 0.5, atol=1e-14)

    def test_callable_dirichlet_values(self):
        m = build_mesh(flat_cube(), (2, 2, 2))
        dm = build_dof_map(m, lambda x: x[:, 0] + 2 * x[:, 2])
        pos = dm.positions[dm.dirichlet_mask]
        np.testing.assert_allclose(dm.dirichlet_values[dm.dirichlet_mask], pos[:, 0] + 2 * pos[:, 2])

    def test_unknown_bc(self):
        with pytest.raises(ValueError):
            build_dof_map(build_mesh(flat_cube(), (2, 2, 2)), "neumann")


class TestFEFunction:
    def test_conforming_across_faces(self, bump2, rng):
        dm = build_dof_map(bump2)
        uh = FEFunction(bump2, dm, rng.standard_normal(dm.n_global))
        NX, NY = bump2.NX, bump2.NY
        ab = rng.random((15, 2))
        for e in bump2.boundary_ids:
            top = uh.evaluate([e], np.column_stack([ab, np.ones(15)]))
            below = uh.evaluate([e + NX * NY], np.column_stack([ab, np.zeros(15)]))
            np.testing.assert_allclose(top, below, atol=1e-12)
            i, j, _ = bump2.ijl[e]
            if i + 1 < NX:
                z = ab[:, 1]
                left = uh.evaluate([e], np.column_stack([np.ones(15), ab[:, 0], z]))
                right = uh.evaluate([e + 1], np.column_stack([np.zeros(15), ab[:, 0], z]))
                np.testing.assert_allclose(left, right, atol=1e-12)

    def test_reproduces_dof_values(self, bump2, rng):
        dm = build_dof_map(bump2)
        c = rng.standard_normal(dm.n_global)
        uh = FEFunction(bump2, dm, c)
        hb = HybridLocalBasis(bump2)
        for e in bump2.boundary_ids[:4]:
            nodes = hb.dof_nodes(int(e))
            inside = np.all((nodes >= 0) & (nodes <= 1), axis=1)
            vals = uh.evaluate([e], nodes[inside])[0]
            np.testing.assert_allclose(vals, c[dm.element_dofs[e]][inside], atol=1e-12)

    def test_constant_has_zero_gradient(self, bump2, rng):
        dm = build_dof_map(bump2)
        uh = FEFunction(bump2, dm, np.full(dm.n_global, 3.0))
        v, g = uh.evaluate(bump2.boundary_ids, rng.random((10, 3)), gradient=True)
        np.testing.assert_allclose(v, 3.0, atol=1e-12)
        np.testing.assert_allclose(g, 0.0, atol=1e-10)

    def test_wrong_length(self, bump2):
        with pytest.raises(ValueError):
            FEFunction(bump2, build_dof_map(bump2), np.zeros(3))
