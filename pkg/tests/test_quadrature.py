import warnings
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from nefem.errors import DegeneratePointError, NegativeWeightWarning, QuadratureError
from nefem.geometry import bump_cube, cylinder_sector, flat_cube
from nefem.mesh import build_hierarchy, build_mesh
from nefem.quadrature import (
    QuadRule,
    bezier_greville_rule,
    dense_surface_rule,
    element_hybrid_rule,
    gauss_legendre,
    greville_weights,
    hybrid_moments,
    hybrid_points,
    hybrid_weights,
    integrate_surface,
    integrate_volume,
)
from nefem.spaces import HybridLocalBasis
from nefem.spline import KnotVector, basis_matrix, bspline_moments

# measured once with order-12 moments (cross-checked against order 16)
BUMP_SINGLE_CELL_RESIDUALS = [0.06290535840347461, 0.032561759164614075, 0.02934002172222521]
FLAT_LINEAR_RESIDUAL = 0.6181225377691005


def _exact_greville_weights(knots, p):
    """Greville weights in rational arithmetic from sympy's B-splines."""
    sympy = pytest.importorskip("sympy")
    t = [sympy.Rational(Fraction(k).limit_denominator(10 ** 6)) for k in knots]
    x = sympy.Symbol("x")
    basis = sympy.bspline_basis_set(p, t, x)
    n = len(basis)
    g = [sum(t[i + 1:i + p + 1]) / p for i in range(n)]
    # right-continuous evaluation, with the last function closed at the right end
    A = sympy.zeros(n, n)
    for j, Nj in enumerate(basis):
        for i, gi in enumerate(g):
            val = Nj.subs(x, gi)
            if gi == t[-1]:
                val = 1 if j == n - 1 else 0
            A[j, i] = val
    b = sympy.Matrix([(t[j + p + 1] - t[j]) / (p + 1) for j in range(n)])
    return [float(w) for w in A.LUsolve(b)]


class TestGauss:
    def test_single_point_2d(self):
        r = gauss_legendre(1, 2)
        np.testing.assert_allclose(r.points, [[0.0, 0.0]])
        np.testing.assert_allclose(r.weights, [4.0])

    def test_two_point(self):
        r = gauss_legendre(2, 1)
        np.testing.assert_allclose(r.points[:, 0], [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
        np.testing.assert_allclose(r.weights, [1.0, 1.0], atol=1e-15)

    def test_odd_cubic_vanishes(self):
        r = gauss_legendre(2, 1)
        assert abs(r.integrate(r.points[:, 0] ** 3)) <= 1e-15

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_exactness_degree_2n_minus_1(self, n):
        r = gauss_legendre(n, 3)
        d = 2 * n - 1
        x, y, z = r.points.T
        exact = (2.0 / (d + 1) if d % 2 == 0 else 0.0) * 2.0 * (2.0 / 3.0)
        assert r.integrate(x ** d * z ** 2) == pytest.approx(exact, abs=1e-14)
        assert r.integrate(x ** (d - 1) * y ** (d - 1)) == pytest.approx(
            2.0 * (2.0 / d) ** 2, abs=1e-13)

    def test_out_of_range(self):
        with pytest.raises(QuadratureError):
            gauss_legendre(21)

    def test_unit_domain(self):
        r = gauss_legendre(3, 2).to_unit()
        assert r.weights.sum() == pytest.approx(1.0)
        assert r.to_symmetric().weights.sum() == pytest.approx(4.0)


class TestGreville:
    def test_simpson(self):
        r = greville_weights(KnotVector.uniform(1, 2)).to_symmetric()
        np.testing.assert_allclose(r.points[:, 0], [-1, 0, 1], atol=1e-15)
        np.testing.assert_allclose(r.weights, [1 / 3, 4 / 3, 1 / 3], atol=1e-13)

    @pytest.mark.parametrize("knots,p", [
        ([0, 0, 0, 0.5, 1, 1, 1], 2),
        ([0, 0, 0, 0, 0.2, 0.5, 0.5, 1, 1, 1, 1], 3),
        ([0, 0, 0.3, 0.4, 1, 1], 1),
    ])
    def test_exact_on_spline_span(self, knots, p):
        kv = KnotVector(knots, p)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NegativeWeightWarning)
            r = greville_weights(kv)
        A = basis_matrix(kv, r.points[:, 0])[0].T
        np.testing.assert_allclose(A @ r.weights, bspline_moments(kv), atol=1e-13)

    def test_uniform_knots_nonnegative(self):
        r = greville_weights(KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2))
        assert not r.has_negative

    @pytest.mark.parametrize("knots,p", [
        ([0, 0, 0, 0.05, 1, 1, 1], 2),
        ([0, 0, 0, 0, 0.02, 1, 1, 1, 1], 3),
    ])
    def test_negative_weight_flagged(self, knots, p):
        with pytest.warns(NegativeWeightWarning):
            r = greville_weights(KnotVector(knots, p))
        assert r.has_negative
        np.testing.assert_allclose(r.weights, _exact_greville_weights(knots, p), atol=1e-13)

    def test_sympy_oracle_matches_simpson(self):
        np.testing.assert_allclose(_exact_greville_weights([0, 0, 0, 1, 1, 1], 2), [1 / 6, 2 / 3, 1 / 6])

    def test_bezier_rule_is_tensor_simpson(self):
        r = bezier_greville_rule(2, 2)
        s = np.array([1 / 3, 4 / 3, 1 / 3])
        np.testing.assert_allclose(r.weights, np.outer(s, s).ravel(), atol=1e-13)


class TestHybridPoints:
    def test_simpson_centre(self):
        q = hybrid_points([[0.0, 0.0]], [[4 / 3, 4 / 3]], mode="diagnostic_no_normalize")
        np.testing.assert_allclose(q, [[0.0, 0.0, 5 / 13]], atol=1e-12)
        np.testing.assert_allclose(hybrid_points([[0.0, 0.0]], [[4 / 3, 4 / 3]]), [[0, 0, 1]], atol=1e-12)

    def test_simpson_corner(self):
        raw = hybrid_points([[-1.0, -1.0]], [[1 / 3, 1 / 3]], mode="diagnostic_no_normalize")
        np.testing.assert_allclose(raw, [[-1 / 7, -1 / 7, 35 / 37]], atol=1e-12)
        q = hybrid_points([[-1.0, -1.0]], [[1 / 3, 1 / 3]])
        expected = np.array([-1 / 7, -1 / 7, 35 / 37]) / np.sqrt(2 / 49 + (35 / 37) ** 2)
        np.testing.assert_allclose(q, [expected], atol=1e-12)
        np.testing.assert_allclose(q, [[-0.147690, -0.147690, 0.977945]], atol=1e-6)

    def test_unit_norm(self):
        r = bezier_greville_rule(2, 2)
        w = np.array([1 / 3, 4 / 3, 1 / 3])
        W = np.column_stack([np.tile(w, 3), np.repeat(w, 3)])
        q = hybrid_points(r.points, W)
        np.testing.assert_allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-15)
        assert np.all(np.abs(q) <= 1.0)

    def test_two_point_variant(self):
        q = hybrid_points([[0.0, 0.0]], [[4 / 3, 4 / 3]], mode="hybrid2")
        assert q.shape == (2, 3)
        assert q[0, 0] < 0 < q[1, 0]

    def test_degenerate(self):
        # the lifted z-component vanishes when w_i w_j = 4 and the point is the origin
        with pytest.raises(DegeneratePointError):
            hybrid_points([[0.0, 0.0]], [[2.0, 2.0]])

    def test_unknown_mode(self):
        with pytest.raises(QuadratureError):
            hybrid_points([[0.0, 0.0]], [[1.0, 1.0]], mode="bogus")


@pytest.fixture(scope="module")
def bump_level0():
    m = build_mesh(bump_cube(), (1, 1, 2))
    return m, HybridLocalBasis(m)


class TestHybridWeights:
    def test_scaling_linearity(self, bump_level0, rng):
        _, hb = bump_level0
        r = element_hybrid_rule(hb, 0)
        A = r.info["system"].matrix
        b = rng.random(A.shape[0])
        w1 = hybrid_weights(r.points, A, b).weights
        w2 = hybrid_weights(r.points, A, 2 * b).weights
        np.testing.assert_allclose(w2, 2 * w1, rtol=1e-10)

    def test_residual_matches_svd_route(self, bump_level0):
        _, hb = bump_level0
        r = element_hybrid_rule(hb, 0)
        A, b = r.info["system"].matrix, r.info["system"].moments
        w, *_ = np.linalg.lstsq(A, b, rcond=None)
        assert r.residual == pytest.approx(np.linalg.norm(A @ w - b), rel=1e-8)
        assert A.shape == (13, 9)

    def test_moments_converged(self, bump_level0):
        _, hb = bump_level0
        np.testing.assert_allclose(hybrid_moments(hb, 0, 12), hybrid_moments(hb, 0, 16), atol=1e-13)

    def test_moments_sum_to_reference_volume(self, bump_level0):
        _, hb = bump_level0
        # patch functions sum to one on the face, so together they integrate to 4
        assert hybrid_moments(hb, 0).sum() == pytest.approx(8.0, abs=1e-12)

    def test_rank_deficient_rejected(self):
        with pytest.raises(QuadratureError):
            hybrid_weights(np.zeros((3, 3)), np.ones((4, 3)), np.ones(4))

    def test_residuals_frozen_and_nonincreasing(self):
        ms = build_hierarchy(bump_cube(resolution=(1, 1, 2)), 3)
        res = []
        for m in ms:
            hb = HybridLocalBasis(m)
            res.append(max(element_hybrid_rule(hb, e).relative_residual for e in m.boundary_ids))
        np.testing.assert_allclose(res, BUMP_SINGLE_CELL_RESIDUALS, rtol=1e-8)
        assert all(b <= a for a, b in zip(res, res[1:]))

    @pytest.mark.xfail(strict=True, reason="measured single-cell relative residual is 0.063")
    def test_bump_level0_residual_below_one_percent(self, bump_level0):
        _, hb = bump_level0
        assert element_hybrid_rule(hb, 0).relative_residual <= 1e-2

    def test_flat_linear_patch(self):
        m = build_mesh(flat_cube(), (1, 1, 2))
        hb = HybridLocalBasis(m)
        r = element_hybrid_rule(hb, 0)
        assert len(r) == 4 and r.info["system"].matrix.shape == (8, 4)
        assert r.relative_residual == pytest.approx(FLAT_LINEAR_RESIDUAL, rel=1e-8)
        # four symmetric points share one weight
        np.testing.assert_allclose(r.weights, r.weights[0], rtol=1e-12)

    def test_two_point_variant_fits_exactly(self, bump_level0):
        _, hb = bump_level0
        r = element_hybrid_rule(hb, 0, mode="hybrid2")
        assert len(r) == 18
        assert r.relative_residual < 1e-12


def _parametric_volume(patch):
    """Volume under a graph-like patch above z=0, by adaptive scipy quadrature."""
    def integrand(v, u):
        X = patch.evaluate([u], [v])[0]
        J = patch.jacobian([u], [v])[0]
        return X[2] * abs(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    return integrate.dblquad(integrand, 0.0, 1.0, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)[0]


class TestIntegration:
    def test_unit_interior_element(self):
        m = build_mesh(flat_cube(), (1, 1, 2))
        e = int(m.interior_ids[0])
        vol = integrate_volume(m, e, lambda x: np.ones(len(x)), gauss_legendre(2, 3))
        assert vol == pytest.approx(0.5, abs=1e-14)

    def test_flat_cube_volume(self):
        m = build_mesh(flat_cube())
        g = gauss_legendre(2, 3)
        vol = sum(integrate_volume(m, e, lambda x: np.ones(len(x)), g) for e in range(m.n_elements))
        assert vol == pytest.approx(1.0, abs=1e-10)

    def test_boundary_and_interior_rules_agree_on_flat(self, rng):
        m = build_mesh(flat_cube(), (2, 2, 2))
        f = lambda x: 1 + x[:, 0] * x[:, 1] + x[:, 2] ** 2  # noqa: E731
        g = gauss_legendre(3, 3).to_unit()
        for e in m.boundary_ids:
            a = integrate_volume(m, int(e), f, g)
            ev = m.trilinear_map(int(e), g.points)
            b = float(np.dot(g.weights, f(ev.point) * ev.det))
            assert a == pytest.approx(b, abs=1e-9)

    def test_dense_volume_matches_scipy(self):
        dom = bump_cube()
        m = build_mesh(dom, (2, 2, 2))
        g = gauss_legendre(12, 3)
        vol = sum(integrate_volume(m, e, lambda x: np.ones(len(x)), g) for e in range(m.n_elements))
        assert vol == pytest.approx(_parametric_volume(dom.patch), abs=1e-10)

    def test_cylinder_dense_volume_exact(self):
        dom = cylinder_sector()
        m = build_mesh(dom)
        g = gauss_legendre(8, 3)
        vol = sum(integrate_volume(m, e, lambda x: np.ones(len(x)), g) for e in range(m.n_elements))
        assert vol == pytest.approx(dom.exact_volume, abs=1e-12)

    @pytest.mark.parametrize("make", [bump_cube, cylinder_sector])
    @pytest.mark.parametrize("res", [(1, 1, 2), (2, 2, 2), (4, 4, 4)])
    def test_hybrid_volume_within_residual_bound(self, make, res):
        m = build_mesh(make(), res)
        hb = HybridLocalBasis(m)
        dense = gauss_legendre(12, 3)
        one = lambda x: np.ones(len(x))  # noqa: E731
        g2 = gauss_legendre(2, 3)
        hyb = sum(integrate_volume(m, int(e), one, g2) for e in m.interior_ids)
        ref = sum(integrate_volume(m, int(e), one, dense) for e in m.interior_ids)
        bound = 0.0
        for e in m.boundary_ids:
            r = element_hybrid_rule(hb, int(e))
            hyb += integrate_volume(m, int(e), one, r)
            ref += integrate_volume(m, int(e), one, dense)
            det = m.geometric_map(int(e), dense.to_unit().points).det
            bound += np.sqrt(len(r.info["system"].moments)) * r.residual / 8 * det.max()
        assert abs(hyb - ref) <= bound

    def test_flat_surface_area(self):
        assert integrate_surface(flat_cube().patch, lambda x: np.ones(len(x))) == pytest.approx(1.0, abs=1e-12)

    def test_cylinder_area_level0(self):
        dom = cylinder_sector()
        patch = build_mesh(dom).patch
        area = integrate_surface(patch, lambda x: np.ones(len(x)))
        assert abs(area - dom.exact_area) / dom.exact_area <= 1e-3

    def test_cylinder_area_improves(self):
        dom = cylinder_sector()
        errs = []
        for level in range(4):
            patch = dom.patch.refine_to(2 ** level, 1)
            area = integrate_surface(patch, lambda x: np.ones(len(x)))
            errs.append(abs(area - dom.exact_area) / dom.exact_area)
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_dense_surface_rule_exact_area(self):
        dom = cylinder_sector()
        area = integrate_surface(dom.patch, lambda x: np.ones(len(x)), dense_surface_rule(dom.patch))
        assert area == pytest.approx(dom.exact_area, rel=1e-12)

    def test_surface_linearity(self):
        p = bump_cube().patch
        f = lambda x: np.sin(x[:, 0])  # noqa: E731
        g = lambda x: x[:, 1] * x[:, 2]  # noqa: E731
        lhs = integrate_surface(p, lambda x: 2 * f(x) - 3 * g(x))
        rhs = 2 * integrate_surface(p, f) - 3 * integrate_surface(p, g)
        assert lhs == pytest.approx(rhs, abs=1e-13)

    def test_rule_shape_mismatch(self):
        with pytest.raises(QuadratureError):
            QuadRule(np.zeros((3, 2)), np.ones(2))
