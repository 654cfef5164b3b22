"""Interpolation of a smooth function on the bump domain.

Builds the blended global interpolant for several values of the blend
parameter and reports errors on three refinement levels.
"""

from nefem.geometry import bump_cube
from nefem.interpolation import error_norms, global_interpolate
from nefem.mesh import build_hierarchy
from nefem.solver import ManufacturedSolution, fit_rate


def main():
    sol = ManufacturedSolution.sine_product()
    meshes = build_hierarchy(bump_cube(), 3)
    h = [m.h for m in meshes]
    for zt in (0.3, 0.5, 0.7):
        errs = [error_norms(sol.u, global_interpolate(sol.u, m, zt), sol.grad) for m in meshes]
        l2 = [e[0] for e in errs]
        h1 = [e[1] for e in errs]
        print(f"zeta_tilde={zt}: L2 {['%.2e' % e for e in l2]}  slope {fit_rate(h, l2):.3f}")
        print(f"{'':15s} H1 {['%.2e' % e for e in h1]}  slope {fit_rate(h, h1):.3f}")


if __name__ == "__main__":
    main()
