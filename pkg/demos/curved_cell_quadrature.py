"""Hybrid quadrature on the curved cells of the bump domain.

Fits moment-matching weights on every curved-face element for three
refinement levels and prints the worst relative residual per level,
together with the exact Greville weights of a quadratic knot vector.
"""

import numpy as np

from nefem.geometry import bump_cube
from nefem.mesh import build_hierarchy
from nefem.quadrature import element_hybrid_rule, greville_weights
from nefem.spaces import HybridLocalBasis
from nefem.spline import KnotVector


def main():
    rule = greville_weights(KnotVector([0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1], 2))
    print("Greville points :", np.round(rule.points[:, 0], 4))
    print("Greville weights:", np.round(rule.weights, 4))

    for mesh in build_hierarchy(bump_cube(resolution=(1, 1, 2)), 3):
        hb = HybridLocalBasis(mesh)
        rules = [element_hybrid_rule(hb, e) for e in mesh.boundary_ids]
        worst = max(r.relative_residual for r in rules)
        print(f"level {mesh.level}: {len(rules):3d} curved cells, "
              f"worst relative residual {worst:.4f}")


if __name__ == "__main__":
    main()
