"""Built-in extruded-patch domains.

Each domain is bounded by one NURBS face and five planar faces.  The solid
is swept from the patch along one coordinate axis down to a flat bottom
plane.  Patches are oriented so that ``S_u x S_v`` points into the solid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .nurbs import NurbsPatch
from .spline import KnotVector

__all__ = ["ExtrudedDomain", "flat_cube", "bump_cube", "cylinder_sector", "PRESETS", "preset"]


@dataclass(frozen=True)
class ExtrudedDomain:
    """A solid swept from ``patch`` along ``axis`` to the plane ``x[axis] = bottom``.

    Attributes
    ----------
    name : str
    patch : NurbsPatch
        Coarsest description of the curved face (usually one Bezier cell).
    axis : int
        Sweep direction (0, 1 or 2).
    bottom : float
        Coordinate of the planar face opposite the patch.
    resolution : tuple of int
        Default ``(nx, ny, nz)`` for level 0: cells along u, along v, and layers.
    exact_volume, exact_area : float or None
        Closed-form values when known (used by checks and tests).
    """

    name: str
    patch: NurbsPatch
    axis: int = 2
    bottom: float = 0.0
    resolution: tuple = (2, 2, 2)
    exact_volume: float | None = None
    exact_area: float | None = None

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise GeometryError(f"axis must be 0, 1 or 2, got {self.axis}")
        heights = self.patch.flat_points[:, self.axis] - self.bottom
        if np.all(heights > 0) or np.all(heights < 0):
            return
        raise GeometryError("bottom plane must lie strictly on one side of the control net")


def _uniform_grid_patch(degree, corner_fn):
    n = degree + 1
    kv = KnotVector.uniform(1, degree)
    t = np.linspace(0.0, 1.0, n)
    cp = np.array([[corner_fn(a, b) for b in t] for a in t])
    return kv, cp


def flat_cube(degree=1, resolution=(4, 4, 4)):
    """Unit cube whose top face ``z = 1`` is a flat (affine) patch.

    ``u`` runs along ``y`` and ``v`` along ``x`` so the normal points down.
    """
    kv, cp = _uniform_grid_patch(degree, lambda a, b: (b, a, 1.0))
    patch = NurbsPatch(kv, kv, cp)
    return ExtrudedDomain("flat_cube", patch, axis=2, bottom=0.0,
                          resolution=tuple(resolution), exact_volume=1.0, exact_area=1.0)


def bump_cube(amplitude=0.3, center_weight=2.0, resolution=(4, 4, 4)):
    """Unit cube with its top face replaced by a rational biquadratic bump."""
    kv = KnotVector.uniform(1, 2)
    t = np.array([0.0, 0.5, 1.0])
    cp = np.zeros((3, 3, 3))
    w = np.ones((3, 3))
    for i in range(3):
        for j in range(3):
            cp[i, j] = (t[j], t[i], 1.0)
    cp[1, 1, 2] += amplitude
    w[1, 1] = center_weight
    patch = NurbsPatch(kv, kv, cp, w)
    return ExtrudedDomain("bump_cube", patch, axis=2, bottom=0.0, resolution=tuple(resolution))


def cylinder_sector(radius=1.0, length=1.0, resolution=(4, 4, 4)):
    """Solid under a 90 degree cylindrical arc of the circle ``x^2 + z^2 = r^2``.

    The arc spans polar angles 45..135 degrees, the cylinder axis is ``y``
    (``0 <= y <= length``) and the bottom face is ``z = 0``.
    """
    s = np.sqrt(0.5)
    kv_u = KnotVector.uniform(1, 2)
    kv_v = KnotVector.uniform(1, 1)
    arc = np.array([[radius * s, radius * s], [0.0, radius * np.sqrt(2.0)], [-radius * s, radius * s]])
    cp = np.zeros((3, 2, 3))
    w = np.zeros((3, 2))
    for i in range(3):
        for j, y in enumerate((0.0, length)):
            cp[i, j] = (arc[i, 0], y, arc[i, 1])
            w[i, j] = (1.0, s, 1.0)[i]
    patch = NurbsPatch(kv_u, kv_v, cp, w)
    # area of the segment between the chord z = r/sqrt2 and the arc, plus the block below it
    segment = 0.25 * np.pi * radius ** 2 - 0.5 * radius ** 2
    volume = (segment + radius ** 2) * length
    return ExtrudedDomain("cylinder_sector", patch, axis=2, bottom=0.0,
                          resolution=tuple(resolution), exact_volume=volume,
                          exact_area=0.5 * np.pi * radius * length)


PRESETS = {"flat_cube": flat_cube, "bump_cube": bump_cube, "cylinder_sector": cylinder_sector}


def preset(name, **kwargs):
    try:
        return PRESETS[name](**kwargs)
    except KeyError:
        raise GeometryError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
