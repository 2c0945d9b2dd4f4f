"""Lattice Chern number from oriented solid angles of spin plaquettes.

Every plaquette (k, k+dx, k+dx+dy, k+dy) is split into the triangles
(n1, n2, n3) and (n1, n3, n4).  The signed solid angle of each triangle is
2 atan2(a.(b x c), 1 + a.b + b.c + c.a); the sum over the periodic grid is
an exact multiple of 4 pi for any texture without degenerate triangles.

The reported Chern number carries the sign convention under which the
order-c model gives sgn(m) c for 0 < |m| < 2, i.e. minus the skyrmion
degree of n over the grid in the orientation above.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DegenerateTripleError, IllConditionedError

DENOM_TOL = 1e-12
# triangles whose vertices lie on one great circle (|a.(b x c)| below this)
# have zero area; this keeps planar textures at exactly zero.  The value is
# sized for spins stored in float32, whose rounding alone lifts planar
# triples to ~1e-7
COPLANAR_TOL = 1e-6
RESIDUAL_TOL = 0.05
ORIENTATION = -1.0


class ChernResult(NamedTuple):
    value: int
    residual: float
    total: float  # unrounded sum / 4 pi


def _solid_angles(a, b, c):
    num = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = (1.0 + np.einsum("...i,...i->...", a, b) + np.einsum("...i,...i->...", b, c)
           + np.einsum("...i,...i->...", c, a))
    coplanar = np.abs(num) <= COPLANAR_TOL
    if np.any((np.abs(den) <= DENOM_TOL) & ~coplanar):
        raise DegenerateTripleError("solid angle undefined: 1 + a.b + b.c + c.a vanishes")
    omega = 2.0 * np.arctan2(num, den)
    return np.where(coplanar, 0.0, omega)


def solid_angle(a, b, c) -> float | np.ndarray:
    """Signed solid angle (steradians) subtended by three unit vectors.

    Broadcasts over leading axes.  Positive when (a, b, c) is counterclockwise
    seen from outside the sphere.
    """
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    for v in (a, b, c):
        if np.any(np.abs(np.linalg.norm(v, axis=-1) - 1.0) > 1e-9):
            raise ValueError("solid_angle expects unit vectors")
    num = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = 1.0 + np.einsum("...i,...i->...", a, b) + np.einsum("...i,...i->...", b, c) \
        + np.einsum("...i,...i->...", c, a)
    if np.any(np.abs(den) <= DENOM_TOL):
        raise DegenerateTripleError("solid angle undefined: 1 + a.b + b.c + c.a vanishes")
    out = _solid_angles(a, b, c)
    return float(out) if np.ndim(out) == 0 else out


def plaquette_solid_angles(n: np.ndarray) -> np.ndarray:
    """Solid angle per plaquette, shape (L, L), periodic wrap."""
    n1 = n
    n2 = np.roll(n, -1, axis=0)
    n3 = np.roll(n2, -1, axis=1)
    n4 = np.roll(n, -1, axis=1)
    return _solid_angles(n1, n2, n3) + _solid_angles(n1, n3, n4)


def chern_number(t, tol: float = RESIDUAL_TOL) -> ChernResult:
    """Integer Chern number of a spin texture (SpinTexture or (L, L, 3) array)."""
    n = np.asarray(getattr(t, "data", t), dtype=float)
    total = ORIENTATION * float(np.sum(plaquette_solid_angles(n))) / (4.0 * np.pi)
    value = int(np.rint(total))
    residual = abs(total - value)
    if residual > tol:
        raise IllConditionedError(
            f"lattice Chern sum {total:.4f} is {residual:.3f} from an integer", value, residual)
    return ChernResult(value, residual, total)


def min_gap(h) -> float:
    """Band gap 2 min|h| of the two-band Hamiltonian over the grid."""
    h = np.asarray(getattr(h, "data", h), dtype=float)
    return float(2.0 * np.min(np.linalg.norm(h, axis=-1)))
