"""Quaternion arithmetic in (r, a, b, c) component order.

Two layers live here: a small immutable :class:`Quaternion` value type for
scalar work, and array functions operating on ``(..., 4)`` float64 arrays
that the convolution code and the spin rotations use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StructureError

# MULT_TABLE[s, l, d]: coefficient of q1[d] in entry (s, l) of the left
# multiplication matrix of q1, so that (q1 q2)[s] = sum_{l,d} T[s,l,d] q1[d] q2[l].
MULT_TABLE = np.zeros((4, 4, 4))
for _s, _l, _d, _sign in [
    (0, 0, 0, 1), (0, 1, 1, -1), (0, 2, 2, -1), (0, 3, 3, -1),
    (1, 0, 1, 1), (1, 1, 0, 1), (1, 2, 3, -1), (1, 3, 2, 1),
    (2, 0, 2, 1), (2, 1, 3, 1), (2, 2, 0, 1), (2, 3, 1, -1),
    (3, 0, 3, 1), (3, 1, 2, -1), (3, 2, 1, 1), (3, 3, 0, 1),
]:
    MULT_TABLE[_s, _l, _d] = _sign
del _s, _l, _d, _sign

BASIS = {
    "1": np.eye(4),
    "i": np.einsum("sld,d->sl", MULT_TABLE, [0.0, 1.0, 0.0, 0.0]),
    "j": np.einsum("sld,d->sl", MULT_TABLE, [0.0, 0.0, 1.0, 0.0]),
    "k": np.einsum("sld,d->sl", MULT_TABLE, [0.0, 0.0, 0.0, 1.0]),
}

STRUCTURE_TOL = 1e-12


@dataclass(frozen=True)
class Quaternion:
    r: float
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0

    @classmethod
    def from_array(cls, v) -> "Quaternion":
        r, a, b, c = (float(x) for x in np.asarray(v, dtype=float).reshape(4))
        return cls(r, a, b, c)

    def to_array(self) -> np.ndarray:
        return np.array([self.r, self.a, self.b, self.c], dtype=float)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=float)

    @property
    def is_pure(self) -> bool:
        return self.r == 0.0

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return qmul(self, other)

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(self.r + other.r, self.a + other.a, self.b + other.b, self.c + other.c)

    def __sub__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(self.r - other.r, self.a - other.a, self.b - other.b, self.c - other.c)

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.r, -self.a, -self.b, -self.c)

    def __iter__(self):
        return iter((self.r, self.a, self.b, self.c))


ONE = Quaternion(1.0)
I = Quaternion(0.0, 1.0)
J = Quaternion(0.0, 0.0, 1.0)
K = Quaternion(0.0, 0.0, 0.0, 1.0)


def qmul(q1: Quaternion, q2: Quaternion) -> Quaternion:
    """Hamilton product ``q1 q2``."""
    r1, a1, b1, c1 = q1
    r2, a2, b2, c2 = q2
    return Quaternion(
        r1 * r2 - a1 * a2 - b1 * b2 - c1 * c2,
        a1 * r2 + r1 * a2 - c1 * b2 + b1 * c2,
        b1 * r2 + c1 * a2 + r1 * b2 - a1 * c2,
        c1 * r2 - b1 * a2 + a1 * b2 + r1 * c2,
    )


def conj(q: Quaternion) -> Quaternion:
    return Quaternion(q.r, -q.a, -q.b, -q.c)


def norm(q: Quaternion) -> float:
    return float(np.sqrt(q.r * q.r + q.a * q.a + q.b * q.b + q.c * q.c))


def inverse(q: Quaternion) -> Quaternion:
    n2 = q.r * q.r + q.a * q.a + q.b * q.b + q.c * q.c
    if n2 == 0.0:
        raise DomainError("inverse of the zero quaternion is undefined")
    return Quaternion(q.r / n2, -q.a / n2, -q.b / n2, -q.c / n2)


def to_matrix(q: Quaternion) -> np.ndarray:
    """4x4 real matrix M with ``M @ column(p) == column(q p)``."""
    return np.einsum("sld,d->sl", MULT_TABLE, q.to_array())


def from_matrix(M, tol: float = STRUCTURE_TOL) -> Quaternion:
    """Invert :func:`to_matrix`; reject matrices outside the quaternion subalgebra."""
    M = np.asarray(M, dtype=float)
    if M.shape != (4, 4):
        raise StructureError(f"expected a 4x4 matrix, got shape {M.shape}")
    r = np.trace(M) / 4.0
    a = -np.trace(BASIS["i"] @ M) / 4.0
    b = -np.trace(BASIS["j"] @ M) / 4.0
    c = -np.trace(BASIS["k"] @ M) / 4.0
    q = Quaternion(r, a, b, c)
    err = np.max(np.abs(to_matrix(q) - M))
    if err > tol * max(1.0, np.max(np.abs(M))):
        raise StructureError(f"matrix is not a quaternion matrix (deviation {err:.3g})")
    return q


# ---------------------------------------------------------------------------
# array forms, components on the last axis


def qmul_array(q1, q2) -> np.ndarray:
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    r1, a1, b1, c1 = np.moveaxis(q1, -1, 0)
    r2, a2, b2, c2 = np.moveaxis(q2, -1, 0)
    return np.stack(
        [
            r1 * r2 - a1 * a2 - b1 * b2 - c1 * c2,
            a1 * r2 + r1 * a2 - c1 * b2 + b1 * c2,
            b1 * r2 + c1 * a2 + r1 * b2 - a1 * c2,
            c1 * r2 - b1 * a2 + a1 * b2 + r1 * c2,
        ],
        axis=-1,
    )


def conj_array(q) -> np.ndarray:
    q = np.array(q, dtype=float)
    q[..., 1:] *= -1.0
    return q


def to_matrix_array(q) -> np.ndarray:
    return np.einsum("sld,...d->...sl", MULT_TABLE, np.asarray(q, dtype=float))


def random_unit(rng: np.random.Generator, size=None) -> np.ndarray:
    """Unit quaternions uniform on S^3 (normalized standard normals)."""
    shape = (4,) if size is None else tuple(np.atleast_1d(size)) + (4,)
    while True:
        g = rng.standard_normal(shape)
        n = np.linalg.norm(g, axis=-1, keepdims=True)
        if np.all(n > 1e-12):
            return g / n


def rotate_vectors(q, v) -> np.ndarray:
    """Rotate 3-vectors ``v`` (..., 3) by the unit quaternion ``q``: q v q*."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    pure = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    return qmul_array(qmul_array(q, pure), conj_array(q))[..., 1:]


def rotation_matrix(q) -> np.ndarray:
    """3x3 rotation matrix equal to ``v -> q v q*`` for a unit quaternion."""
    return rotate_vectors(q, np.eye(3)).T
