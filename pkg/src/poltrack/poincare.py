"""Poincare-sphere geometry: Stokes vectors and axis-angle rotations.

Fully polarized states are unit 3-vectors (normalized Stokes vectors) on the
Poincare sphere, and lossless polarization transformations are rotations of
that sphere.  Rotations are represented as unit quaternions

    q = cos(angle/2) + sin(angle/2) * axis

acting on a state ``s`` by conjugation, ``s' = q s q*``.

Conventions used throughout the package:

* horizontal linear polarization at ``(1, 0, 0)``, vertical at ``(-1, 0, 0)``,
* the 45-degree diagonal at ``(0, 1, 0)``, anti-diagonal at ``(0, -1, 0)``,
* circular states on the ``s3`` poles,
* rotations follow the right-hand rule about their axis.

All types are immutable values and all operations are pure functions, so they
are safe to use concurrently without coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

UNIT_TOL = 1e-9  # norm drift tolerated after arithmetic
AXIS_TOL = 1e-6  # norm slack tolerated for user-supplied axes

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class StokesVector:
    """Unit 3-vector on the Poincare sphere."""

    s1: float
    s2: float
    s3: float

    def __post_init__(self) -> None:
        n = math.sqrt(self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3)
        if not math.isfinite(n) or abs(n - 1.0) > UNIT_TOL:
            raise ValueError(f"Stokes vector must have unit norm, got |s| = {n!r}")

    @classmethod
    def unit(cls, s1: float, s2: float, s3: float) -> "StokesVector":
        """Build a StokesVector from an unnormalized direction."""
        n = math.sqrt(s1 * s1 + s2 * s2 + s3 * s3)
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite direction")
        return cls(s1 / n, s2 / n, s3 / n)

    def dot(self, other: "StokesVector") -> float:
        return self.s1 * other.s1 + self.s2 * other.s2 + self.s3 * other.s3

    def __neg__(self) -> "StokesVector":
        return StokesVector(-self.s1, -self.s2, -self.s3)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.s1, self.s2, self.s3)


# The four BB84 signal states plus the circular poles.
H = StokesVector(1.0, 0.0, 0.0)
V = StokesVector(-1.0, 0.0, 0.0)
DIAG = StokesVector(0.0, 1.0, 0.0)
ANTIDIAG = StokesVector(0.0, -1.0, 0.0)
RCP = StokesVector(0.0, 0.0, 1.0)
LCP = StokesVector(0.0, 0.0, -1.0)


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion ``w + x i + y j + z k`` acting on Stokes vectors."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(n) or abs(n - 1.0) > UNIT_TOL:
            raise ValueError(f"rotation quaternion must have unit norm, got |q| = {n!r}")

    @property
    def angle(self) -> float:
        """Rotation angle in [0, 2*pi)."""
        a = 2.0 * math.acos(min(1.0, max(-1.0, self.w)))
        return math.fmod(a, _TWO_PI)

    @property
    def axis(self) -> StokesVector:
        """Rotation axis; (1, 0, 0) by convention for a (near-)identity rotation."""
        n = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if n < 1e-12:
            return H
        return StokesVector(self.x / n, self.y / n, self.z / n)


IDENTITY = Rotation(1.0, 0.0, 0.0, 0.0)


def rotation_from_axis_angle(axis: StokesVector, angle: float) -> Rotation:
    """Quaternion with scalar part cos(angle/2) and vector part sin(angle/2)*axis.

    The axis must be unit length within ``AXIS_TOL``; it is renormalized
    exactly before use so the result satisfies the quaternion norm invariant.
    """
    n = math.sqrt(axis.s1 * axis.s1 + axis.s2 * axis.s2 + axis.s3 * axis.s3)
    if abs(n - 1.0) > AXIS_TOL:
        raise ValueError(f"rotation axis must be unit length, got |a| = {n!r}")
    if not math.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    half = 0.5 * angle
    c = math.cos(half)
    s = math.sin(half) / n
    return Rotation(c, s * axis.s1, s * axis.s2, s * axis.s3)


def apply_rotation(r: Rotation, s: StokesVector) -> StokesVector:
    """Rotate a Stokes vector, ``s' = r s r*``; the output is renormalized."""
    # v' = v + 2w (u x v) + 2 u x (u x v), with u the quaternion vector part.
    ux, uy, uz = r.x, r.y, r.z
    cx = uy * s.s3 - uz * s.s2
    cy = uz * s.s1 - ux * s.s3
    cz = ux * s.s2 - uy * s.s1
    dx = uy * cz - uz * cy
    dy = uz * cx - ux * cz
    dz = ux * cy - uy * cx
    v1 = s.s1 + 2.0 * (r.w * cx + dx)
    v2 = s.s2 + 2.0 * (r.w * cy + dy)
    v3 = s.s3 + 2.0 * (r.w * cz + dz)
    n = math.sqrt(v1 * v1 + v2 * v2 + v3 * v3)
    return StokesVector(v1 / n, v2 / n, v3 / n)


def compose(outer: Rotation, inner: Rotation) -> Rotation:
    """Quaternion product: apply ``inner`` first, then ``outer``.

    Satisfies apply(compose(b, a), s) == apply(b, apply(a, s)); the result is
    renormalized.
    """
    w = outer.w * inner.w - outer.x * inner.x - outer.y * inner.y - outer.z * inner.z
    x = outer.w * inner.x + outer.x * inner.w + outer.y * inner.z - outer.z * inner.y
    y = outer.w * inner.y - outer.x * inner.z + outer.y * inner.w + outer.z * inner.x
    z = outer.w * inner.z + outer.x * inner.y - outer.y * inner.x + outer.z * inner.w
    n = math.sqrt(w * w + x * x + y * y + z * z)
    return Rotation(w / n, x / n, y / n, z / n)


def inverse(r: Rotation) -> Rotation:
    """Conjugate quaternion, undoing the rotation."""
    return Rotation(r.w, -r.x, -r.y, -r.z)


def projection_probability(s: StokesVector, analyzer_axis: StokesVector) -> float:
    """Probability that state ``s`` exits the analyzer port at ``analyzer_axis``.

    Equals cos^2 of half the angle between state and analyzer, i.e.
    ``(1 + s . a) / 2``.  The complement port gets exactly ``1 -`` this value:
    projection_probability(s, a) + projection_probability(s, -a) == 1 holds
    exactly in floating point.
    """
    return 0.5 * (1.0 + s.dot(analyzer_axis))
