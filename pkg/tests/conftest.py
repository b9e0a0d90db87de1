"""Shared independent oracles for the test suite.

The rotation-matrix oracle is built directly from the axis-angle parameters
via Rodrigues' formula, never from the quaternion code under test.
"""

from __future__ import annotations

import math

import numpy as np


def rodrigues_matrix(axis, angle: float) -> np.ndarray:
    """3x3 rotation matrix about ``axis`` (unit 3-sequence) by ``angle``."""
    ux, uy, uz = axis
    c = math.cos(angle)
    s = math.sin(angle)
    k = 1.0 - c
    return np.array(
        [
            [c + ux * ux * k, ux * uy * k - uz * s, ux * uz * k + uy * s],
            [uy * ux * k + uz * s, c + uy * uy * k, uy * uz * k - ux * s],
            [uz * ux * k - uy * s, uz * uy * k + ux * s, c + uz * uz * k],
        ]
    )


def random_unit(rng: np.random.Generator) -> tuple[float, float, float]:
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    return (float(v[0]), float(v[1]), float(v[2]))


def random_axis_angle(rng: np.random.Generator, max_angle: float = 2.0 * math.pi):
    return random_unit(rng), float(rng.uniform(0.0, max_angle))
