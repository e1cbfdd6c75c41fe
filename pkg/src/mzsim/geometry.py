"""Small 2D vector helpers used across the package.

Vectors are plain ``(x, y)`` tuples of floats; nothing here allocates
numpy arrays, so the event-driven engine stays cheap.
"""

from __future__ import annotations

import math

Vec2 = tuple[float, float]

UNIT_TOL = 1e-12


def add(a: Vec2, b: Vec2) -> Vec2:
    return (a[0] + b[0], a[1] + b[1])


def sub(a: Vec2, b: Vec2) -> Vec2:
    return (a[0] - b[0], a[1] - b[1])


def scale(a: Vec2, s: float) -> Vec2:
    return (a[0] * s, a[1] * s)


def neg(a: Vec2) -> Vec2:
    return (-a[0], -a[1])


def dot(a: Vec2, b: Vec2) -> float:
    return a[0] * b[0] + a[1] * b[1]


def norm(a: Vec2) -> float:
    return math.hypot(a[0], a[1])


def distance(a: Vec2, b: Vec2) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def perp(a: Vec2) -> Vec2:
    """Counter-clockwise perpendicular."""
    return (-a[1], a[0])


def normalized(a: Vec2) -> Vec2:
    n = norm(a)
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return (a[0] / n, a[1] / n)


def is_unit(a: Vec2, tol: float = UNIT_TOL) -> bool:
    return abs(norm(a) - 1.0) <= tol


def reflect(d: Vec2, normal: Vec2) -> Vec2:
    """Reflect direction ``d`` about a plane with unit normal ``normal``."""
    s = 2.0 * dot(d, normal)
    return (d[0] - s * normal[0], d[1] - s * normal[1])
