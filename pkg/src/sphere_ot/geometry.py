"""Primitives on the unit sphere S^2 embedded in R^3.

All functions accept plain arrays of shape ``(..., 3)`` and broadcast over
leading axes; the small dataclasses below are convenience wrappers that
enforce the unit-norm / tangency invariants and convert to arrays via
``np.asarray``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import AntipodalPoint, OutOfChart, ZeroVector

ANTIPODAL_CUTOFF = np.pi - 1e-8
_SERIES_CUTOFF = 1e-4


@dataclass(frozen=True, eq=False)
class SpherePoint:
    """A point on S^2. Coordinates are normalized on construction."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(3)
        n = np.linalg.norm(c)
        if n == 0.0:
            raise ZeroVector("cannot place the zero vector on the sphere")
        object.__setattr__(self, "coords", c / n)

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A vector in the tangent plane at ``base``.

    Any normal component of ``vec`` is projected out on construction.
    """

    base: SpherePoint
    vec: np.ndarray

    def __post_init__(self):
        if not isinstance(self.base, SpherePoint):
            object.__setattr__(self, "base", SpherePoint(self.base))
        x = self.base.coords
        v = np.asarray(self.vec, dtype=float).reshape(3)
        object.__setattr__(self, "vec", v - np.dot(v, x) * x)

    def __array__(self, dtype=None, copy=None):
        return self.vec if dtype is None else self.vec.astype(dtype)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))


@dataclass(frozen=True, eq=False)
class TangentFrame:
    base: SpherePoint
    e1: np.ndarray
    e2: np.ndarray

    def matrix(self) -> np.ndarray:
        """Rows ``e1, e2``; maps ambient vectors to frame coordinates."""
        return np.stack([self.e1, self.e2])


def _rowdot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _unit(z):
    z = np.asarray(z, dtype=float)
    n = np.linalg.norm(z, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ZeroVector("zero vector has no direction")
    return z / n


def geodesic_distance(x, y):
    """Great-circle distance in radians, in ``[0, pi]``.

    Evaluated as ``atan2(|x cross y|, x . y)``, which equals
    ``2 arcsin(|x - y| / 2)`` for unit vectors but keeps full relative
    accuracy near both 0 and pi.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.linalg.norm(np.cross(x, y), axis=-1)
    c = _rowdot(x, y)
    return np.arctan2(s, c)


def exp_map(x, p):
    """Point reached by following the geodesic from ``x`` in direction ``p``
    for arclength ``|p|``.

    ``x`` and ``p`` broadcast; ``p`` is assumed tangent at ``x``. A
    :class:`TangentVector` may be passed alone as ``x`` with ``p=None``.
    """
    if p is None:
        if not isinstance(x, TangentVector):
            raise TypeError("exp_map(p) requires a TangentVector")
        x, p = x.base.coords, x.vec
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    n = np.linalg.norm(p, axis=-1, keepdims=True)
    # np.sinc(t) = sin(pi t) / (pi t), smooth through n = 0
    return np.cos(n) * x + np.sinc(n / np.pi) * p


def tangent_frame(x):
    """Deterministic right-handed orthonormal frame ``(x, e1, e2)``.

    ``e1`` is the Gram-Schmidt completion of the coordinate axis least
    aligned with ``x``; ``e2 = x cross e1``. Works on a single point
    (returns :class:`TangentFrame`) or on an ``(n, 3)`` array (returns
    ``(e1, e2)`` arrays).
    """
    single = isinstance(x, SpherePoint)
    xa = np.asarray(x, dtype=float)
    flat = xa.reshape(-1, 3)
    axis = np.zeros_like(flat)
    axis[np.arange(len(flat)), np.argmin(np.abs(flat), axis=1)] = 1.0
    e1 = axis - _rowdot(axis, flat)[:, None] * flat
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(flat, e1)
    e1 = e1.reshape(xa.shape)
    e2 = e2.reshape(xa.shape)
    if single:
        return TangentFrame(x, e1, e2)
    return e1, e2


def log_map(x0, x):
    """Tangent vector at ``x0`` pointing to ``x`` with length equal to the
    geodesic distance (the inverse of :func:`exp_map`)."""
    x0, x = np.broadcast_arrays(np.asarray(x0, dtype=float), np.asarray(x, dtype=float))
    shape = x.shape
    x0 = x0.reshape(-1, 3)
    x = x.reshape(-1, 3)
    d = geodesic_distance(x0, x)
    if np.any(d >= ANTIPODAL_CUTOFF):
        raise AntipodalPoint("normal coordinates are singular at the antipode")
    out = np.empty_like(x)
    small = d < _SERIES_CUTOFF
    big = ~small
    # two Gram-Schmidt passes keep the result tangent near the antipode
    w = x[big] - _rowdot(x[big], x0[big])[:, None] * x0[big]
    w -= _rowdot(w, x0[big])[:, None] * x0[big]
    out[big] = (d[big] / np.linalg.norm(w, axis=1))[:, None] * w
    # d cot d and d csc d by their Taylor series
    d2 = d[small] ** 2
    dcot = 1.0 - d2 / 3.0 - d2 * d2 / 45.0
    dcsc = 1.0 + d2 / 6.0 + 7.0 * d2 * d2 / 360.0
    out[small] = x[small] * dcsc[:, None] - x0[small] * dcot[:, None]
    return out.reshape(shape)


def normal_coords(x0, x):
    """Geodesic normal coordinates of ``x`` about ``x0``.

    Returns the point ``v`` on the tangent plane through ``x0`` with
    ``|v - x0| = d(x0, x)`` and ``v - x0`` parallel to the tangential part
    of ``x - x0``; algebraically
    ``v = x0 (1 - d cot d) + x (d csc d)``.
    """
    x0 = np.asarray(x0, dtype=float)
    return x0 + log_map(x0, x)


def inverse_normal_coords(x0, v):
    """Point of S^2 whose normal coordinates about ``x0`` are ``v``."""
    x0 = np.asarray(x0, dtype=float)
    p = np.asarray(v, dtype=float) - x0
    p = p - _rowdot(p, x0)[..., None] * x0
    if np.any(np.linalg.norm(p, axis=-1) >= np.pi):
        raise OutOfChart("normal coordinates only cover the open ball of radius pi")
    return exp_map(x0, p)


def closest_point(z):
    """Radial projection ``z / |z|`` onto the sphere."""
    z = np.asarray(z, dtype=float)
    return _unit(z)


def project_tangent(x, v):
    """Remove the component of ``v`` along the unit normal ``x``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return v - _rowdot(v, x)[..., None] * x


def random_sphere_points(n, rng):
    """``n`` points uniformly distributed on S^2."""
    z = rng.standard_normal((n, 3))
    return z / np.linalg.norm(z, axis=1, keepdims=True)
