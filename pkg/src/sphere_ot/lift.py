"""Piecewise-linear extension of grid functions to all of S^2.

A query point ``x`` is located in the triangle whose cone from the origin
contains the ray through ``x``; the value is the barycentric combination of
the vertex values with coordinates ``lambda = beta / sum(beta)`` where
``[a b c] beta = x``. For a triangulation whose flat faces all face outward
the cones tile R^3, so the extension is continuous and well defined.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import BijectionFailure

_CONTAIN_EPS = 1e-12


def check_bijection(nodes, triangles):
    """Raise :class:`BijectionFailure` unless every face points outward.

    Radial projection from the flat triangles to the sphere is then a
    bijection.
    """
    P = nodes[triangles]
    normal = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    centroid = P.mean(axis=1)
    s = np.einsum("ij,ij->i", normal, centroid)
    if np.any(s <= 0):
        raise BijectionFailure(f"{int(np.sum(s <= 0))} triangles are not oriented outward")


class Locator:
    """Point location on the triangulation of a cloud.

    Candidate triangles come from the fans of the nearest nodes (kd-tree);
    a full scan is the fallback for the rare misses.
    """

    def __init__(self, cloud, k=3):
        check_bijection(cloud.nodes, cloud.triangles)
        self.cloud = cloud
        self.k = min(k, cloud.n)
        self.tree = cKDTree(cloud.nodes)
        tri = cloud.triangles
        owner = tri.ravel()
        order = np.argsort(owner, kind="stable")
        self.fan_ptr = np.concatenate([[0], np.cumsum(np.bincount(owner, minlength=cloud.n))])
        self.fan = (np.arange(tri.size) // 3)[order]
        V = cloud.nodes[tri]  # (m, 3 vertices, 3 coords)
        self.inv = np.linalg.inv(np.swapaxes(V, 1, 2))

    def _bary(self, t, x):
        return np.einsum("nij,nj->ni", self.inv[t], x)

    def locate(self, x):
        """Triangle index and barycentric weights for each query row."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        m = len(x)
        tri_of = np.full(m, -1, dtype=np.int64)
        lam = np.zeros((m, 3))
        _, near = self.tree.query(x, k=self.k)
        near = near.reshape(m, -1)
        for col in range(near.shape[1]):
            todo = np.flatnonzero(tri_of < 0)
            if len(todo) == 0:
                break
            nodes = near[todo, col]
            cnt = self.fan_ptr[nodes + 1] - self.fan_ptr[nodes]
            rows = np.repeat(todo, cnt)
            starts = np.repeat(self.fan_ptr[nodes], cnt)
            offs = np.arange(len(rows)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            cand = self.fan[starts + offs]
            beta = self._bary(cand, x[rows])
            ok = np.all(beta >= -_CONTAIN_EPS * np.abs(beta).sum(axis=1, keepdims=True), axis=1)
            ok &= beta.sum(axis=1) > 0
            hit_rows, first = np.unique(rows[ok], return_index=True)
            b_ = beta[ok][first]
            tri_of[hit_rows] = cand[ok][first]
            lam[hit_rows] = b_ / b_.sum(axis=1, keepdims=True)
        for r_ in np.flatnonzero(tri_of < 0):
            beta = np.einsum("nij,j->ni", self.inv, x[r_])
            score = beta.min(axis=1) / np.abs(beta).sum(axis=1)
            score[beta.sum(axis=1) <= 0] = -np.inf
            t_ = int(np.argmax(score))
            tri_of[r_] = t_
            b_ = np.clip(beta[t_], 0, None)
            lam[r_] = b_ / b_.sum()
        return tri_of, lam


def _locator(cloud):
    loc = getattr(cloud, "_locator", None)
    if loc is None:
        loc = Locator(cloud)
        cloud._locator = loc
    return loc


def interpolate(cloud, values, x):
    """Evaluate the piecewise-linear extension of nodal ``values`` at ``x``.

    ``x`` may be a single point ``(3,)`` or an array ``(..., 3)``; it need
    not be normalized (only its direction matters).
    """
    values = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    tri, lam = _locator(cloud).locate(x.reshape(-1, 3))
    out = np.einsum("ij,ij->i", values[cloud.triangles[tri]], lam)
    return out.reshape(shape) if shape else float(out[0])


def lipschitz_estimate(cloud, values):
    """Largest gradient norm of the extension over the flat triangles."""
    values = np.asarray(values, dtype=float)
    P = cloud.nodes[cloud.triangles]
    u = values[cloud.triangles]
    e1 = P[:, 1] - P[:, 0]
    e2 = P[:, 2] - P[:, 0]
    d1 = u[:, 1] - u[:, 0]
    d2 = u[:, 2] - u[:, 0]
    # gradient g in the plane of the triangle: g.e1 = d1, g.e2 = d2
    g11 = np.einsum("ij,ij->i", e1, e1)
    g12 = np.einsum("ij,ij->i", e1, e2)
    g22 = np.einsum("ij,ij->i", e2, e2)
    det = g11 * g22 - g12**2
    a = (g22 * d1 - g12 * d2) / det
    b = (g11 * d2 - g12 * d1) / det
    g = a[:, None] * e1 + b[:, None] * e2
    return float(np.max(np.linalg.norm(g, axis=1)))


def stencil_lipschitz(cloud, values):
    """Largest difference quotient ``|u(x) - u(y)| / d(x, y)`` over stencils."""
    values = np.asarray(values, dtype=float)
    return float(np.max(np.abs(values[cloud.center] - values[cloud.nbr]) / cloud.dist))
