"""Point clouds on S^2, their hull triangulation and wide-stencil neighborhoods."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .exceptions import BadCount, DegenerateCloud, EmptyStencil, FileParse
from .geometry import geodesic_distance, log_map, tangent_frame

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
CLOUD_KINDS = ("fibonacci", "icosahedral", "file")


def fibonacci_points(n):
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(1.0 - z * z)
    phi = GOLDEN_ANGLE * i
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def icosahedron():
    """Vertices and outward faces of the regular icosahedron."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def subdivide(vertices, faces):
    """Split every triangle into four, pushing midpoints onto the sphere."""
    verts = list(vertices)
    cache = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            m = vertices[a] + vertices[b]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return np.array(verts), np.array(out)


def icosahedral_points(n, return_faces=False):
    k, m = 0, 12
    while m < n:
        k += 1
        m = 10 * 4**k + 2
    if m != n:
        raise BadCount(f"icosahedral clouds have 10*4^k + 2 nodes (12, 42, 162, ...), got {n}")
    v, f = icosahedron()
    for _ in range(k):
        v, f = subdivide(v, f)
    return (v, f) if return_faces else v


def read_nodes(path):
    """Read a node file: one whitespace separated ``x y z`` triple per line.

    Blank lines and lines starting with ``#`` are skipped; rows are
    normalized onto the sphere.
    """
    path = Path(path)
    if not path.exists():
        raise FileParse(f"node file not found: {path}")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.replace(",", " ").split()
        if len(parts) != 3:
            raise FileParse(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise FileParse(f"{path}:{lineno}: {exc}") from None
    pts = np.array(rows, dtype=float).reshape(-1, 3)
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms == 0.0) or not np.all(np.isfinite(pts)):
        raise FileParse(f"{path}: zero or non-finite row")
    return pts / norms[:, None]


def write_nodes(path, nodes):
    np.savetxt(path, np.asarray(nodes), fmt="%.17g")


def generate_cloud(kind, n=None, path=None):
    """Node coordinates as an ``(n, 3)`` array.

    ``kind`` is ``"fibonacci"``, ``"icosahedral"`` (``n = 10*4^k + 2``) or
    ``"file"`` (``path`` required).
    """
    if kind == "file":
        if path is None:
            raise FileParse("file kind needs a path")
        return read_nodes(path)
    if kind not in CLOUD_KINDS:
        raise BadCount(f"unknown cloud kind {kind!r}; valid kinds: {', '.join(CLOUD_KINDS)}")
    if n is None or int(n) != n or n < 12:
        raise BadCount(f"generated clouds need n >= 12, got {n}")
    n = int(n)
    if kind == "fibonacci":
        return fibonacci_points(n)
    return icosahedral_points(n)


def triangulate(nodes):
    """Triangulate nodes on S^2 as their convex hull.

    Faces are oriented counter-clockwise seen from outside.
    """
    nodes = np.asarray(nodes, dtype=float)
    if len(nodes) < 4:
        raise DegenerateCloud("need at least 4 nodes")
    try:
        hull = ConvexHull(nodes)
    except QhullError as exc:
        raise DegenerateCloud(f"convex hull failed: {exc}") from None
    if len(hull.vertices) != len(nodes):
        raise DegenerateCloud("some nodes are not hull vertices (duplicates?)")
    tri = hull.simplices.copy()
    a, b, c = (nodes[tri[:, i]] for i in range(3))
    flip = np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    V, F = len(nodes), len(tri)
    E = len(edges(tri))
    if V - E + F != 2:
        raise DegenerateCloud(f"Euler characteristic {V - E + F} != 2")
    return tri


def edges(triangles):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def circumcenters(nodes, triangles):
    """Spherical circumcenters; the normalized centroid is used for
    (numerically) collinear triangles."""
    a, b, c = (nodes[triangles[:, i]] for i in range(3))
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n, axis=1)
    cen = a + b + c
    bad = nn < 1e-14
    n[bad] = cen[bad]
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    flip = np.einsum("ij,ij->i", n, cen) < 0
    n[flip] *= -1
    return n


def resolution(nodes, triangles):
    """Discretization parameter ``h``: largest distance from a point of the
    sphere to its nearest node, evaluated at triangle circumcenters."""
    nodes = np.asarray(nodes, dtype=float)
    if len(nodes) < 4 or len(triangles) == 0:
        raise DegenerateCloud("resolution needs a valid triangulation")
    cc = circumcenters(nodes, triangles)
    return float(np.max(geodesic_distance(cc, nodes[triangles[:, 0]])))


def brute_force_resolution(nodes, n_samples=10**6, seed=0):
    """Monte Carlo lower bound on ``h`` from random probe points."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, 3))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    chord, _ = cKDTree(nodes).query(z)
    return float(np.max(2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))))


def triangle_diameter(nodes, triangles):
    """Largest geodesic edge length over the triangulation."""
    a, b, c = (nodes[triangles[:, i]] for i in range(3))
    return float(max(geodesic_distance(a, b).max(), geodesic_distance(b, c).max(),
                     geodesic_distance(c, a).max()))


def interior_angles(nodes, triangles):
    """Planar interior angles of the flat hull triangles, shape ``(m, 3)``."""
    p = [nodes[triangles[:, i]] for i in range(3)]
    out = np.empty((len(triangles), 3))
    for i in range(3):
        u = p[(i + 1) % 3] - p[i]
        w = p[(i + 2) % 3] - p[i]
        cos = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
        out[:, i] = np.arccos(np.clip(cos, -1.0, 1.0))
    return out


def spherical_triangle_areas(nodes, triangles):
    """Areas (spherical excess) of the geodesic triangles."""
    a, b, c = (nodes[triangles[:, i]] for i in range(3))
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


def search_radius(h, alpha=0.5, C_r=2.0, diam=None):
    """Stencil radius ``C_r * h**alpha``.

    When ``diam`` is given and the radius does not exceed it, the constant
    is raised (with a warning) so that ``r = 1.05 * diam``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    r = C_r * h**alpha
    if diam is not None and r <= diam:
        new_c = 1.05 * diam / h**alpha
        warnings.warn(
            f"search radius {r:.4g} does not exceed triangulation diameter {diam:.4g}; "
            f"raising C_r from {C_r:.4g} to {new_c:.4g}",
            RuntimeWarning,
            stacklevel=2,
        )
        r = new_c * h**alpha
    return float(r)


@dataclass(frozen=True)
class Stencil:
    """Neighborhood of one node projected to its tangent plane.

    ``projected`` holds frame coordinates of the normal coordinates of each
    neighbor; ``dtheta`` is the directional resolution, the largest angle
    between an arbitrary unit direction and the nearest neighbor direction
    (half the largest gap between consecutive directions).
    """

    center_index: int
    neighbor_indices: np.ndarray
    projected: np.ndarray
    distances: np.ndarray
    directions: np.ndarray
    dtheta: float


def _angular_resolution(angles):
    if len(angles) == 0:
        return np.pi
    a = np.sort(np.mod(angles, 2 * np.pi))
    gaps = np.diff(np.concatenate([a, [a[0] + 2 * np.pi]]))
    return float(gaps.max() / 2.0)


@dataclass(eq=False)
class PointCloud:
    """Nodes, triangulation and stencil geometry of a discretized sphere.

    Build with :meth:`from_nodes`. The neighbor structure is stored in
    compressed-row form: the neighbors of node ``i`` are
    ``nbr[indptr[i]:indptr[i+1]]`` with frame coordinates ``z`` and
    geodesic distances ``dist``.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    h: float
    r: float
    max_angle: float
    diam: float
    e1: np.ndarray = field(repr=False)
    e2: np.ndarray = field(repr=False)
    indptr: np.ndarray = field(repr=False)
    nbr: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    dist: np.ndarray = field(repr=False)
    dtheta_nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    alpha: float = 0.5
    C_r: float = 2.0

    @classmethod
    def from_nodes(cls, nodes, *, r=None, alpha=0.5, C_r=2.0, triangles=None):
        nodes = np.asarray(nodes, dtype=float)
        nodes = nodes / np.linalg.norm(nodes, axis=1, keepdims=True)
        tri = triangulate(nodes) if triangles is None else np.asarray(triangles)
        h = resolution(nodes, tri)
        diam = triangle_diameter(nodes, tri)
        if r is None:
            r = search_radius(h, alpha, C_r, diam=diam)
        max_angle = float(interior_angles(nodes, tri).max())
        e1, e2 = tangent_frame(nodes)
        indptr, nbr, z, dist = _neighborhoods(nodes, e1, e2, r)
        counts = np.diff(indptr)
        if np.any(counts == 0):
            raise EmptyStencil(f"node {int(np.argmin(counts))} has no neighbor within r={r:.4g}")
        ang = np.arctan2(z[:, 1], z[:, 0])
        dth = np.array([_angular_resolution(ang[indptr[i]:indptr[i + 1]]) for i in range(len(nodes))])
        area = spherical_triangle_areas(nodes, tri)
        w = np.zeros(len(nodes))
        for k in range(3):
            np.add.at(w, tri[:, k], area / 3.0)
        w /= w.sum()
        return cls(nodes=nodes, triangles=tri, h=h, r=float(r), max_angle=max_angle, diam=diam,
                   e1=e1, e2=e2, indptr=indptr, nbr=nbr, z=z, dist=dist, dtheta_nodes=dth,
                   weights=w, alpha=alpha, C_r=C_r)

    @classmethod
    def generate(cls, kind, n=None, path=None, **kwargs):
        return cls.from_nodes(generate_cloud(kind, n, path), **kwargs)

    @property
    def n(self):
        return len(self.nodes)

    @property
    def dtheta(self):
        """Worst directional resolution over all stencils."""
        return float(self.dtheta_nodes.max())

    @property
    def center(self):
        """Center node index of each stored neighbor entry."""
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def stencil(self, i):
        return build_stencil(self, i)

    def frame_matrix(self, i):
        return np.stack([self.e1[i], self.e2[i]])

    def to_tangent(self, vec2):
        """Frame coordinates ``(n, 2)`` to ambient tangent vectors ``(n, 3)``."""
        return vec2[:, :1] * self.e1 + vec2[:, 1:] * self.e2

    def to_frame(self, vec3):
        return np.column_stack([np.einsum("ij,ij->i", vec3, self.e1), np.einsum("ij,ij->i", vec3, self.e2)])

    def write_obj(self, path):
        with open(path, "w") as fh:
            for p in self.nodes:
                fh.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
            for t in self.triangles:
                fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def _neighborhoods(nodes, e1, e2, r):
    chord = 2.0 * np.sin(min(r, np.pi) / 2.0)
    tree = cKDTree(nodes)
    lists = tree.query_ball_point(nodes, chord + 1e-12)
    indptr = np.zeros(len(nodes) + 1, dtype=np.int64)
    nbrs = []
    for i, lst in enumerate(lists):
        arr = np.array(sorted(j for j in lst if j != i), dtype=np.int64)
        nbrs.append(arr)
        indptr[i + 1] = indptr[i] + len(arr)
    nbr = np.concatenate(nbrs) if nbrs else np.zeros(0, dtype=np.int64)
    center = np.repeat(np.arange(len(nodes)), np.diff(indptr))
    dist = geodesic_distance(nodes[center], nodes[nbr])
    keep = dist <= r
    if not np.all(keep):
        nbr, center, dist = nbr[keep], center[keep], dist[keep]
        counts = np.bincount(center, minlength=len(nodes))
        indptr = np.concatenate([[0], np.cumsum(counts)])
    t = log_map(nodes[center], nodes[nbr])
    z = np.column_stack([np.einsum("ij,ij->i", t, e1[center]), np.einsum("ij,ij->i", t, e2[center])])
    return indptr, nbr, z, dist


def build_stencil(cloud, node_index):
    """The projected neighborhood of a single node."""
    i = int(node_index)
    s = slice(cloud.indptr[i], cloud.indptr[i + 1])
    nb = cloud.nbr[s]
    if len(nb) == 0:
        raise EmptyStencil(f"node {i} has no neighbors within r={cloud.r:.4g}")
    z = cloud.z[s]
    d = cloud.dist[s]
    return Stencil(
        center_index=i,
        neighbor_indices=nb.copy(),
        projected=z.copy(),
        distances=d.copy(),
        directions=z / np.linalg.norm(z, axis=1, keepdims=True),
        dtheta=float(cloud.dtheta_nodes[i]),
    )
