import warnings

import numpy as np
import pytest

from sphere_ot.cloud import (
    PointCloud,
    brute_force_resolution,
    build_stencil,
    edges,
    fibonacci_points,
    generate_cloud,
    icosahedral_points,
    interior_angles,
    read_nodes,
    resolution,
    search_radius,
    spherical_triangle_areas,
    triangle_diameter,
    triangulate,
    write_nodes,
)
from sphere_ot.exceptions import BadCount, DegenerateCloud, EmptyStencil, FileParse
from sphere_ot.geometry import geodesic_distance

# angle between a vertex of the regular icosahedron and the center of an
# adjacent face, from cos = sqrt((5 + 2 sqrt 5) / 15)
ICOSAHEDRON_H = float(np.arccos(np.sqrt((5 + 2 * np.sqrt(5)) / 15)))


def nearest_neighbor_distances(nodes):
    d = geodesic_distance(nodes[:, None, :], nodes[None, :, :])
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def test_icosahedron_regular():
    nodes = generate_cloud("icosahedral", 12)
    nn = nearest_neighbor_distances(nodes)
    np.testing.assert_allclose(nn, nn[0], atol=1e-14)
    tri = triangulate(nodes)
    assert len(tri) == 20
    assert len(edges(tri)) == 30


@pytest.mark.parametrize("kind,n", [("fibonacci", 1000), ("icosahedral", 642), ("fibonacci", 37)])
def test_generated_clouds_quasi_uniform(kind, n):
    nodes = generate_cloud(kind, n)
    assert nodes.shape == (n, 3)
    np.testing.assert_allclose(np.linalg.norm(nodes, axis=1), 1.0, atol=1e-15)
    nn = nearest_neighbor_distances(nodes)
    assert nn.max() / nn.min() <= 3.0


def test_bad_counts_and_kinds():
    with pytest.raises(BadCount):
        generate_cloud("icosahedral", 100)
    with pytest.raises(BadCount):
        generate_cloud("fibonacci", 5)
    with pytest.raises(BadCount, match="valid kinds"):
        generate_cloud("cube", 100)
    assert len(icosahedral_points(42)) == 42


def test_node_file_round_trip(tmp_path):
    pts = np.array([[2.0, 0, 0], [0, 0, -3.0], [1.0, 1.0, 0]])
    path = tmp_path / "nodes.txt"
    path.write_text("# header\n" + "\n".join(" ".join(map(str, p)) for p in pts) + "\n\n")
    got = read_nodes(path)
    np.testing.assert_allclose(got, pts / np.linalg.norm(pts, axis=1, keepdims=True))
    write_nodes(tmp_path / "again.txt", got)
    np.testing.assert_allclose(read_nodes(tmp_path / "again.txt"), got, atol=1e-15)
    np.testing.assert_allclose(generate_cloud("file", path=path), got)


def test_node_file_errors(tmp_path):
    with pytest.raises(FileParse):
        read_nodes(tmp_path / "missing.txt")
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2\n")
    with pytest.raises(FileParse):
        read_nodes(bad)
    bad.write_text("0 0 0\n")
    with pytest.raises(FileParse):
        read_nodes(bad)


@pytest.mark.parametrize("n", [12, 162, 500])
def test_triangulation_is_closed_sphere(n):
    nodes = fibonacci_points(n) if n == 500 else icosahedral_points(n)
    tri = triangulate(nodes)
    assert n - len(edges(tri)) + len(tri) == 2
    area = spherical_triangle_areas(nodes, tri).sum()
    assert area == pytest.approx(4 * np.pi, rel=1e-10)
    # every node appears in a closed fan: each edge is shared by exactly two faces
    e = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    assert np.all(counts == 2)


def test_fibonacci_angles_below_gamma():
    nodes = fibonacci_points(500)
    tri = triangulate(nodes)
    assert interior_angles(nodes, tri).max() < np.deg2rad(170)


def test_degenerate_clouds():
    with pytest.raises(DegenerateCloud):
        triangulate(np.eye(3))
    equator = np.column_stack([np.cos(np.linspace(0, 2 * np.pi, 8, endpoint=False)),
                               np.sin(np.linspace(0, 2 * np.pi, 8, endpoint=False)), np.zeros(8)])
    with pytest.raises(DegenerateCloud):
        triangulate(equator)


def test_icosahedron_resolution_matches_closed_form_and_brute_force():
    nodes = icosahedral_points(12)
    h = resolution(nodes, triangulate(nodes))
    assert h == pytest.approx(ICOSAHEDRON_H, abs=1e-12)
    brute = brute_force_resolution(nodes, 10**5, seed=1)
    assert brute <= h + 1e-12
    assert brute > h - 5e-3


def test_resolution_halves_under_subdivision():
    hs = [PointCloud.generate("icosahedral", n).h for n in (162, 642, 2562)]
    for a, b in zip(hs, hs[1:]):
        assert 1.8 < a / b < 2.2


def test_search_radius():
    assert search_radius(0.01, 0.5, 1.0) == pytest.approx(0.1)
    with pytest.warns(RuntimeWarning):
        r = search_radius(0.5, 0.5, 0.1, diam=1.0)
    assert r > 1.0


def test_radius_exceeds_triangle_diameter():
    for kind, n in (("icosahedral", 162), ("fibonacci", 300), ("icosahedral", 642)):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            c = PointCloud.generate(kind, n)
        assert c.r > c.diam
        assert c.h / c.r < 1


def test_icosahedron_stencil_has_five_neighbors():
    c = PointCloud.from_nodes(icosahedral_points(12), r=1.2)
    for i in range(12):
        assert len(build_stencil(c, i).neighbor_indices) == 5


def test_stencil_geometry(ico162):
    c = ico162
    tri_nb = {i: set() for i in range(c.n)}
    for a, b in edges(c.triangles):
        tri_nb[a].add(b)
        tri_nb[b].add(a)
    for i in range(0, c.n, 7):
        s = c.stencil(i)
        d = geodesic_distance(c.nodes[i], c.nodes[s.neighbor_indices])
        np.testing.assert_allclose(np.linalg.norm(s.projected, axis=1), d, atol=1e-10)
        np.testing.assert_allclose(s.distances, d, atol=1e-12)
        assert np.all(d <= c.r)
        assert tri_nb[i] <= set(s.neighbor_indices.tolist())
        np.testing.assert_allclose(np.linalg.norm(s.directions, axis=1), 1.0)
        assert 0 < s.dtheta < np.pi / 2
    # neighbor lists are complete: brute force comparison
    d_all = geodesic_distance(c.nodes[:, None], c.nodes[None])
    for i in (0, 50, 161):
        want = set(np.flatnonzero((d_all[i] <= c.r) & (np.arange(c.n) != i)).tolist())
        assert set(c.stencil(i).neighbor_indices.tolist()) == want


def test_refinement_trends():
    clouds = [PointCloud.generate("icosahedral", n) for n in (162, 642, 2562)]
    dth = [c.dtheta for c in clouds]
    diam = [c.diam for c in clouds]
    size = [np.diff(c.indptr).min() for c in clouds]
    assert dth[0] > dth[1] > dth[2]
    assert diam[0] > diam[1] > diam[2]
    assert size[0] < size[1] < size[2]
    for c in clouds:
        assert c.max_angle < np.deg2rad(170)


def test_empty_stencil():
    with pytest.raises(EmptyStencil):
        PointCloud.from_nodes(icosahedral_points(12), r=0.5)


def test_weights_sum_to_one_and_are_positive(fib500):
    assert fib500.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(fib500.weights > 0)


def test_obj_export(tmp_path, ico162):
    path = tmp_path / "c.obj"
    ico162.write_obj(path)
    lines = path.read_text().splitlines()
    assert sum(l.startswith("v ") for l in lines) == 162
    assert sum(l.startswith("f ") for l in lines) == len(ico162.triangles)


def test_triangle_diameter_icosahedron():
    nodes = icosahedral_points(12)
    tri = triangulate(nodes)
    edge = geodesic_distance(nodes[tri[:, 0]], nodes[tri[:, 1]])
    np.testing.assert_allclose(edge, np.arctan(2), atol=1e-12)
    assert triangle_diameter(nodes, tri) == pytest.approx(np.arctan(2), abs=1e-12)
