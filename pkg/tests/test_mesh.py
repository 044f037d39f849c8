import dataclasses
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fembae.errors import GeometryError, InvalidParameterError, MeshParseError
from fembae.lattice import build_partition, disk_hull_cells
from fembae.mesh import (build_annular_layer_mesh, circle_node_count, edge_counts, parse_gmsh,
                         partition_from_mesh, validate_interface, write_gmsh)

SQUARE = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
6
1 1 2 1 1 1 2
2 1 2 1 1 2 3
3 1 2 1 1 3 4
4 1 2 1 1 4 1
5 2 2 3 3 1 2 3
6 2 2 3 3 1 3 4
$EndElements
"""

ONE_TRIANGLE = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
3
1 0 0 0
2 1 0 0
3 0 1 0
$EndNodes
$Elements
1
1 2 2 3 3 1 2 3
$EndElements
"""


@pytest.fixture(scope="module")
def r10():
    return build_annular_layer_mesh(10.0, 1.0, 1.0)


def test_r3_circle_counts_and_lengths():
    mesh, _ = build_annular_layer_mesh(3.0, 1.0, 1.0)
    assert len(mesh.gamma_in) == 20
    x = mesh.nodes[mesh.gamma_in]
    chords = np.linalg.norm(np.roll(x, -1, axis=0) - x, axis=1)
    np.testing.assert_allclose(chords, 0.93860679, atol=1e-7)
    assert 2 * np.pi * 3 / 20 == pytest.approx(0.94247781, abs=1e-7)
    np.testing.assert_allclose(np.hypot(x[:, 0], x[:, 1]), 3.0, atol=1e-12)


@pytest.mark.parametrize("sigma, count", [(0.5, 40), (0.25, 76)])
def test_refined_circle_counts(sigma, count):
    mesh, _ = build_annular_layer_mesh(3.0, 1.0, sigma)
    assert len(mesh.gamma_in) == count
    assert not mesh.check()


def test_circle_node_count_spacing():
    for R in (3.0, 7.5, 10.0, 30.0):
        for s in (1.0, 0.5, 0.25):
            n = circle_node_count(R, 1.0, s)
            assert n % 4 == 0
            assert 2 * np.pi * R / n <= s + 1e-12


def test_r10_quality_and_interface(r10):
    mesh, partition = r10
    assert mesh.qualities().min() > 0.2
    assert validate_interface(mesh, partition) == []
    assert len(mesh.gamma_in) == 64


def test_conformity_and_orientation(r10):
    mesh, _ = r10
    assert np.all(mesh.signed_areas() > 0)
    counts = edge_counts(mesh.triangles)
    loops = set()
    for loop in (mesh.gamma_in, mesh.gamma_ex):
        for a, b in zip(loop, np.roll(loop, -1)):
            loops.add((min(a, b), max(a, b)))
    for e, c in counts.items():
        assert c == (1 if e in loops else 2)


def test_interface_is_exact(r10):
    mesh, _ = r10
    lat = np.array(mesh.gamma_ex_lattice, dtype=float)
    assert np.array_equal(mesh.nodes[mesh.gamma_ex], lat)


def test_outer_loop_is_hull_boundary(r10):
    _, partition = r10
    assert partition.boundary_nodes == build_partition(disk_hull_cells(11.0)).boundary_nodes


def test_determinism():
    a, _ = build_annular_layer_mesh(10.0, 1.0, 0.5, 15.0)
    b, _ = build_annular_layer_mesh(10.0, 1.0, 0.5, 15.0)
    assert a == b


@given(st.floats(2.0, 14.0), st.sampled_from([1.0, 0.5]), st.floats(1.0, 4.0))
@settings(max_examples=12, deadline=None)
def test_mesher_invariants(radius, sigma, gap):
    mesh, partition = build_annular_layer_mesh(radius, 1.0, sigma, radius + gap)
    assert not mesh.check()
    assert np.all(mesh.signed_areas() > 0)
    assert validate_interface(mesh, partition) == []
    r = np.hypot(*mesh.nodes[mesh.gamma_in].T)
    np.testing.assert_allclose(r, radius, atol=1e-12 * radius)


def test_roundtrip_through_gmsh(r10):
    mesh, _ = r10
    back = parse_gmsh(write_gmsh(mesh), 1.0, (0.0, 0.0), 10.0)
    assert back == mesh
    assert back.gamma_ex_lattice == mesh.gamma_ex_lattice


def test_roundtrip_from_stream(tmp_path):
    mesh, _ = build_annular_layer_mesh(3.0, 1.0, 0.5)
    path = tmp_path / "m.msh"
    path.write_text(write_gmsh(mesh))
    with open(path) as fh:
        assert parse_gmsh(fh) == mesh


def test_partition_from_parsed_mesh(r10):
    mesh, partition = r10
    assert partition_from_mesh(parse_gmsh(write_gmsh(mesh))).boundary_nodes == partition.boundary_nodes


def test_square_with_all_edges_on_scatterer():
    mesh = parse_gmsh(SQUARE)
    assert len(mesh.gamma_in) == 4
    assert len(mesh.gamma_ex) == 0
    assert mesh.n_triangles == 2


def test_untagged_file_is_rejected():
    with pytest.raises(MeshParseError, match="tagged"):
        parse_gmsh(ONE_TRIANGLE)


def test_bad_version_reports_line():
    with pytest.raises(MeshParseError) as info:
        parse_gmsh(SQUARE.replace("2.2 0 8", "4.1 0 8"))
    assert info.value.line == 2


def test_malformed_node_reports_line():
    with pytest.raises(MeshParseError) as info:
        parse_gmsh(SQUARE.replace("3 1 1 0", "3 1 x 0"))
    assert info.value.line == 8


def test_non_manifold_loop_rejected():
    text = SQUARE.replace("4 1 2 1 1 4 1", "4 1 2 1 1 1 3")
    with pytest.raises(MeshParseError, match="manifold"):
        parse_gmsh(text)


def test_perturbed_outer_node_is_reported(r10):
    mesh, partition = r10
    nodes = mesh.nodes.copy()
    nodes[mesh.gamma_ex[5], 0] += 0.1
    bad = dataclasses.replace(mesh, nodes=nodes)
    violations = validate_interface(bad, partition)
    assert len(violations) == 1
    assert "coordinate" in violations[0]


def test_partition_of_other_radius_is_reported(r10):
    mesh, _ = r10
    other = build_partition(disk_hull_cells(15.0))
    violations = validate_interface(mesh, other)
    assert len(violations) == 1
    assert "count" in violations[0]


def test_geometry_errors():
    with pytest.raises(GeometryError):
        build_annular_layer_mesh(10.0, 1.0, 1.0, 10.5)
    with pytest.raises(InvalidParameterError):
        build_annular_layer_mesh(10.0, 1.0, 1.5)
    with pytest.raises(InvalidParameterError):
        build_annular_layer_mesh(-1.0, 1.0, 1.0)


def test_thick_layer_gets_steiner_points():
    mesh, partition = build_annular_layer_mesh(10.0, 1.0, 1.0, 20.0)
    assert mesh.n_nodes > len(mesh.gamma_in) + len(mesh.gamma_ex)
    assert mesh.qualities().min() > 0.2
    assert validate_interface(mesh, partition) == []
