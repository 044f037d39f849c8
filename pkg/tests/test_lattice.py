import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fembae.errors import InvalidParameterError, TopologyError
from fembae.lattice import (block_cells, build_partition, build_stencil, canonical_offset,
                            cell_nodes, dihedral_images, disk_hull_cells, node_cells,
                            q1_element_matrix, static_stencil, stencil_symbol)

from oracles import q1_element_brute

wavenumbers = st.builds(complex, st.floats(0.05, 3.0), st.floats(0.0, 1.0))
spacings = st.floats(0.25, 4.0)


def test_static_stencil_values():
    s = static_stencil(1.0)
    g = s.as_grid()
    assert g[1, 1] == pytest.approx(8 / 3, abs=1e-15)
    for o in [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)]:
        assert s.coefficient(o) == pytest.approx(-1 / 3, abs=1e-15)


def test_center_coefficient_kh_one():
    s = build_stencil(1.0, 1.0)
    assert s.coefficient((0, 0)) == pytest.approx(8 / 3 - 4 / 9, abs=1e-14)


def test_element_matrix_matches_quadrature():
    for K, h in [(0.0, 1.0), (1.0, 1.0), (0.7 + 0.2j, 2.5)]:
        np.testing.assert_allclose(q1_element_matrix(K, h), q1_element_brute(K, h), atol=1e-13)


@given(wavenumbers, spacings)
@settings(max_examples=40, deadline=None)
def test_stencil_symmetries(K, h):
    s = build_stencil(K, h)
    for o in s.offsets:
        assert s.coefficient(o) == s.coefficient((-o[0], -o[1]))
        for img in dihedral_images(o):
            assert s.coefficient(img) == pytest.approx(s.coefficient(o), abs=1e-14)
    assert s.coefficient((2, 0)) == 0
    assert len(s.offsets) == 9


@given(spacings)
@settings(max_examples=20, deadline=None)
def test_static_row_sum_zero(h):
    assert abs(static_stencil(h).coefficients.sum()) < 1e-13


def test_build_stencil_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        build_stencil(1.0, 0.0)
    with pytest.raises(InvalidParameterError):
        build_stencil(-1.0, 1.0)
    with pytest.raises(InvalidParameterError):
        build_stencil(1.0 - 0.1j, 1.0)


def test_symbol_examples():
    s0 = static_stencil()
    assert abs(stencil_symbol(s0, (0.0, 0.0))) < 1e-14
    brute = sum(c * (-1) ** (o1 + o2) for (o1, o2), c in zip(s0.offsets, s0.coefficients))
    assert stencil_symbol(s0, (np.pi, np.pi)) == pytest.approx(brute, abs=1e-14)


@given(wavenumbers, st.tuples(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi)))
@settings(max_examples=50, deadline=None)
def test_symbol_even_and_real(K, xi):
    s = build_stencil(K, 1.0)
    v = stencil_symbol(s, xi)
    assert v == pytest.approx(stencil_symbol(s, (-xi[0], -xi[1])), abs=1e-12)
    assert v == pytest.approx(stencil_symbol(s, (-xi[0], xi[1])), abs=1e-12)
    if K.imag == 0:
        assert abs(v.imag) < 1e-12


def test_static_symbol_positive():
    t = np.linspace(-np.pi, np.pi, 201)
    x1, x2 = np.meshgrid(t, t, indexing="ij")
    v = stencil_symbol(static_stencil(), np.stack([x1, x2], -1)).real
    zero = (np.abs(x1) < 1e-12) & (np.abs(x2) < 1e-12)
    assert np.all(v[~zero] > 0)
    assert zero.sum() == 1 and abs(v[zero][0]) < 1e-14


def test_line_coefficients_reproduce_symbol():
    s = build_stencil(0.8 + 0.1j, 1.0)
    xi1, xi2 = 0.37, -1.2
    a, b = s.line_coefficients(xi1)
    assert a + b * np.cos(xi2) == pytest.approx(stencil_symbol(s, (xi1, xi2)), abs=1e-13)


def test_canonical_offset():
    assert canonical_offset((-2, 5)) == (5, 2)
    assert len(dihedral_images((1, 0))) == 4
    assert len(dihedral_images((2, 1))) == 8


# --- partitions ---------------------------------------------------------------------

def test_single_cell_partition():
    p = build_partition({(0, 0)})
    assert len(p.boundary_nodes) == 4
    assert len(p.near_nodes) == 16
    assert p.boundary_nodes[0] == (0, 0)


def test_block_partition_counts():
    p = build_partition(block_cells(2, 2))
    assert len(p.boundary_nodes) == 8


def test_hole_is_rejected():
    ring = block_cells(3, 3) - {(1, 1)}
    with pytest.raises(TopologyError):
        build_partition(ring)


def test_disconnected_and_pinched_rejected():
    with pytest.raises(TopologyError):
        build_partition({(0, 0), (3, 3)})
    with pytest.raises(TopologyError):
        build_partition({(0, 0), (1, 1)})
    with pytest.raises(TopologyError):
        build_partition(set())


def _signed_area(loop):
    x = np.array(loop, dtype=float)
    return 0.5 * np.sum(x[:, 0] * np.roll(x[:, 1], -1) - np.roll(x[:, 0], -1) * x[:, 1])


@given(st.floats(0.3, 12.0))
@settings(max_examples=30, deadline=None)
def test_partition_invariants_on_disk_hulls(radius):
    cells = disk_hull_cells(radius)
    p = build_partition(cells)
    interior = set(p.interior_nodes)
    exterior_cells_nodes = {n for node in p.boundary_nodes for c in node_cells(node)
                            if c not in cells for n in cell_nodes(c)}
    assert set(p.boundary_nodes) <= set(p.near_nodes)
    assert set(p.boundary_nodes) == interior & exterior_cells_nodes
    assert p.near_nodes[:p.n_boundary] == p.boundary_nodes
    assert p.boundary_nodes[0] == min(p.boundary_nodes)
    assert _signed_area(p.boundary_nodes) > 0
    for node in p.boundary_nodes:
        around = node_cells(node)
        assert any(c in cells for c in around) and any(c not in cells for c in around)
    # hull contains the disk: every boundary node is at distance >= radius
    r = np.hypot(*np.array(p.boundary_nodes, dtype=float).T)
    assert np.all(r >= radius - 1e-12)


def test_stencil_digest_stable():
    assert build_stencil(0.5, 1.0).digest() == build_stencil(0.5, 1.0).digest()
    assert build_stencil(0.5, 1.0).digest() != build_stencil(0.6, 1.0).digest()
