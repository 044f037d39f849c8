import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fembae.bae import compute_b, required_offsets
from fembae.errors import IncompleteTableError, InvalidParameterError, SingularIntegrandError
from fembae.fem import assemble_exterior
from fembae.greens import (GreensTable, box_offsets, effective_stencil, greens_trapezoid,
                           greens_value, richardson_limit, table_residual, tabulate_greens)
from fembae.lattice import block_cells, build_partition, build_stencil, canonical_offset
from fembae.solve import ring_nodes

from oracles import truncated_greens


def _coeffs(stencil):
    return {tuple(o): c for o, c in zip(stencil.offsets, stencil.coefficients)}


@pytest.fixture(scope="module")
def strong_oracle():
    s = build_stencil(1.0, 1.0)
    return s, truncated_greens(_coeffs(effective_stencil(s, 0.5)), 100)


def test_origin_matches_truncated_solve(strong_oracle):
    s, oracle = strong_oracle
    g = greens_value(s, (0, 0), 0.5)
    ref = oracle((0, 0))
    assert abs(g - ref) / abs(ref) < 1e-6


@pytest.mark.parametrize("eta", [0.3, 0.6])
def test_table_matches_oracle_up_to_radius_ten(eta):
    s = build_stencil(0.8, 1.0)
    oracle = truncated_greens(_coeffs(effective_stencil(s, eta)), 90)
    table = tabulate_greens(s, box_offsets(10), eta)
    for p, q in table.reps:
        if np.hypot(p, q) > 10:
            continue
        ref = oracle((int(p), int(q)))
        assert abs(table[(p, q)] - ref) <= 1e-5 * abs(ref)


def test_trapezoid_route_agrees_with_line_route():
    s = build_stencil(0.7, 1.0)
    offs = [(0, 0), (3, 1), (5, 5)]
    trap = greens_trapezoid(s, offs, 0.2)
    line = [greens_value(s, o, 0.2) for o in offs]
    np.testing.assert_allclose(trap, line, atol=1e-9)


def test_trapezoid_route_rejects_zero_absorption():
    with pytest.raises(SingularIntegrandError):
        greens_trapezoid(build_stencil(0.5, 1.0), [(0, 0)], 0.0)


@given(st.floats(0.1, 2.0), st.floats(0.0, 0.5),
       st.tuples(st.integers(-6, 6), st.integers(-6, 6)))
@settings(max_examples=25, deadline=None)
def test_symmetry_is_exact(kh, eta, offset):
    table = tabulate_greens(build_stencil(kh, 1.0), [offset], eta)
    v = table[offset]
    assert table[(-offset[0], -offset[1])] == v
    assert table[(offset[1], -offset[0])] == v
    assert table[(-offset[1], offset[0])] == v


def test_residual_at_offset_three_two():
    s = build_stencil(0.6, 1.0)
    table = tabulate_greens(s, box_offsets(5), 0.1)
    assert table_residual(table, [(3, 2)])[0] < 1e-8


@pytest.mark.parametrize("kh", [0.1, 0.5, 1.0, 2.0])
def test_residual_with_limiting_absorption(kh):
    table = tabulate_greens(build_stencil(kh, 1.0), box_offsets(13), 0.0)
    offs = [(p, q) for p in range(12) for q in range(p + 1)]
    assert table_residual(table, offs).max() < 1e-8


def test_orbit_of_unit_offset():
    table = tabulate_greens(build_stencil(0.5, 1.0), [(1, 0), (-1, 0), (0, 1), (0, -1)], 0.2)
    assert len(table) == 1
    vals = [table[o] for o in [(1, 0), (-1, 0), (0, 1), (0, -1)]]
    assert len(set(vals)) == 1
    assert len(table.entries()) == 4


def test_empty_offsets():
    table = tabulate_greens(build_stencil(0.5, 1.0), [], 0.0)
    assert len(table) == 0
    assert table.entries() == {}
    with pytest.raises(IncompleteTableError):
        table[(0, 0)]


def test_entry_count_matches_enumeration():
    partition = build_partition(block_cells(2, 2))
    assert partition.n_boundary == 8
    targets, _ = ring_nodes(40, 64)
    table = tabulate_greens(build_stencil(0.5, 1.0), required_offsets(partition, targets), 0.1)
    near = list(partition.near_nodes)
    brute = set()
    for a in near:
        for b in near + [tuple(t) for t in targets]:
            brute.add(canonical_offset((a[0] - b[0], a[1] - b[1])))
    assert len(table) == len(brute)


def test_missing_offset_raises():
    table = tabulate_greens(build_stencil(0.5, 1.0), [(1, 0)], 0.1)
    with pytest.raises(IncompleteTableError):
        table[(2, 0)]
    with pytest.raises(IncompleteTableError):
        table.lookup(np.array([[1, 0], [9, 9]]))


def test_b_vanishes_off_the_loop():
    partition = build_partition(block_cells(2, 2))
    s = build_stencil(0.7, 1.0)
    table = tabulate_greens(s, box_offsets(12), 0.1)
    alpha = assemble_exterior(partition, table.stencil)
    loop = set(partition.boundary_nodes)
    outer = [n for n in partition.near_nodes if n not in loop]
    worst = max(abs(compute_b(table, alpha, j, m)) for j in outer[:6] for m in partition.near_nodes)
    assert worst < 1e-8
    assert max(abs(compute_b(table, alpha, j, j)) for j in loop) > 1e-2


def test_b_without_row_raises():
    partition = build_partition(block_cells(2, 2))
    table = tabulate_greens(build_stencil(0.7, 1.0), box_offsets(8), 0.1)
    alpha = assemble_exterior(partition, table.stencil)
    with pytest.raises(IncompleteTableError):
        compute_b(table, alpha, (40, 40), (0, 0))


def test_richardson_differences_decrease():
    s = build_stencil(0.5, 1.0)
    etas = (0.1, 0.05, 0.025, 0.0125)
    vals = [greens_value(s, (2, 1), e) for e in etas]
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] < diffs[:-1])
    extrap = greens_value(s, (2, 1), 0.0, limit="richardson")
    exact = greens_value(s, (2, 1), 0.0)
    assert abs(extrap - exact) < 2e-3
    assert richardson_limit([1.0, 0.5], [3.0, 2.0]) == pytest.approx(1.0)


def test_continuum_limit_at_small_kh():
    # G approaches (i/4) H0(K r) once K r is small compared to 1 but r >> h
    from fembae.analytic import hankel1
    kh = 0.05
    table = tabulate_greens(build_stencil(kh, 1.0), [(8, 0)], 0.0)
    ref = 0.25j * hankel1(0, kh * 8)
    assert abs(table[(8, 0)] - ref) / abs(ref) < 1e-2


@pytest.mark.parametrize("ray", [(1, 0), (1, 1), (2, 1)])
def test_decay_on_rays_with_absorption(ray):
    s = build_stencil(1.0, 1.0)
    offs = [(ray[0] * t, ray[1] * t) for t in range(3, 30)]
    table = tabulate_greens(s, offs, 0.2)
    mags = np.abs([table[o] for o in offs])
    assert np.all(np.diff(mags) < 0)


def test_cache_is_bit_identical(tmp_path):
    s = build_stencil(0.45, 1.0)
    offs = box_offsets(6)
    first = tabulate_greens(s, offs, 0.0, cache_dir=tmp_path)
    assert list(tmp_path.glob("*.npz"))
    again = tabulate_greens(s, offs, 0.0, cache_dir=tmp_path)
    fresh = tabulate_greens(s, offs, 0.0)
    assert np.array_equal(again.values, first.values)
    assert np.array_equal(fresh.values, first.values)
    bigger = tabulate_greens(s, box_offsets(8), 0.0, cache_dir=tmp_path)
    assert np.array_equal(bigger.lookup(offs), first.lookup(offs))


def test_save_load_roundtrip(tmp_path):
    s = build_stencil(0.3, 1.0)
    table = tabulate_greens(s, box_offsets(3), 0.1)
    table.save(tmp_path / "g.npz")
    back = GreensTable.load(tmp_path / "g.npz", table.stencil)
    assert np.array_equal(back.values, table.values)
    with pytest.raises(ValueError):
        GreensTable.load(tmp_path / "g.npz", build_stencil(0.31, 1.0))


def test_fixed_order_close_to_adaptive():
    s = build_stencil(0.9, 1.0)
    assert greens_value(s, (4, 3), 0.0, quadrature_points=64) == pytest.approx(
        greens_value(s, (4, 3), 0.0), abs=1e-10)


def test_negative_absorption_rejected():
    with pytest.raises(InvalidParameterError):
        greens_value(build_stencil(0.5, 1.0), (0, 0), -0.1)
