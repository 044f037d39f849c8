"""Uniform square lattice: bilinear FEM stencil and node-set partition.

Nodes are integer pairs ``(i, j)`` at physical position ``(i*h, j*h)``.
Cells are addressed by their lower-left node, so cell ``(i, j)`` spans
``[i, i+1] x [j, j+1]`` in grid units.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InvalidParameterError, TopologyError

Node = tuple[int, int]
Cell = tuple[int, int]

# local corner order of a cell: counterclockwise from the lower-left node
CELL_CORNERS: tuple[Node, ...] = ((0, 0), (1, 0), (1, 1), (0, 1))

_Q1_STIFFNESS = np.array(
    [[4, -1, -2, -1],
     [-1, 4, -1, -2],
     [-2, -1, 4, -1],
     [-1, -2, -1, 4]], dtype=float) / 6.0

_Q1_MASS = np.array(
    [[4, 2, 1, 2],
     [2, 4, 2, 1],
     [1, 2, 4, 2],
     [2, 1, 2, 4]], dtype=float) / 36.0


def q1_element_matrix(wavenumber: complex, grid_spacing: float) -> np.ndarray:
    """Bilinear square element matrix ``stiffness - K^2 mass`` (4x4, CCW corners)."""
    return _Q1_STIFFNESS - wavenumber**2 * grid_spacing**2 * _Q1_MASS


@dataclass(frozen=True)
class UniformStencil:
    grid_spacing: float
    wavenumber: complex
    offsets: tuple[Node, ...]
    coefficients: np.ndarray = field(repr=False)

    def coefficient(self, offset: Node) -> complex:
        o = (int(offset[0]), int(offset[1]))
        if max(abs(o[0]), abs(o[1])) > 1:
            return 0j
        return complex(self.coefficients[self.offsets.index(o)])

    def as_grid(self) -> np.ndarray:
        """3x3 array with ``grid[o1 + 1, o2 + 1] = beta(o)``."""
        grid = np.zeros((3, 3), dtype=complex)
        for (o1, o2), c in zip(self.offsets, self.coefficients):
            grid[o1 + 1, o2 + 1] = c
        return grid

    @property
    def kh(self) -> complex:
        return self.wavenumber * self.grid_spacing

    def line_coefficients(self, xi1):
        """Coefficients ``(a, b)`` with ``symbol = a(xi1) + b(xi1) cos(xi2)``."""
        g = self.as_grid()
        c = np.cos(xi1)
        a = g[1, 1] + 2.0 * g[2, 1] * c
        b = 2.0 * (g[1, 2] + 2.0 * g[2, 2] * c)
        return a, b

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.coefficients, dtype=np.complex128).tobytes())
        h.update(np.float64(self.grid_spacing).tobytes())
        return h.hexdigest()[:16]


def build_stencil(wavenumber: complex, grid_spacing: float) -> UniformStencil:
    """Assemble the 9-point stencil of the bilinear discretisation.

    The four cells sharing the origin each contribute their element
    matrix row for the corner sitting at the origin.
    """
    wavenumber = complex(wavenumber)
    if not grid_spacing > 0:
        raise InvalidParameterError(f"grid spacing must be positive, got {grid_spacing}")
    if not wavenumber.real > 0 or wavenumber.imag < 0:
        raise InvalidParameterError(
            f"wavenumber needs Re(K) > 0 and Im(K) >= 0, got {wavenumber}")
    return _assemble_stencil(wavenumber, float(grid_spacing))


def static_stencil(grid_spacing: float = 1.0) -> UniformStencil:
    """The ``K = 0`` (pure stiffness) stencil, outside ``build_stencil``'s domain."""
    if not grid_spacing > 0:
        raise InvalidParameterError(f"grid spacing must be positive, got {grid_spacing}")
    return _assemble_stencil(0j, float(grid_spacing))


def _assemble_stencil(wavenumber: complex, grid_spacing: float) -> UniformStencil:
    elem = q1_element_matrix(wavenumber, grid_spacing)
    acc: dict[Node, complex] = {}
    for ci in (-1, 0):
        for cj in (-1, 0):
            corners = [(ci + dx, cj + dy) for dx, dy in CELL_CORNERS]
            a = corners.index((0, 0))
            for b, node in enumerate(corners):
                acc[node] = acc.get(node, 0j) + elem[a, b]
    offsets = tuple(sorted(acc))
    coeffs = np.array([acc[o] for o in offsets], dtype=complex)
    return UniformStencil(grid_spacing, wavenumber, offsets, coeffs)


def stencil_symbol(stencil: UniformStencil, spectral_point) -> np.ndarray | complex:
    """Fourier symbol ``sum_o beta(o) exp(i o . xi)``; vectorised over leading axes."""
    xi = np.asarray(spectral_point, dtype=float)
    out = np.zeros(xi.shape[:-1], dtype=complex)
    for (o1, o2), c in zip(stencil.offsets, stencil.coefficients):
        out = out + c * np.exp(1j * (o1 * xi[..., 0] + o2 * xi[..., 1]))
    if out.ndim == 0:
        return complex(out)
    return out


def dihedral_images(offset: Node) -> set[Node]:
    """Orbit of an offset under the 8 symmetries of the square."""
    p, q = offset
    out = set()
    for a, b in ((p, q), (q, p)):
        for sa in (1, -1):
            for sb in (1, -1):
                out.add((sa * a, sb * b))
    return out


def canonical_offset(offset: Node) -> Node:
    """Orbit representative ``(p, q)`` with ``p >= q >= 0``."""
    a, b = abs(int(offset[0])), abs(int(offset[1]))
    return (a, b) if a >= b else (b, a)


# ---------------------------------------------------------------------------
# Partition of the lattice into interior / exterior node sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodePartition:
    """Index sets induced by a finite union of interior cells.

    ``near_nodes`` lists the boundary nodes first, in the same order as
    ``boundary_nodes``, followed by the remaining nodes of the near set in
    lexicographic order.
    """

    interior_cells: frozenset
    interior_nodes: frozenset
    boundary_nodes: tuple
    near_nodes: tuple

    @property
    def exterior_nodes_near(self) -> frozenset:
        return frozenset(self.near_nodes)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_nodes)

    def is_interior_cell(self, cell: Cell) -> bool:
        return cell in self.interior_cells

    def exterior_cells_near(self) -> list[Cell]:
        """Exterior cells having at least one boundary node as a corner."""
        cells = set()
        for i, j in self.boundary_nodes:
            for c in node_cells((i, j)):
                if c not in self.interior_cells:
                    cells.add(c)
        return sorted(cells)


def node_cells(node: Node) -> list[Cell]:
    i, j = node
    return [(i - 1, j - 1), (i, j - 1), (i, j), (i - 1, j)]


def cell_nodes(cell: Cell) -> list[Node]:
    i, j = cell
    return [(i + dx, j + dy) for dx, dy in CELL_CORNERS]


def _four_connected(cells: set, seed) -> set:
    seen = {seed}
    queue = deque([seed])
    while queue:
        i, j = queue.popleft()
        for nb in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if nb in cells and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return seen


def _check_topology(cells: set) -> None:
    if not cells:
        raise TopologyError("interior cell set is empty")
    if len(_four_connected(cells, min(cells))) != len(cells):
        raise TopologyError("interior cells are not edge-connected")
    ii = [c[0] for c in cells]
    jj = [c[1] for c in cells]
    box = {(i, j)
           for i in range(min(ii) - 1, max(ii) + 2)
           for j in range(min(jj) - 1, max(jj) + 2)}
    outside = box - cells
    if len(_four_connected(outside, min(outside))) != len(outside):
        raise TopologyError("interior cells enclose a hole (not simply connected)")
    for cell in cells:
        i, j = cell
        for di, dj in ((1, 1), (1, -1)):
            if (i + di, j + dj) in cells and (i + di, j) not in cells and (i, j + dj) not in cells:
                raise TopologyError(f"cells {cell} and {(i + di, j + dj)} touch only at a corner")


def _boundary_loop(cells: set) -> list[Node]:
    nxt: dict[Node, Node] = {}
    for i, j in cells:
        if (i, j - 1) not in cells:
            nxt[(i, j)] = (i + 1, j)
        if (i + 1, j) not in cells:
            nxt[(i + 1, j)] = (i + 1, j + 1)
        if (i, j + 1) not in cells:
            nxt[(i + 1, j + 1)] = (i, j + 1)
        if (i - 1, j) not in cells:
            nxt[(i, j + 1)] = (i, j)
    start = min(nxt)
    loop = [start]
    node = nxt[start]
    while node != start:
        loop.append(node)
        node = nxt[node]
        if len(loop) > len(nxt):
            raise TopologyError("boundary edges do not form a single loop")
    if len(loop) != len(nxt):
        raise TopologyError("boundary consists of more than one loop")
    return loop


def build_partition(interior_cells: Iterable[Cell]) -> NodePartition:
    """Classify lattice nodes around a simply connected union of cells."""
    cells = {(int(i), int(j)) for i, j in interior_cells}
    _check_topology(cells)
    interior_nodes = {n for c in cells for n in cell_nodes(c)}
    loop = _boundary_loop(cells)
    near = set()
    for node in loop:
        for c in node_cells(node):
            if c not in cells:
                near.update(cell_nodes(c))
    boundary = tuple(loop)
    rest = sorted(near - set(boundary))
    return NodePartition(frozenset(cells), frozenset(interior_nodes), boundary,
                         boundary + tuple(rest))


def disk_hull_cells(radius: float, center=(0.0, 0.0)) -> set[Cell]:
    """Cells whose closed square meets the closed disk (grid units).

    Their union is the smallest cell union whose interior contains the disk.
    """
    if not radius > 0:
        raise InvalidParameterError(f"radius must be positive, got {radius}")
    cx, cy = center
    lo_i = int(np.floor(cx - radius)) - 1
    hi_i = int(np.ceil(cx + radius)) + 1
    lo_j = int(np.floor(cy - radius)) - 1
    hi_j = int(np.ceil(cy + radius)) + 1
    cells = set()
    for i in range(lo_i, hi_i + 1):
        dx = max(i - cx, 0.0, cx - (i + 1))
        for j in range(lo_j, hi_j + 1):
            dy = max(j - cy, 0.0, cy - (j + 1))
            if dx * dx + dy * dy <= radius * radius:
                cells.add((i, j))
    return cells


def block_cells(nx: int, ny: int | None = None, origin: Node = (0, 0)) -> set[Cell]:
    """Rectangular block of ``nx`` by ``ny`` cells."""
    ny = nx if ny is None else ny
    return {(origin[0] + i, origin[1] + j) for i in range(nx) for j in range(ny)}
