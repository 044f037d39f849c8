"""Triangle mesh of the layer between the scatterer and the grid loop.

Includes a reader/writer for ASCII MSH 2.2 files (physical tag 1 marks the
scatterer curve, 2 the grid-aligned outer loop, 3 the surface) and a
built-in mesher for a circular scatterer.
"""

from __future__ import annotations

import io
import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .errors import GeometryError, InvalidParameterError, MeshingError, MeshParseError
from .lattice import NodePartition, build_partition, disk_hull_cells

logger = logging.getLogger(__name__)

TAG_GAMMA_IN = 1
TAG_GAMMA_EX = 2
TAG_SURFACE = 3
QUALITY_THRESHOLD = 0.2
MAX_EDGE_FACTOR = 2.0
RING_GROWTH = 1.5
LATTICE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    """Unstructured P1 mesh.

    Attributes
    ----------
    nodes : ndarray, shape (N, 2)
        Physical coordinates.
    triangles : ndarray, shape (T, 3)
        Counterclockwise node indices.
    gamma_in : ndarray
        Ordered node indices on the scatterer curve.
    gamma_ex : ndarray
        Ordered node indices on the outer loop.
    gamma_ex_lattice : tuple
        Lattice node ``(i, j)`` attached to each entry of ``gamma_ex``.
    """

    nodes: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    gamma_in: np.ndarray = field(repr=False)
    gamma_ex: np.ndarray = field(repr=False)
    gamma_ex_lattice: tuple = field(repr=False)
    grid_spacing: float = 1.0
    center: tuple = (0.0, 0.0)
    radius: float | None = None

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.gamma_in, other.gamma_in)
                and np.array_equal(self.gamma_ex, other.gamma_ex)
                and self.gamma_ex_lattice == other.gamma_ex_lattice
                and self.grid_spacing == other.grid_spacing)

    __hash__ = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        return signed_areas(self.nodes, self.triangles)

    def qualities(self) -> np.ndarray:
        return triangle_qualities(self.nodes, self.triangles)

    def polar_angles(self, indices=None) -> np.ndarray:
        idx = self.gamma_in if indices is None else np.asarray(indices)
        d = self.nodes[idx] - np.asarray(self.center)
        return np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)

    def check(self) -> list[str]:
        """Orientation and conformity problems (empty when the mesh is valid)."""
        problems = []
        areas = self.signed_areas()
        for t in np.nonzero(areas <= 0)[0]:
            problems.append(f"triangle {t} has non-positive area {areas[t]:.3e}")
        counts = edge_counts(self.triangles)
        boundary = set()
        for loop in (self.gamma_in, self.gamma_ex):
            n = len(loop)
            for k in range(n):
                boundary.add(_edge(loop[k], loop[(k + 1) % n]))
        for e, c in counts.items():
            if c > 2:
                problems.append(f"edge {e} shared by {c} triangles")
            elif c == 1 and e not in boundary:
                problems.append(f"edge {e} is a free boundary edge not on a tagged loop")
        for e in boundary:
            if counts.get(e, 0) != 1:
                problems.append(f"tagged boundary edge {e} used by {counts.get(e, 0)} triangles")
        return problems


def _edge(a, b):
    a, b = int(a), int(b)
    return (a, b) if a < b else (b, a)


def edge_counts(triangles) -> dict:
    counts: dict = defaultdict(int)
    for t in np.asarray(triangles):
        for k in range(3):
            counts[_edge(t[k], t[(k + 1) % 3])] += 1
    return dict(counts)


def signed_areas(nodes, triangles) -> np.ndarray:
    x = np.asarray(nodes)[np.asarray(triangles)]
    return 0.5 * ((x[:, 1, 0] - x[:, 0, 0]) * (x[:, 2, 1] - x[:, 0, 1])
                  - (x[:, 2, 0] - x[:, 0, 0]) * (x[:, 1, 1] - x[:, 0, 1]))


def triangle_qualities(nodes, triangles) -> np.ndarray:
    """``2 * inradius / circumradius``; 1 for an equilateral triangle."""
    x = np.asarray(nodes)[np.asarray(triangles)]
    a = np.linalg.norm(x[:, 1] - x[:, 2], axis=1)
    b = np.linalg.norm(x[:, 2] - x[:, 0], axis=1)
    c = np.linalg.norm(x[:, 0] - x[:, 1], axis=1)
    area = np.abs(signed_areas(nodes, triangles))
    s = 0.5 * (a + b + c)
    return 8.0 * area**2 / (s * a * b * c)


def _points_in_polygon(points, polygon) -> np.ndarray:
    """Even-odd ray casting, vectorised over points."""
    px, py = points[:, 0][:, None], points[:, 1][:, None]
    x0, y0 = polygon[:, 0][None, :], polygon[:, 1][None, :]
    x1, y1 = np.roll(polygon[:, 0], -1)[None, :], np.roll(polygon[:, 1], -1)[None, :]
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (px < xcross)
    return np.count_nonzero(hits, axis=1) % 2 == 1


# ---------------------------------------------------------------------------
# built-in mesher
# ---------------------------------------------------------------------------

def circle_node_count(radius: float, grid_spacing: float, sigma: float) -> int:
    """Smallest multiple of 4 with spacing at most ``sigma * h`` on the circle."""
    raw = 2 * np.pi * radius / (sigma * grid_spacing)
    return 4 * int(np.ceil(raw / 4 - 1e-9))


def _triangulate(points, inner_poly, outer_poly, loops):
    tri = Delaunay(points)
    simplices = tri.simplices.copy()
    areas = signed_areas(points, simplices)
    flip = areas < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    areas = np.abs(areas)
    centroids = points[simplices].mean(axis=1)
    keep = (_points_in_polygon(centroids, outer_poly)
            & ~_points_in_polygon(centroids, inner_poly)
            & (areas > 1e-12))
    simplices = simplices[keep]
    counts = edge_counts(simplices)
    for loop in loops:
        n = len(loop)
        for k in range(n):
            e = _edge(loop[k], loop[(k + 1) % n])
            if counts.get(e, 0) != 1:
                raise MeshingError(f"boundary edge {e} not recovered by the triangulation")
    return simplices


def _grading_rings(center, radius, phi, spacing, h, limit):
    """Concentric node rings growing the spacing by ``RING_GROWTH`` up to ``h``.

    Each ring sits one inner spacing outside the previous one and is rotated
    by half a step; rings that would come closer than half their own
    spacing to ``limit`` are omitted. Returns the rings and the outermost
    radius used.
    """
    rings = []
    r, s, offset = radius, spacing, 0.0
    while s < h - 1e-12:
        s_next = min(RING_GROWTH * s, h)
        r_next = r + s
        if r_next + 0.5 * s_next > limit:
            break
        n = int(np.ceil(2 * np.pi * r_next / s_next))
        offset += np.pi / n
        ang = offset + 2 * np.pi * np.arange(n) / n
        rings.append(center + r_next * np.stack([np.cos(ang), np.sin(ang)], axis=1))
        r, s = r_next, s_next
    return rings, r


def _max_edge(points, simplices) -> float:
    x = points[simplices]
    return float(np.max(np.linalg.norm(x - np.roll(x, 1, axis=1), axis=2)))


def build_annular_layer_mesh(radius: float, grid_spacing: float = 1.0, sigma: float = 1.0,
                             exterior_radius: float | None = None,
                             center_node=(0, 0)) -> tuple[Mesh, NodePartition]:
    """Mesh the layer between a circle and the staircase loop around it.

    The circle carries ``circle_node_count`` equally spaced nodes starting at
    polar angle 0. The outer loop is the boundary of the smallest cell union
    containing the disk of radius ``exterior_radius``. With ``sigma < 1``
    graded rings of nodes bridge the circle spacing to ``h``. Lattice nodes
    inside the layer are added as Steiner points only when the triangulation
    has a triangle of quality below ``QUALITY_THRESHOLD`` or an edge longer
    than ``MAX_EDGE_FACTOR * h`` (a layer thicker than one element).
    """
    h = float(grid_spacing)
    if exterior_radius is None:
        exterior_radius = radius + h
    if not (radius > 0 and h > 0):
        raise InvalidParameterError("radius and grid spacing must be positive")
    if not 0 < sigma <= 1:
        raise InvalidParameterError(f"sigma must lie in (0, 1], got {sigma}")
    if exterior_radius < radius + h - 1e-12:
        raise GeometryError(
            f"exterior radius {exterior_radius} must be at least radius + h = {radius + h}")
    ci, cj = int(center_node[0]), int(center_node[1])
    center = np.array([ci * h, cj * h])

    n_in = circle_node_count(radius, h, sigma)
    phi = 2 * np.pi * np.arange(n_in) / n_in
    circle = center + radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)

    cells = disk_hull_cells(exterior_radius / h, center=(ci, cj))
    partition = build_partition(cells)
    outer_lat = np.array(partition.boundary_nodes, dtype=float)
    outer = outer_lat * h
    n_ex = len(outer)

    rings, ring_top = _grading_rings(center, radius, phi, sigma * h, h, exterior_radius)
    points = np.vstack([circle, outer] + rings)
    loops = [np.arange(n_in), n_in + np.arange(n_ex)]
    # triangles outside the circle polygon and inside the loop polygon
    simplices = _triangulate(points, circle, outer, loops)
    q = triangle_qualities(points, simplices)
    if q.min() < QUALITY_THRESHOLD or _max_edge(points, simplices) > MAX_EDGE_FACTOR * h:
        boundary = set(partition.boundary_nodes)
        steiner = []
        margin = ring_top + 0.5 * h
        for node in sorted(partition.interior_nodes - boundary):
            p = np.array(node, dtype=float) * h
            if np.linalg.norm(p - center) >= margin:
                steiner.append(p)
        if steiner:
            logger.debug("adding %d Steiner points (min quality %.3f)", len(steiner), q.min())
            points = np.vstack([points, np.array(steiner)])
            simplices = _triangulate(points, circle, outer, loops)
    mesh = Mesh(points, simplices.astype(np.int64), loops[0], loops[1],
                tuple(partition.boundary_nodes), h, (float(center[0]), float(center[1])),
                float(radius))
    problems = mesh.check()
    if problems:
        raise MeshingError("; ".join(problems[:5]))
    return mesh, partition


def validate_interface(mesh: Mesh, partition: NodePartition) -> list[str]:
    """Mismatches between the mesh outer loop and the lattice boundary nodes."""
    violations = []
    lat = list(mesh.gamma_ex_lattice)
    ref = list(partition.boundary_nodes)
    if len(lat) != len(ref):
        violations.append(f"count mismatch: mesh has {len(lat)} outer nodes, "
                          f"partition has {len(ref)}")
        return violations
    if not ref:
        return violations
    if ref[0] not in lat:
        violations.append(f"lattice node {ref[0]} missing from mesh outer loop")
        return violations
    shift = lat.index(ref[0])
    for k, node in enumerate(ref):
        if lat[(shift + k) % len(lat)] != node:
            violations.append(f"order mismatch at position {k}: expected {node}, "
                              f"found {lat[(shift + k) % len(lat)]}")
    h = mesh.grid_spacing
    for idx, node in zip(mesh.gamma_ex, lat):
        dist = np.linalg.norm(mesh.nodes[idx] - np.asarray(node, dtype=float) * h)
        if dist > LATTICE_TOL * h:
            violations.append(f"coordinate mismatch at mesh node {int(idx)}: "
                              f"{dist:.3e} from lattice node {node}")
    return violations


# ---------------------------------------------------------------------------
# MSH 2.2 ASCII
# ---------------------------------------------------------------------------

def partition_from_mesh(mesh: Mesh) -> NodePartition:
    """Lattice partition whose boundary loop is the mesh outer loop.

    Interior cells are those whose centres lie inside the loop polygon.
    """
    loop = np.array(mesh.gamma_ex_lattice, dtype=float)
    if len(loop) < 4:
        raise GeometryError("outer loop has fewer than four lattice nodes")
    lo = np.floor(loop.min(axis=0)).astype(int)
    hi = np.ceil(loop.max(axis=0)).astype(int)
    ii, jj = np.meshgrid(np.arange(lo[0], hi[0]), np.arange(lo[1], hi[1]), indexing="ij")
    cells = np.stack([ii.ravel(), jj.ravel()], axis=1)
    inside = _points_in_polygon(cells + 0.5, loop)
    return build_partition(map(tuple, cells[inside].tolist()))


def write_gmsh(mesh: Mesh) -> str:
    """Serialise a mesh as MSH 2.2 ASCII with physical tags 1/2/3."""
    out = io.StringIO()
    out.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
    out.write(f"$Nodes\n{mesh.n_nodes}\n")
    for k, (x, y) in enumerate(mesh.nodes):
        out.write(f"{k + 1} {float(x)!r} {float(y)!r} 0\n")
    out.write("$EndNodes\n")
    elements = []
    for tag, loop in ((TAG_GAMMA_IN, mesh.gamma_in), (TAG_GAMMA_EX, mesh.gamma_ex)):
        n = len(loop)
        for k in range(n):
            elements.append((1, tag, (loop[k], loop[(k + 1) % n])))
    for t in mesh.triangles:
        elements.append((2, TAG_SURFACE, tuple(t)))
    out.write(f"$Elements\n{len(elements)}\n")
    for k, (etype, tag, conn) in enumerate(elements):
        nodes = " ".join(str(int(i) + 1) for i in conn)
        out.write(f"{k + 1} {etype} 2 {tag} {tag} {nodes}\n")
    out.write("$EndElements\n")
    return out.getvalue()


def _order_loop(edges, lines, nodes, what):
    """Chain 2-node segments into one closed loop of node indices."""
    adj: dict = defaultdict(list)
    for (a, b), ln in zip(edges, lines):
        adj[a].append((b, ln))
        adj[b].append((a, ln))
    for node, nbrs in adj.items():
        if len(nbrs) != 2:
            raise MeshParseError(f"{what} boundary is not a manifold loop at node {node + 1}",
                                 nbrs[0][1])
    start = min(adj)
    loop = [start]
    prev, cur = start, adj[start][0][0]
    while cur != start:
        loop.append(cur)
        a, b = adj[cur]
        nxt = a[0] if a[0] != prev else b[0]
        prev, cur = cur, nxt
        if len(loop) > len(adj):
            break
    if len(loop) != len(adj):
        raise MeshParseError(f"{what} boundary consists of more than one loop", lines[0])
    loop = np.array(loop, dtype=np.int64)
    pts = nodes[loop]
    area = 0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
    if area < 0:
        loop = np.concatenate([loop[:1], loop[1:][::-1]])
    return loop


def parse_gmsh(text, grid_spacing: float = 1.0, center=(0.0, 0.0),
               radius: float | None = None) -> Mesh:
    """Read an MSH 2.2 ASCII mesh.

    ``text`` may be a string or a text stream. Line segments tagged 1 and 2
    become the scatterer and outer loops, both oriented counterclockwise.
    The outer loop starts at its lexicographically smallest lattice node and
    the scatterer loop at its smallest polar angle about ``center``.
    """
    if not isinstance(text, str):
        text = text.read()
    lines = text.splitlines()
    pos = 0

    def expect(token):
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines) or lines[pos].strip() != token:
            raise MeshParseError(f"expected {token}", pos + 1)
        pos += 1

    def next_line():
        nonlocal pos
        if pos >= len(lines):
            raise MeshParseError("unexpected end of file", pos)
        pos += 1
        return lines[pos - 1].split(), pos

    expect("$MeshFormat")
    fields, ln = next_line()
    if not fields or fields[0] not in ("2.2", "2.2.0"):
        raise MeshParseError(f"unsupported MSH version {fields[0] if fields else '?'}", ln)
    if len(fields) > 1 and fields[1] != "0":
        raise MeshParseError("binary MSH files are not supported", ln)
    expect("$EndMeshFormat")

    expect("$Nodes")
    fields, ln = next_line()
    try:
        n_nodes = int(fields[0])
    except (IndexError, ValueError):
        raise MeshParseError("bad node count", ln) from None
    ids = {}
    coords = np.zeros((n_nodes, 2))
    for k in range(n_nodes):
        fields, ln = next_line()
        try:
            ids[int(fields[0])] = k
            coords[k] = float(fields[1]), float(fields[2])
        except (IndexError, ValueError):
            raise MeshParseError("malformed node record", ln) from None
    expect("$EndNodes")

    expect("$Elements")
    fields, ln = next_line()
    try:
        n_elem = int(fields[0])
    except (IndexError, ValueError):
        raise MeshParseError("bad element count", ln) from None
    tris, tri_lines = [], []
    seg = {TAG_GAMMA_IN: ([], []), TAG_GAMMA_EX: ([], [])}
    for _ in range(n_elem):
        fields, ln = next_line()
        try:
            etype, ntags = int(fields[1]), int(fields[2])
            tags = [int(t) for t in fields[3:3 + ntags]]
            conn = [ids[int(t)] for t in fields[3 + ntags:]]
        except (IndexError, ValueError, KeyError):
            raise MeshParseError("malformed element record", ln) from None
        phys = tags[0] if tags else 0
        if etype == 1:
            if len(conn) != 2:
                raise MeshParseError("line element needs 2 nodes", ln)
            if phys in seg:
                seg[phys][0].append(tuple(conn))
                seg[phys][1].append(ln)
        elif etype == 2:
            if len(conn) != 3:
                raise MeshParseError("triangle element needs 3 nodes", ln)
            tris.append(conn)
            tri_lines.append(ln)
        elif etype == 15:
            continue
        else:
            raise MeshParseError(f"unsupported element type {etype}", ln)
    expect("$EndElements")

    if not tris:
        raise MeshParseError("no triangle elements", ln)
    if not seg[TAG_GAMMA_IN][0] and not seg[TAG_GAMMA_EX][0]:
        raise MeshParseError("no boundary line elements tagged 1 (scatterer) or 2 (outer loop)",
                             ln)

    triangles = np.array(tris, dtype=np.int64)
    areas = signed_areas(coords, triangles)
    flip = areas < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    center = np.asarray(center, dtype=float)
    h = float(grid_spacing)
    gamma_in = np.zeros(0, dtype=np.int64)
    if seg[TAG_GAMMA_IN][0]:
        gamma_in = _order_loop(*seg[TAG_GAMMA_IN], coords, "scatterer")
        d = coords[gamma_in] - center
        ang = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)
        gamma_in = np.roll(gamma_in, -int(np.argmin(ang)))
    gamma_ex = np.zeros(0, dtype=np.int64)
    lattice = ()
    if seg[TAG_GAMMA_EX][0]:
        gamma_ex = _order_loop(*seg[TAG_GAMMA_EX], coords, "outer")
        lat = np.rint(coords[gamma_ex] / h).astype(np.int64)
        key = [tuple(int(v) for v in p) for p in lat]
        shift = key.index(min(key))
        gamma_ex = np.roll(gamma_ex, -shift)
        lattice = tuple(key[shift:] + key[:shift])
    return Mesh(coords, triangles, gamma_in, gamma_ex, lattice, h,
                (float(center[0]), float(center[1])), radius)
