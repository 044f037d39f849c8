"""Finite element matrices: P1 triangles inside, bilinear squares outside."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import AssemblyError, InvalidParameterError
from .lattice import NodePartition, UniformStencil, cell_nodes, node_cells, q1_element_matrix
from .mesh import Mesh


@dataclass
class SparseMatrix:
    """CSR matrix whose rows and columns are labelled by node identifiers."""

    matrix: sp.csr_matrix = field(repr=False)
    row_keys: list
    col_keys: list

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self._row = {k: i for i, k in enumerate(self.row_keys)}
        self._col = {k: i for i, k in enumerate(self.col_keys)}

    @property
    def shape(self):
        return self.matrix.shape

    def entry(self, j, k) -> complex:
        if j not in self._row or k not in self._col:
            return 0j
        return complex(self.matrix[self._row[j], self._col[k]])

    def row(self, j) -> dict:
        """Nonzero entries of row ``j`` as ``{col_key: value}``."""
        if j not in self._row:
            return {}
        i = self._row[j]
        lo, hi = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return {self.col_keys[c]: complex(v)
                for c, v in zip(self.matrix.indices[lo:hi], self.matrix.data[lo:hi])}

    def block(self, rows, cols) -> np.ndarray:
        """Dense sub-block; keys absent from the matrix give zero rows/columns."""
        out = np.zeros((len(rows), len(cols)), dtype=complex)
        ri = [(a, self._row[r]) for a, r in enumerate(rows) if r in self._row]
        ci = [(b, self._col[c]) for b, c in enumerate(cols) if c in self._col]
        if ri and ci:
            sub = self.matrix[[r for _, r in ri]][:, [c for _, c in ci]].toarray()
            out[np.ix_([a for a, _ in ri], [b for b, _ in ci])] = sub
        return out

    def asymmetry(self) -> float:
        """Max ``|M[j, k] - M[k, j]|`` over pairs present as both row and column keys."""
        common = [k for k in self.row_keys if k in self._col]
        b = self.block(common, common)
        return float(np.max(np.abs(b - b.T))) if common else 0.0


def _wavenumber_squared(wavenumber) -> complex:
    return complex(wavenumber) ** 2


def assemble_interior(mesh: Mesh, wavenumber: complex) -> SparseMatrix:
    """Global P1 matrix ``stiffness - K^2 mass`` over all mesh triangles.

    The Neumann condition on the scatterer is natural, so nothing is
    modified at boundary rows.
    """
    tri = np.asarray(mesh.triangles, dtype=np.int64)
    area = np.abs(mesh.signed_areas()) if len(tri) else np.zeros(0)
    tiny = 1e-14 * mesh.grid_spacing**2
    if np.any(area < tiny):
        bad = int(np.argmin(area))
        raise AssemblyError(f"degenerate triangle {bad} (area {area[bad]:.3e})")
    elems, _ = _kernels.p1_elements(mesh.nodes, tri, _wavenumber_squared(wavenumber))
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    mat = sp.coo_matrix((elems.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    keys = list(range(n))
    return SparseMatrix(mat, keys, keys)


def assemble_cells(cells, wavenumber: complex, grid_spacing: float) -> dict:
    """Bilinear assembly over lattice cells as ``{(node_j, node_k): value}``."""
    elem = q1_element_matrix(complex(wavenumber), grid_spacing)
    acc: dict = {}
    for cell in cells:
        nodes = cell_nodes(cell)
        for a, na in enumerate(nodes):
            for b, nb in enumerate(nodes):
                acc[(na, nb)] = acc.get((na, nb), 0j) + elem[a, b]
    return acc


def _from_pairs(pairs: dict, row_keys) -> SparseMatrix:
    row_set = set(row_keys)
    cols = list(row_keys)
    seen = set(cols)
    for (j, k) in sorted(pairs):
        if j in row_set and k not in seen:
            seen.add(k)
            cols.append(k)
    ri = {k: i for i, k in enumerate(row_keys)}
    ci = {k: i for i, k in enumerate(cols)}
    r, c, v = [], [], []
    for (j, k), val in pairs.items():
        if j in ri:
            r.append(ri[j])
            c.append(ci[k])
            v.append(val)
    mat = sp.coo_matrix((np.array(v, dtype=complex), (r, c)), shape=(len(row_keys), len(cols)))
    return SparseMatrix(mat.tocsr(), list(row_keys), cols)


def assemble_exterior(partition: NodePartition, stencil: UniformStencil) -> SparseMatrix:
    """Exterior-cell assembly for rows in the near set.

    Only cells outside the interior union contribute, so rows on the
    coupling boundary hold the exterior half of the uniform operator while
    rows further out equal the full stencil.
    """
    rows = list(partition.near_nodes)
    cells = set()
    for node in rows:
        for c in node_cells(node):
            if c not in partition.interior_cells:
                cells.add(c)
    pairs = assemble_cells(sorted(cells), stencil.wavenumber, stencil.grid_spacing)
    return _from_pairs(pairs, rows)


def boundary_lengths(mesh: Mesh) -> np.ndarray:
    """Half the summed lengths of the two scatterer segments at each node."""
    x = mesh.nodes[mesh.gamma_in]
    seg = np.linalg.norm(np.roll(x, -1, axis=0) - x, axis=1)
    return 0.5 * (seg + np.roll(seg, 1))


def assemble_force(mesh: Mesh, harmonic: int, weighting: str = "nodal",
                   scale: complex = 1.0, n_gauss: int = 8) -> np.ndarray:
    """Force vector over all mesh nodes, nonzero only on the scatterer.

    ``weighting``:
      * ``"nodal"``: ``cos(N phi_i)`` verbatim;
      * ``"lumped"``: multiplied by the boundary length attached to node i;
      * ``"consistent"``: ``int cos(N phi(s)) psi_i(s) ds`` along the
        polygon, ``psi_i`` the hat function, by Gauss quadrature.

    ``scale`` multiplies the result (e.g. the Neumann data amplitude).
    """
    if len(mesh.gamma_in) == 0:
        raise InvalidParameterError("mesh has no scatterer nodes")
    f = np.zeros(mesh.n_nodes, dtype=complex)
    phi = mesh.polar_angles()
    vals = np.cos(harmonic * phi)
    if weighting == "nodal":
        f[mesh.gamma_in] = vals
    elif weighting == "lumped":
        f[mesh.gamma_in] = vals * boundary_lengths(mesh)
    elif weighting == "consistent":
        x = mesh.nodes[mesh.gamma_in]
        xn = np.roll(x, -1, axis=0)
        seg = np.linalg.norm(xn - x, axis=1)
        t, w = np.polynomial.legendre.leggauss(n_gauss)
        t = 0.5 * (t + 1)
        w = 0.5 * w
        pts = x[:, None, :] + t[None, :, None] * (xn - x)[:, None, :]
        d = pts - np.asarray(mesh.center)
        g = np.cos(harmonic * np.arctan2(d[..., 1], d[..., 0]))
        left = np.sum(g * (1 - t)[None, :] * w[None, :], axis=1) * seg
        right = np.sum(g * t[None, :] * w[None, :], axis=1) * seg
        f[mesh.gamma_in] = left + np.roll(right, 1)
    else:
        raise InvalidParameterError(f"unknown force weighting {weighting!r}")
    return scale * f
