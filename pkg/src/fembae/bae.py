"""Combined-field boundary algebraic equations on the coupling loop.

Index conventions: ``partition.boundary_nodes`` (size ``Ne``) are the loop
nodes and ``partition.near_nodes`` (size ``No``) the one-layer-wider set,
whose first ``Ne`` entries are the loop nodes again. Dense operators live
on these orderings.

The exterior relation between loop values ``u`` and fluxes ``h`` reads
``u^T A = h^T C``, i.e. ``A^T u = C^T h``, with::

    A = I + b + nu * b @ alpha_ex
    C = -nu * I + G + nu * G @ alpha_ex
    b[j, m] = sum_n alpha_ex[j, n] G[n, m] - delta[j, m]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import AssemblyError, IncompleteTableError, InterfaceError, NearSingularError
from .fem import SparseMatrix
from .greens import GreensTable
from .lattice import NodePartition
from .mesh import Mesh, validate_interface

MAX_CONDITION = 1e12


def default_nu(wavenumber: complex) -> complex:
    """Coupling parameter ``i / K``."""
    return 1j / complex(wavenumber)


def required_offsets(partition: NodePartition, targets=()) -> np.ndarray:
    """Offsets between near nodes, and between near nodes and ``targets``."""
    near = np.asarray(partition.near_nodes, dtype=np.int64)
    diffs = [(near[:, None, :] - near[None, :, :]).reshape(-1, 2)]
    if len(targets):
        t = np.asarray(targets, dtype=np.int64).reshape(-1, 2)
        diffs.append((t[:, None, :] - near[None, :, :]).reshape(-1, 2))
    offs = np.abs(np.concatenate(diffs))
    offs = np.stack([offs.max(axis=1), offs.min(axis=1)], axis=1)
    return np.unique(offs, axis=0)


def compute_b(table: GreensTable, alpha_ex: SparseMatrix, j, m) -> complex:
    """Single entry ``b[j, m] = sum_n alpha_ex[j, n] G(n - m) - delta[j, m]``."""
    row = alpha_ex.row(tuple(j))
    if not row:
        raise IncompleteTableError(f"no exterior matrix row for node {tuple(j)}")
    total = 0j
    mm = np.asarray(m)
    for n, val in row.items():
        total += val * table[tuple(np.asarray(n) - mm)]
    if tuple(j) == tuple(m):
        total -= 1.0
    return total


def b_matrix(table: GreensTable, alpha_ex: SparseMatrix, partition: NodePartition,
             targets=None) -> np.ndarray:
    """``b[j, m]`` for loop rows ``j`` and columns ``m`` (default: near nodes)."""
    boundary = list(partition.boundary_nodes)
    near = list(partition.near_nodes)
    cols = near if targets is None else [tuple(t) for t in np.asarray(targets).reshape(-1, 2)]
    alpha_rows = alpha_ex.block(boundary, near)
    g = table.pair_matrix(near, cols)
    b = alpha_rows @ g
    index = {n: i for i, n in enumerate(cols)}
    for r, node in enumerate(boundary):
        if node in index:
            b[r, index[node]] -= 1.0
    return b


@dataclass
class CfieOperators:
    A: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    coupling_parameter: complex
    b: np.ndarray = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.A.shape[0]


def build_A(b: np.ndarray, alpha_ex: SparseMatrix, partition: NodePartition,
            nu: complex) -> np.ndarray:
    """``A = I + b + nu * b @ alpha_ex`` with the inner sum over near nodes."""
    ne, no = partition.n_boundary, len(partition.near_nodes)
    if b.shape != (ne, no):
        raise IncompleteTableError(f"b must be {ne}x{no}, got {b.shape}")
    alpha_ob = alpha_ex.block(list(partition.near_nodes), list(partition.boundary_nodes))
    return np.eye(ne) + b[:, :ne] + nu * (b @ alpha_ob)


def build_C(table: GreensTable, alpha_ex: SparseMatrix, partition: NodePartition,
            nu: complex) -> np.ndarray:
    """``C = -nu I + G + nu * G @ alpha_ex`` with the inner sum over near nodes."""
    boundary = list(partition.boundary_nodes)
    near = list(partition.near_nodes)
    ne = len(boundary)
    g = table.pair_matrix(boundary, near)
    alpha_ob = alpha_ex.block(near, boundary)
    return -nu * np.eye(ne) + g[:, :ne] + nu * (g @ alpha_ob)


def cfie_operators(table: GreensTable, alpha_ex: SparseMatrix, partition: NodePartition,
                   nu: complex) -> CfieOperators:
    b = b_matrix(table, alpha_ex, partition)
    return CfieOperators(build_A(b, alpha_ex, partition, nu),
                         build_C(table, alpha_ex, partition, nu), nu, b)


def condition_estimate(M: np.ndarray) -> float:
    """1-norm condition number estimate from an LU factorisation."""
    M = np.asarray(M, dtype=complex)
    if M.size == 0:
        return 1.0
    lu, piv = sla.lu_factor(M, check_finite=False)
    anorm = np.linalg.norm(M, 1)
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond <= 0:
        return np.inf
    return float(1.0 / rcond)


def build_dtn(A: np.ndarray, C: np.ndarray, max_condition: float = MAX_CONDITION) -> np.ndarray:
    """Discrete Dirichlet-to-Neumann matrix ``B = (A C^-1)^T``."""
    cond = condition_estimate(C)
    if not cond < max_condition:
        raise NearSingularError(f"C is near singular (condition {cond:.3e})", cond)
    return sla.solve(np.asarray(C).T, np.asarray(A).T)


def dtn_residual(A, C, B) -> float:
    """``||C^T B - A^T|| / ||A^T||`` (Frobenius)."""
    return float(np.linalg.norm(C.T @ B - A.T) / np.linalg.norm(A))


@dataclass(frozen=True)
class Projector:
    """Selects the mesh nodes sitting on the coupling loop, in loop order."""

    columns: np.ndarray
    n_in: int

    def matrix(self) -> sp.csr_matrix:
        ne = len(self.columns)
        return sp.csr_matrix((np.ones(ne), (np.arange(ne), self.columns)), shape=(ne, self.n_in))

    def apply(self, v) -> np.ndarray:
        return np.asarray(v)[self.columns]


def build_projector(mesh: Mesh, partition: NodePartition) -> Projector:
    violations = validate_interface(mesh, partition)
    if violations:
        raise InterfaceError("; ".join(violations[:5]))
    lookup = {node: int(idx) for node, idx in zip(mesh.gamma_ex_lattice, mesh.gamma_ex)}
    cols = []
    for node in partition.boundary_nodes:
        if node not in lookup:
            raise InterfaceError(f"lattice node {node} has no matching mesh node")
        cols.append(lookup[node])
    return Projector(np.array(cols, dtype=np.int64), mesh.n_nodes)


@dataclass
class CoupledSystem:
    """Block system over ``(u_ex, u_in, h_ex)``::

        [ A^T   0       -C^T ] [u_ex]   [0]
        [ 0     A_in    P^T  ] [u_in] = [f]
        [ I     -P      0    ] [h_ex]   [0]
    """

    matrix: sp.csr_matrix = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    n_boundary: int
    n_in: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def split(self, x):
        ne, ni = self.n_boundary, self.n_in
        return x[:ne], x[ne:ne + ni], x[ne + ni:]


def assemble_coupled(A, C, alpha_in: SparseMatrix, projector: Projector,
                     force) -> CoupledSystem:
    ne = A.shape[0]
    ni = alpha_in.shape[0]
    force = np.asarray(force, dtype=complex)
    if A.shape != (ne, ne) or C.shape != (ne, ne):
        raise AssemblyError("A and C must be square and of equal size")
    if len(projector.columns) != ne or projector.n_in != ni:
        raise AssemblyError("projector does not match the block sizes")
    if force.shape != (ni,):
        raise AssemblyError(f"force has length {force.shape}, expected {ni}")
    P = projector.matrix()
    mat = sp.bmat([
        [sp.csr_matrix(np.asarray(A).T), None, sp.csr_matrix(-np.asarray(C).T)],
        [None, alpha_in.matrix, P.T],
        [sp.identity(ne, format="csr"), -P, None],
    ], format="csr", dtype=complex)
    rhs = np.concatenate([np.zeros(ne), force, np.zeros(ne)]).astype(complex)
    return CoupledSystem(mat, rhs, ne, ni)


# --- text dumps -----------------------------------------------------------------

def write_matrix_text(path, M) -> None:
    """Coordinate text format: ``# rows cols nnz`` then ``i j re im`` lines (0-based)."""
    M = sp.coo_matrix(M)
    with open(Path(path), "w") as fh:
        fh.write(f"# {M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for i, j, v in zip(M.row, M.col, M.data):
            fh.write(f"{i} {j} {complex(v).real!r} {complex(v).imag!r}\n")


def read_matrix_text(path) -> sp.csr_matrix:
    with open(Path(path)) as fh:
        header = fh.readline().split()
        rows, cols, nnz = int(header[1]), int(header[2]), int(header[3])
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 4))
    if data.size == 0:
        return sp.csr_matrix((rows, cols), dtype=complex)
    vals = data[:, 2] + 1j * data[:, 3]
    return sp.coo_matrix((vals, (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(rows, cols)).tocsr()
