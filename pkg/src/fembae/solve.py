"""Solving the coupled or condensed system and evaluating the exterior field."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bae import CoupledSystem, Projector, b_matrix
from .errors import SolverError
from .fem import SparseMatrix
from .greens import GreensTable
from .lattice import NodePartition
from .mesh import Mesh


@dataclass
class CoupledSolution:
    u_in: np.ndarray = field(repr=False)
    u_ex_boundary: np.ndarray = field(repr=False)
    h_ex: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)


def _factor_solve(matrix: sp.spmatrix, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    matrix = sp.csc_matrix(matrix, dtype=complex)
    try:
        x = spla.splu(matrix).solve(np.asarray(rhs, dtype=complex))
    except RuntimeError as exc:
        raise SolverError(f"system is singular: {exc}", np.inf) from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("solve produced non-finite values", np.inf)
    denom = np.linalg.norm(rhs)
    res = np.linalg.norm(matrix @ x - rhs)
    return x, float(res / denom) if denom > 0 else float(res)


def solve_coupled(system: CoupledSystem) -> CoupledSolution:
    """Sparse LU solve of the block system."""
    x, residual = _factor_solve(system.matrix, system.rhs)
    u_ex, u_in, h_ex = system.split(x)
    meta = {"residual": residual, "size": system.size, "path": "coupled"}
    return CoupledSolution(u_in, u_ex, h_ex, meta)


def reduced_matrix(alpha_in: SparseMatrix, B: np.ndarray, projector: Projector) -> sp.csr_matrix:
    """``alpha_in + P^T B P``."""
    P = projector.matrix()
    return (alpha_in.matrix + P.T @ sp.csr_matrix(np.asarray(B)) @ P).tocsr()


def solve_reduced(alpha_in: SparseMatrix, B: np.ndarray, projector: Projector, force) -> np.ndarray:
    """Interior field from the condensed system with the DtN matrix."""
    x, _ = _factor_solve(reduced_matrix(alpha_in, B, projector), np.asarray(force, dtype=complex))
    return x


def exterior_field(solution: CoupledSolution, greens: GreensTable, alpha_ex: SparseMatrix,
                   partition: NodePartition, targets, B: np.ndarray | None = None) -> np.ndarray:
    """Field at lattice ``targets`` from the loop data.

    With ``B`` omitted the stored fluxes are used,
    ``u_m = sum_j h_j G(j, m) - u_j b(j, m)``; with ``B`` the fluxes are
    replaced by ``B u``.
    """
    targets = np.asarray(targets, dtype=np.int64).reshape(-1, 2)
    if len(targets) == 0:
        return np.zeros(0, dtype=complex)
    g = greens.pair_matrix(list(partition.boundary_nodes), targets)
    b = b_matrix(greens, alpha_ex, partition, targets)
    u = solution.u_ex_boundary
    h = solution.h_ex if B is None else np.asarray(B) @ u
    return g.T @ h - b.T @ u


def ring_nodes(radius: float, n_angles: int, center=(0, 0)) -> tuple[np.ndarray, np.ndarray]:
    """Lattice nodes nearest to ``n_angles`` equispaced points of a ring.

    Returns (nodes, angles) with duplicates removed; angles are those of the
    nodes themselves.
    """
    theta = 2 * np.pi * np.arange(n_angles) / n_angles
    pts = np.stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)], axis=1)
    nodes = np.rint(pts).astype(np.int64)
    _, first = np.unique(nodes, axis=0, return_index=True)
    nodes = nodes[np.sort(first)]
    d = nodes - np.asarray(center)
    return nodes, np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)


def directivity(field_values) -> np.ndarray:
    """``|u|`` normalised by its maximum."""
    mag = np.abs(np.asarray(field_values))
    peak = mag.max() if mag.size else 0.0
    return mag / peak if peak > 0 else mag


def export_solution_csv(path, mesh: Mesh, solution: CoupledSolution) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "x", "y", "re_u", "im_u"])
        for i, ((x, y), u) in enumerate(zip(mesh.nodes, solution.u_in)):
            w.writerow([i, repr(float(x)), repr(float(y)), repr(float(u.real)), repr(float(u.imag))])


def export_directivity_csv(path, angles, values) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle", "abs_u"])
        for a, v in zip(angles, values):
            w.writerow([repr(float(a)), repr(float(v))])
