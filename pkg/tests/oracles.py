"""Independent reference computations used by the tests.

Everything here solves truncated lattice problems directly with a sparse
factorisation, or integrates element matrices by brute-force quadrature, so
it shares no code path with the Fourier-based Green's function or the CFIE
operators under test.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def q1_element_brute(K: complex, h: float, order: int = 6) -> np.ndarray:
    """Bilinear element matrix on an h-square by tensor Gauss quadrature."""
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1) * h
    w = 0.5 * w * h
    corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
    out = np.zeros((4, 4), dtype=complex)
    for x, wx in zip(t, w):
        for y, wy in zip(t, w):
            phi, grad = [], []
            for cx, cy in corners:
                fx = x / h if cx else 1 - x / h
                fy = y / h if cy else 1 - y / h
                dfx = (1 / h if cx else -1 / h)
                dfy = (1 / h if cy else -1 / h)
                phi.append(fx * fy)
                grad.append((dfx * fy, fx * dfy))
            for a in range(4):
                for b in range(4):
                    out[a, b] += wx * wy * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]
                                            - K**2 * phi[a] * phi[b])
    return out


def p1_element_brute(vertices, K: complex) -> np.ndarray:
    """P1 element matrix with the 7-point degree-5 Dunavant rule."""
    v = np.asarray(vertices, dtype=float)
    a = 0.225
    b1, b2 = 0.1259391805448272, 0.1323941527885062
    p1, p2 = 0.1012865073234563, 0.4701420641051151
    bary = [(1 / 3, 1 / 3, 1 / 3), (p1, p1, 1 - 2 * p1), (p1, 1 - 2 * p1, p1),
            (1 - 2 * p1, p1, p1), (p2, p2, 1 - 2 * p2), (p2, 1 - 2 * p2, p2),
            (1 - 2 * p2, p2, p2)]
    weights = [a, b1, b1, b1, b2, b2, b2]
    J = np.array([v[1] - v[0], v[2] - v[0]]).T
    area = 0.5 * abs(np.linalg.det(J))
    ref_grad = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = ref_grad @ np.linalg.inv(J)
    out = np.zeros((3, 3), dtype=complex)
    for lam, w in zip(bary, weights):
        phi = np.array(lam)
        out += w * area * (grads @ grads.T - K**2 * np.outer(phi, phi))
    return out


def _box_operator(coeffs: dict, half_width: int):
    n = 2 * half_width + 1
    idx = np.arange(n * n).reshape(n, n)
    rows, cols, vals = [], [], []
    for (di, dj), c in coeffs.items():
        i0, i1 = max(0, -di), min(n, n - di)
        j0, j1 = max(0, -dj), min(n, n - dj)
        src = idx[i0:i1, j0:j1].ravel()
        dst = idx[i0 + di:i1 + di, j0 + dj:j1 + dj].ravel()
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(src.size, c, dtype=complex))
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n * n, n * n)).tocsc()
    return mat, idx


def truncated_greens(coeffs: dict, half_width: int):
    """Solve ``sum beta G = delta`` on a box with zero values outside it.

    ``coeffs`` maps stencil offsets to coefficients (absorbing wavenumber).
    Returns a callable ``offset -> G(offset)``.
    """
    mat, idx = _box_operator(coeffs, half_width)
    rhs = np.zeros(mat.shape[0], dtype=complex)
    rhs[idx[half_width, half_width]] = 1.0
    g = spla.spsolve(mat, rhs).reshape(idx.shape)

    def value(offset):
        return complex(g[half_width + offset[0], half_width + offset[1]])

    return value


def manufactured_exterior(coeffs: dict, partition, boundary_values, half_width: int):
    """Exterior lattice field with prescribed values on the coupling loop.

    Solves the full stencil equations at every box node outside the interior
    node set, with Dirichlet data on the loop and zero beyond the box.
    Returns ``field(node)``, a dict over all exterior box nodes.
    """
    n = 2 * half_width + 1
    nodes = [(i - half_width, j - half_width) for i in range(n) for j in range(n)]
    inside = set(partition.interior_nodes)
    loop = list(partition.boundary_nodes)
    free = [p for p in nodes if p not in inside]
    fixed = dict(zip(loop, np.asarray(boundary_values, dtype=complex)))
    index = {p: k for k, p in enumerate(free)}
    rows, cols, vals = [], [], []
    rhs = np.zeros(len(free), dtype=complex)
    for p, k in index.items():
        for (di, dj), c in coeffs.items():
            q = (p[0] + di, p[1] + dj)
            if q in index:
                rows.append(k)
                cols.append(index[q])
                vals.append(c)
            elif q in fixed:
                rhs[k] -= c * fixed[q]
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(len(free), len(free))).tocsc()
    sol = spla.spsolve(mat, rhs)
    field = dict(fixed)
    field.update({p: complex(sol[k]) for p, k in index.items()})
    return field


def exterior_flux(alpha_ex, partition, field) -> np.ndarray:
    """``h_j = sum_k alpha_ex[j, k] u_k`` on the loop, from a full field."""
    out = []
    for j in partition.boundary_nodes:
        out.append(sum(v * field.get(k, 0j) for k, v in alpha_ex.row(j).items()))
    return np.array(out, dtype=complex)
