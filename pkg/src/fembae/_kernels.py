"""Hot inner loops, each in a numba and a pure-numpy flavour.

The numba versions are used when numba imports cleanly and the
environment variable ``FEMBAE_DISABLE_JIT`` is unset or ``0``. Both
flavours are always importable so they can be compared directly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None

_CHUNK = 256


def _jit_requested() -> bool:
    flag = os.environ.get("FEMBAE_DISABLE_JIT", "0").strip().lower()
    return flag in ("", "0", "false", "no")


USE_JIT = numba is not None and _jit_requested()


# --- Green's function line sums ---------------------------------------------

def line_sums_numpy(p, q, xi, weights, log_lam, inv_d):
    """``out[k] = sum_n w_n cos(p_k xi_n) lam_n**q_k / D_n``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.empty(p.shape[0], dtype=complex)
    wd = weights * inv_d
    for s in range(0, p.shape[0], _CHUNK):
        pp = p[s:s + _CHUNK, None]
        qq = q[s:s + _CHUNK, None]
        with np.errstate(invalid="ignore"):
            powers = np.where(qq == 0, 1.0 + 0j, np.exp(qq * log_lam[None, :]))
        out[s:s + _CHUNK] = np.sum(np.cos(pp * xi[None, :]) * powers * wd[None, :], axis=1)
    return out


def _line_sums_loop(p, q, xi, weights, log_lam, inv_d):
    n_rep = p.shape[0]
    n_node = xi.shape[0]
    out = np.empty(n_rep, dtype=np.complex128)
    for k in range(n_rep):
        acc = 0j
        pk = float(p[k])
        qk = float(q[k])
        for n in range(n_node):
            term = weights[n] * inv_d[n] * np.cos(pk * xi[n])
            if qk != 0.0:
                term = term * np.exp(qk * log_lam[n])
            acc += term
        out[k] = acc
    return out


# --- P1 triangle element matrices --------------------------------------------

def p1_elements_numpy(points, triangles, k2):
    """Element matrices ``stiffness - k2 * mass`` for every triangle (T, 3, 3)."""
    x = points[triangles]  # (T, 3, 2)
    b = np.stack([x[:, 1, 1] - x[:, 2, 1], x[:, 2, 1] - x[:, 0, 1], x[:, 0, 1] - x[:, 1, 1]], axis=1)
    c = np.stack([x[:, 2, 0] - x[:, 1, 0], x[:, 0, 0] - x[:, 2, 0], x[:, 1, 0] - x[:, 0, 0]], axis=1)
    area = 0.5 * (c[:, 2] * b[:, 1] - c[:, 1] * b[:, 2])
    stiff = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area[:, None, None])
    mass = (np.ones((3, 3)) + np.eye(3))[None, :, :] * (area / 12.0)[:, None, None]
    return stiff - k2 * mass, area


def _p1_elements_loop(points, triangles, k2):
    n_tri = triangles.shape[0]
    out = np.empty((n_tri, 3, 3), dtype=np.complex128)
    area = np.empty(n_tri)
    b = np.empty(3)
    c = np.empty(3)
    for t in range(n_tri):
        i0 = triangles[t, 0]
        i1 = triangles[t, 1]
        i2 = triangles[t, 2]
        x0, y0 = points[i0, 0], points[i0, 1]
        x1, y1 = points[i1, 0], points[i1, 1]
        x2, y2 = points[i2, 0], points[i2, 1]
        b[0] = y1 - y2
        b[1] = y2 - y0
        b[2] = y0 - y1
        c[0] = x2 - x1
        c[1] = x0 - x2
        c[2] = x1 - x0
        a = 0.5 * (c[2] * b[1] - c[1] * b[2])
        area[t] = a
        for i in range(3):
            for j in range(3):
                m = a / 12.0
                if i == j:
                    m = 2.0 * m
                out[t, i, j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * a) - k2 * m
    return out, area


if numba is not None:
    line_sums_jit = numba.njit(cache=True)(_line_sums_loop)
    p1_elements_jit = numba.njit(cache=True)(_p1_elements_loop)
else:  # pragma: no cover
    line_sums_jit = _line_sums_loop
    p1_elements_jit = _p1_elements_loop


def line_sums(p, q, xi, weights, log_lam, inv_d):
    if USE_JIT:
        return line_sums_jit(np.ascontiguousarray(p, dtype=np.int64),
                             np.ascontiguousarray(q, dtype=np.int64),
                             xi, weights, log_lam, inv_d)
    return line_sums_numpy(p, q, xi, weights, log_lam, inv_d)


def p1_elements(points, triangles, k2):
    if USE_JIT:
        return p1_elements_jit(np.ascontiguousarray(points, dtype=float),
                               np.ascontiguousarray(triangles, dtype=np.int64),
                               complex(k2))
    return p1_elements_numpy(points, triangles, complex(k2))
