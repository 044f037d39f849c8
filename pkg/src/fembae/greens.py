"""Radiating Green's function of the uniform lattice operator.

``G`` solves ``sum_k beta(k - j) G(k - m) = delta(j, m)`` on the whole
lattice and is outgoing. With the symbol
``s(xi) = sum_o beta(o) exp(i o . xi)``::

    G(n) = (2 pi)^-2  int_{[-pi, pi]^2}  exp(i n . xi) / s(xi)  d xi

The inner integral over ``xi2`` is done in closed form by residues. Writing
``s = a(xi1) + b(xi1) cos(xi2)``, the inner factor is ``lam^|n2| / D`` with
``D = a + b lam`` and ``lam`` the root of ``b/2 z^2 + a z + b/2`` that
decays under absorption. The remaining 1D integral has inverse square-root
branch points where ``a^2 = b^2``; a substitution ``xi = c +/- s^2``
removes them and composite Gauss-Legendre finishes the job. For real ``K``
the branch of ``lam`` is picked by continuity from a slightly absorbing
wavenumber, which is the exact limiting-absorption value.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import IncompleteTableError, InvalidParameterError, SingularIntegrandError
from .lattice import UniformStencil, _assemble_stencil, canonical_offset, stencil_symbol

logger = logging.getLogger(__name__)

CACHE_ENV = "FEMBAE_GREENS_CACHE"
CACHE_VERSION = 1
DEFAULT_TOL = 1e-12
RICHARDSON_ETAS = (0.1, 0.05, 0.025)
_PROBE_ABSORPTION = 1e-8
_MAX_ORDER = 512


def effective_stencil(stencil: UniformStencil, absorption: float) -> UniformStencil:
    """Stencil at the absorbing wavenumber ``K (1 + i eta)``."""
    if absorption < 0:
        raise InvalidParameterError(f"absorption must be >= 0, got {absorption}")
    if absorption == 0:
        return stencil
    k = stencil.wavenumber * (1 + 1j * absorption)
    return _assemble_stencil(k, stencil.grid_spacing)


# --- quadrature rule on [0, pi] ----------------------------------------------

def _branch_points(stencil: UniformStencil) -> list[float]:
    """Roots of ``a^2 - b^2`` in (0, pi) for the real part of the stencil.

    ``a`` and ``b`` are affine in ``cos(xi1)`` so this is a quadratic.
    """
    g = stencil.as_grid().real
    a0, a1 = g[1, 1], 2 * g[2, 1]
    b0, b1 = 2 * g[1, 2], 4 * g[2, 2]
    coeffs = [a1 * a1 - b1 * b1, 2 * (a0 * a1 - b0 * b1), a0 * a0 - b0 * b0]
    if abs(coeffs[0]) < 1e-300 and abs(coeffs[1]) < 1e-300:
        return []
    roots = np.roots(coeffs) if abs(coeffs[0]) > 1e-300 else np.array([-coeffs[2] / coeffs[1]])
    out = []
    for c in roots:
        if abs(c.imag) < 1e-14 and -1 < c.real < 1:
            out.append(float(np.arccos(c.real)))
    return sorted(out)


@lru_cache(maxsize=None)
def _gauss(order: int):
    return np.polynomial.legendre.leggauss(order)


def _panel_rule(breaks: tuple, width: float, order: int):
    """Composite rule for (1/pi) int_0^pi with sqrt grading at branch points.

    Returns nodes, weights, and for each node its exact signed distance to
    the branch point it is graded towards (``0`` and index ``-1`` if none).
    """
    x_gl, w_gl = _gauss(order)
    pts = [0.0, *breaks, np.pi]
    sing = [False, *([True] * len(breaks)), False]
    intervals = []
    for k in range(len(pts) - 1):
        x0, x1, s0, s1 = pts[k], pts[k + 1], sing[k], sing[k + 1]
        # branch index of each endpoint (breaks are pts[1:-1])
        r0, r1 = k - 1, k
        if s0 and s1:
            mid = 0.5 * (x0 + x1)
            intervals += [(x0, mid, r0, -1), (mid, x1, -1, r1)]
        else:
            intervals.append((x0, x1, r0 if s0 else -1, r1 if s1 else -1))
    xs, ws, ds, rs = [], [], [], []
    for x0, x1, r0, r1 in intervals:
        length = x1 - x0
        if length <= 0:
            continue
        m = max(1, int(np.ceil(2.0 * length / width)))
        graded = r0 >= 0 or r1 >= 0
        edges = np.linspace(0.0, np.sqrt(length), m + 1) if graded else np.linspace(x0, x1, m + 1)
        for e0, e1 in zip(edges[:-1], edges[1:]):
            t = 0.5 * (e1 - e0) * x_gl + 0.5 * (e1 + e0)
            wt = 0.5 * (e1 - e0) * w_gl
            if r0 >= 0:
                xs.append(x0 + t * t)
                ds.append(t * t)
                rs.append(np.full(order, r0))
                ws.append(wt * 2 * t)
            elif r1 >= 0:
                xs.append(x1 - t * t)
                ds.append(-t * t)
                rs.append(np.full(order, r1))
                ws.append(wt * 2 * t)
            else:
                xs.append(t)
                ds.append(np.zeros(order))
                rs.append(np.full(order, -1))
                ws.append(wt)
    return (np.concatenate(xs), np.concatenate(ws) / np.pi,
            np.concatenate(ds), np.concatenate(rs))


def _discriminant(stencil: UniformStencil, xi, delta, ridx, breaks):
    """``a^2 - b^2`` at the nodes, cancellation-free next to branch points."""
    a, b = stencil.line_coefficients(xi)
    disc = a * a - b * b + 0j
    if stencil.wavenumber.imag != 0 or not breaks:
        return a, b, disc
    g = stencil.as_grid().real
    a0, a1 = g[1, 1], 2 * g[2, 1]
    b0, b1 = 2 * g[1, 2], 4 * g[2, 2]
    quad = a1 * a1 - b1 * b1
    lin = 2 * (a0 * a1 - b0 * b1)
    c = np.cos(xi)
    for r, xr in enumerate(breaks):
        sel = ridx == r
        if not np.any(sel):
            continue
        cr = np.cos(xr)
        # c - cr evaluated from the exact offset to the root
        dc = -2.0 * np.sin(0.5 * (xi[sel] + xr)) * np.sin(0.5 * delta[sel])
        if abs(quad) > 1e-300:
            other = -lin / quad - cr
            disc[sel] = quad * dc * (c[sel] - other)
        else:
            disc[sel] = lin * dc
    return a, b, disc


def _line_factors(stencil: UniformStencil, xi, delta, ridx, breaks):
    """``log(lam)`` and ``1/D`` at the nodes, with the outgoing branch."""
    a, b, disc = _discriminant(stencil, xi, delta, ridx, breaks)
    d = np.sqrt(disc)
    k = stencil.wavenumber
    if k.imag > 0:
        sign = np.where(np.abs(a + d) >= np.abs(a - d), 1.0, -1.0)
    else:
        probe = _assemble_stencil(k * (1 + 1j * _PROBE_ABSORPTION), stencil.grid_spacing)
        ap, bp = probe.line_coefficients(xi)
        dp = np.sqrt(ap * ap - bp * bp + 0j)
        sp = np.where(np.abs(ap + dp) >= np.abs(ap - dp), 1.0, -1.0)
        align = np.where(np.real(np.conj(d) * dp) >= 0, 1.0, -1.0)
        sign = sp * align
    d = sign * d
    lam = -b / (a + d)
    with np.errstate(divide="ignore"):
        log_lam = np.log(lam + 0j)
    return log_lam, 1.0 / d


def _rule_key(p: int, q: int) -> int:
    m = max(p, q, 1)
    return 1 << int(np.ceil(np.log2(m)))


def _check_evaluable(stencil: UniformStencil):
    if stencil.wavenumber.real <= 0:
        raise InvalidParameterError("wavenumber must have positive real part")


def _line_values(stencil: UniformStencil, reps: np.ndarray, order: int) -> np.ndarray:
    """Fixed-order evaluation for canonical reps (rows ``(p, q)``)."""
    out = np.empty(len(reps), dtype=complex)
    breaks = tuple(_branch_points(stencil))
    keys = np.array([_rule_key(p, q) for p, q in reps], dtype=np.int64)
    for key in np.unique(keys):
        sel = np.nonzero(keys == key)[0]
        width = min(0.5, 2.0 / key)
        xi, w, delta, ridx = _panel_rule(breaks, width, order)
        log_lam, inv_d = _line_factors(stencil, xi, delta, ridx, breaks)
        out[sel] = _kernels.line_sums(reps[sel, 0], reps[sel, 1], xi, w, log_lam, inv_d)
    return out


def _adaptive_values(stencil: UniformStencil, reps: np.ndarray, tol: float,
                     start_order: int = 16) -> np.ndarray:
    """Double the Gauss order per panel until successive values agree to ``tol``."""
    out = np.empty(len(reps), dtype=complex)
    todo = np.arange(len(reps))
    order = start_order
    prev = _line_values(stencil, reps, order)
    while todo.size:
        order *= 2
        cur = _line_values(stencil, reps[todo], order)
        done = np.abs(cur - prev) < tol
        out[todo[done]] = cur[done]
        if order >= _MAX_ORDER and not np.all(done):
            logger.warning("Green's quadrature not converged for %d offsets", np.sum(~done))
            out[todo[~done]] = cur[~done]
            break
        todo, prev = todo[~done], cur[~done]
    return out


def _canonical_array(offsets) -> np.ndarray:
    offs = np.abs(np.asarray(offsets, dtype=np.int64).reshape(-1, 2))
    return np.stack([offs.max(axis=1), offs.min(axis=1)], axis=1)


def greens_value(stencil: UniformStencil, offset, absorption: float = 0.0,
                 quadrature_points: int | None = None, *, limit: str = "exact",
                 tol: float = DEFAULT_TOL) -> complex:
    """Outgoing lattice Green's function at one offset.

    Parameters
    ----------
    absorption : float
        ``eta`` in ``K (1 + i eta)``. With ``eta = 0`` and real ``K`` the
        limiting-absorption value is returned; ``limit="richardson"``
        instead extrapolates from ``eta`` in ``RICHARDSON_ETAS``.
    quadrature_points : int, optional
        Gauss order per panel. ``None`` doubles the order until two
        successive values differ by less than ``tol``.
    """
    if absorption == 0 and limit == "richardson":
        vals = [greens_value(stencil, offset, eta, quadrature_points, tol=tol)
                for eta in RICHARDSON_ETAS]
        return richardson_limit(RICHARDSON_ETAS, vals)
    eff = effective_stencil(stencil, absorption)
    _check_evaluable(eff)
    reps = _canonical_array([offset])
    if quadrature_points is None:
        return complex(_adaptive_values(eff, reps, tol)[0])
    return complex(_line_values(eff, reps, int(quadrature_points))[0])


def richardson_limit(etas, values) -> complex:
    """Polynomial extrapolation of ``values(eta)`` to ``eta = 0``."""
    etas = np.asarray(etas, dtype=float)
    values = np.asarray(values, dtype=complex)
    total = 0j
    for i, (e_i, v_i) in enumerate(zip(etas, values)):
        lag = 1.0
        for j, e_j in enumerate(etas):
            if j != i:
                lag *= (0.0 - e_j) / (e_i - e_j)
        total += lag * v_i
    return complex(total)


def greens_trapezoid(stencil: UniformStencil, offsets, absorption: float,
                     n_points: int | None = None, tol: float = 1e-10,
                     max_points: int = 4096) -> np.ndarray:
    """Independent 2D route: tensor trapezoid rule on the full torus.

    Only valid with absorption; the real-``K`` integrand is singular.
    """
    eff = effective_stencil(stencil, absorption)
    if eff.wavenumber.imag <= 0:
        raise SingularIntegrandError(
            "trapezoid route needs Im(K) > 0; use the residue route for eta = 0")
    offs = np.asarray(offsets, dtype=np.int64).reshape(-1, 2)

    def rule(n):
        t = -np.pi + 2 * np.pi * np.arange(n) / n
        x1, x2 = np.meshgrid(t, t, indexing="ij")
        inv = 1.0 / stencil_symbol(eff, np.stack([x1, x2], axis=-1))
        c1 = np.exp(1j * np.outer(offs[:, 0], t))
        c2 = np.exp(1j * np.outer(offs[:, 1], t))
        return np.einsum("ka,ab,kb->k", c1, inv, c2) / (n * n)

    if n_points is not None:
        return rule(n_points)
    n = 64
    prev = rule(n)
    while True:
        n *= 2
        cur = rule(n)
        if np.max(np.abs(cur - prev)) < tol or n >= max_points:
            return cur
        prev = cur


# --- tables -------------------------------------------------------------------

@dataclass
class GreensTable:
    """Green's function values stored per dihedral orbit.

    ``stencil`` is the operator the table inverts, i.e. already at the
    absorbing wavenumber when ``absorption > 0``.
    """

    stencil: UniformStencil
    absorption: float
    reps: np.ndarray = field(repr=False)          # (n, 2) canonical (p, q)
    values: np.ndarray = field(repr=False)        # (n,) complex
    quadrature_points: int | None = None
    _dense: np.ndarray | None = field(default=None, repr=False)
    _mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.reps = np.asarray(self.reps, dtype=np.int64).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=complex).reshape(-1)
        pmax = int(self.reps[:, 0].max()) + 1 if len(self.reps) else 0
        self._dense = np.zeros((pmax, pmax), dtype=complex)
        self._mask = np.zeros((pmax, pmax), dtype=bool)
        if len(self.reps):
            self._dense[self.reps[:, 0], self.reps[:, 1]] = self.values
            self._mask[self.reps[:, 0], self.reps[:, 1]] = True

    def __len__(self):
        return len(self.reps)

    @property
    def max_offset(self) -> int:
        return self._dense.shape[0] - 1

    def __contains__(self, offset) -> bool:
        p, q = canonical_offset(offset)
        return p <= self.max_offset and bool(self._mask[p, q])

    def __getitem__(self, offset) -> complex:
        p, q = canonical_offset(offset)
        if p > self.max_offset or not self._mask[p, q]:
            raise IncompleteTableError(f"offset {tuple(offset)} not tabulated")
        return complex(self._dense[p, q])

    def lookup(self, offsets) -> np.ndarray:
        """Vectorised lookup; ``offsets`` has trailing axis of length 2."""
        offsets = np.asarray(offsets, dtype=np.int64)
        a = np.abs(offsets[..., 0])
        b = np.abs(offsets[..., 1])
        p = np.maximum(a, b)
        q = np.minimum(a, b)
        if p.size and (p.max() > self.max_offset
                       or not self._mask[p, q].all()):
            out = p > self.max_offset
            pc, qc = np.where(out, 0, p), np.where(out, 0, q)
            bad = offsets[out | ~self._mask[pc, qc]] if self._mask.size else offsets.reshape(-1, 2)
            raise IncompleteTableError(f"{len(bad)} offsets not tabulated, e.g. {tuple(int(v) for v in bad[0])}")
        return self._dense[p, q]

    def pair_matrix(self, rows, cols) -> np.ndarray:
        """``G[j, m] = G(node_m - node_j)`` for lattice node lists."""
        r = np.asarray(rows, dtype=np.int64).reshape(-1, 2)
        c = np.asarray(cols, dtype=np.int64).reshape(-1, 2)
        return self.lookup(c[None, :, :] - r[:, None, :])

    def entries(self) -> dict:
        """Expanded ``{offset: value}`` over every image of every orbit."""
        from .lattice import dihedral_images
        out = {}
        for (p, q), v in zip(self.reps, self.values):
            for o in dihedral_images((int(p), int(q))):
                out[o] = complex(v)
        return out

    # -- persistence ---------------------------------------------------------
    def save(self, path) -> None:
        np.savez(path, version=CACHE_VERSION, reps=self.reps, values=self.values,
                 kh=np.complex128(self.stencil.kh), absorption=self.absorption,
                 grid_spacing=self.stencil.grid_spacing,
                 digest=self.stencil.digest(),
                 quadrature_points=-1 if self.quadrature_points is None else self.quadrature_points)

    @classmethod
    def load(cls, path, stencil: UniformStencil) -> "GreensTable":
        with np.load(path) as data:
            if int(data["version"]) != CACHE_VERSION:
                raise ValueError(f"cache version {int(data['version'])} unsupported")
            if str(data["digest"]) != stencil.digest():
                raise ValueError("cache file belongs to a different stencil")
            qp = int(data["quadrature_points"])
            return cls(stencil, float(data["absorption"]), data["reps"], data["values"],
                       None if qp < 0 else qp)


def _cache_path(cache_dir, stencil: UniformStencil, absorption, quadrature_points) -> Path:
    kh = stencil.kh
    tag = "adapt" if quadrature_points is None else f"q{quadrature_points}"
    name = (f"greens_v{CACHE_VERSION}_kh{kh.real:.12g}{kh.imag:+.12g}j"
            f"_eta{absorption:.6g}_{stencil.digest()}_{tag}.npz")
    return Path(cache_dir) / name


def tabulate_greens(stencil: UniformStencil, offsets, absorption: float = 0.0,
                    quadrature_points: int | None = None, *, tol: float = DEFAULT_TOL,
                    cache_dir=None) -> GreensTable:
    """Evaluate ``G`` once per dihedral orbit of the requested offsets.

    ``cache_dir`` (or the ``FEMBAE_GREENS_CACHE`` environment variable)
    names a directory of ``.npz`` tables reused across runs.
    """
    eff = effective_stencil(stencil, absorption)
    _check_evaluable(eff)
    offs = np.asarray(list(offsets) if not isinstance(offsets, np.ndarray) else offsets,
                      dtype=np.int64).reshape(-1, 2)
    reps = np.unique(_canonical_array(offs), axis=0) if len(offs) else np.zeros((0, 2), np.int64)

    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    known_reps = np.zeros((0, 2), np.int64)
    known_vals = np.zeros(0, complex)
    path = None
    if cache_dir:
        path = _cache_path(cache_dir, eff, absorption, quadrature_points)
        if path.exists():
            cached = GreensTable.load(path, eff)
            known_reps, known_vals = cached.reps, cached.values
    if len(known_reps):
        known = {(int(p), int(q)) for p, q in known_reps}
        missing = np.array([r for r in reps if (int(r[0]), int(r[1])) not in known],
                           dtype=np.int64).reshape(-1, 2)
    else:
        missing = reps

    if len(missing):
        logger.debug("tabulating %d Green's orbits (kh=%s, eta=%g)", len(missing), eff.kh, absorption)
        if quadrature_points is None:
            new_vals = _adaptive_values(eff, missing, tol)
        else:
            new_vals = _line_values(eff, missing, int(quadrature_points))
    else:
        new_vals = np.zeros(0, complex)

    all_reps = np.concatenate([known_reps, missing])
    all_vals = np.concatenate([known_vals, new_vals])
    if path is not None and len(missing):
        path.parent.mkdir(parents=True, exist_ok=True)
        GreensTable(eff, absorption, all_reps, all_vals, quadrature_points).save(path)
    if len(all_reps):
        lookup = {(int(p), int(q)): i for i, (p, q) in enumerate(all_reps)}
        idx = [lookup[(int(p), int(q))] for p, q in reps]
        return GreensTable(eff, absorption, reps, all_vals[idx], quadrature_points)
    return GreensTable(eff, absorption, reps, np.zeros(0, complex), quadrature_points)


def box_offsets(radius: int) -> np.ndarray:
    """Canonical reps ``0 <= q <= p <= radius``."""
    return np.array([(p, q) for p in range(radius + 1) for q in range(p + 1)], dtype=np.int64)


def table_residual(table: GreensTable, offsets) -> np.ndarray:
    """``|sum_o' beta(o') G(o + o') - delta(o)|`` at each offset."""
    offs = np.asarray(offsets, dtype=np.int64).reshape(-1, 2)
    acc = np.zeros(len(offs), dtype=complex)
    for o, c in zip(table.stencil.offsets, table.stencil.coefficients):
        acc += c * table.lookup(offs + np.asarray(o))
    acc -= np.all(offs == 0, axis=1)
    return np.abs(acc)
