"""Experiment driver for the circular-scatterer studies.

Every study returns a list of row dicts in sweep order; each row carries the
hash of the configuration that produced it and records its own failure
instead of aborting the sweep. ``write_csv`` writes such rows with a fixed
column order.

Grid spacing is fixed at ``h = 1``, so radii are in grid units and the
wavenumber equals ``K h``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .analytic import CircleProblem, exact_scattered_field
from .bae import (assemble_coupled, build_dtn, build_projector, cfie_operators,
                  condition_estimate, default_nu, required_offsets, write_matrix_text)
from .errors import FembaeError, InvalidParameterError, UndefinedErrorMetric
from .fem import assemble_cells, assemble_exterior, assemble_force, assemble_interior
from .greens import DEFAULT_TOL, tabulate_greens
from .lattice import block_cells, build_partition, build_stencil, disk_hull_cells
from .mesh import build_annular_layer_mesh, parse_gmsh, partition_from_mesh
from .solve import CoupledSolution, exterior_field, solve_coupled

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LOCI = ("gamma_ex", "surface")
METRICS = ("l2", "printed")
NU_MODES = ("cfie", "kirchhoff")
MODES = ("coupled", "staircase")
PLATEAU_RATIO = 1.3
SLOPE_WINDOW = (0.2, 1.0)
DEFAULT_KH = (1.0, 0.7, 0.5, 0.35, 0.25, 0.18, 0.12, 0.1)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one circular-scatterer experiment.

    ``locus`` selects where errors are measured: ``"gamma_ex"`` compares the
    loop values with the radially continued exact field, ``"surface"`` the
    scatterer nodes with the exact surface field. ``amplitude`` scales the
    imposed Neumann data (and the exact field with it).
    """

    radius: float = 10.0
    harmonic: int = 0
    sigma: float = 1.0
    rext: float | None = None
    kh: tuple = DEFAULT_KH
    nu_mode: str = "cfie"
    eta: float = 0.0
    mode: str = "coupled"
    locus: str = "gamma_ex"
    metric: str = "l2"
    amplitude: float = 1.0
    mesh_file: str | None = None
    out_dir: str | None = None
    greens_tol: float = DEFAULT_TOL

    def __post_init__(self):
        object.__setattr__(self, "kh", tuple(float(k) for k in np.atleast_1d(self.kh)))
        if not self.radius > 0:
            raise InvalidParameterError("radius must be positive")
        if any(not k > 0 for k in self.kh):
            raise InvalidParameterError("every K h value must be positive")
        if not 0 < self.sigma <= 1:
            raise InvalidParameterError("sigma must lie in (0, 1]")
        if self.rext is not None and not self.rext > 0:
            raise InvalidParameterError("rext must be positive")
        if self.eta < 0:
            raise InvalidParameterError("eta must be nonnegative")
        if int(self.harmonic) != self.harmonic or self.harmonic < 0:
            raise InvalidParameterError("harmonic must be a nonnegative integer")
        for name, value, allowed in (("nu_mode", self.nu_mode, NU_MODES),
                                     ("mode", self.mode, MODES),
                                     ("locus", self.locus, LOCI),
                                     ("metric", self.metric, METRICS)):
            if value not in allowed:
                raise InvalidParameterError(f"{name} must be one of {allowed}, got {value!r}")

    @property
    def exterior_radius(self) -> float:
        return self.radius + 1.0 if self.rext is None else float(self.rext)

    def config_hash(self) -> str:
        """Short digest of every field except the output directory."""
        d = asdict(self)
        d.pop("out_dir")
        d["schema"] = SCHEMA_VERSION
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- error metric ------------------------------------------------------------------

def relative_error(numerical, exact, variant: str = "l2") -> float:
    """Relative discrepancy between two vectors.

    ``"l2"`` is ``||num - exact|| / ||exact||``; ``"printed"`` is
    ``sqrt(sum|num - exact| / sum|exact|)`` without inner squares.
    """
    num = np.asarray(numerical, dtype=complex)
    ex = np.asarray(exact, dtype=complex)
    if num.shape != ex.shape:
        raise InvalidParameterError(f"length mismatch {num.shape} vs {ex.shape}")
    if variant == "l2":
        den = np.linalg.norm(ex)
        if den == 0:
            raise UndefinedErrorMetric("exact vector is identically zero")
        return float(np.linalg.norm(num - ex) / den)
    if variant == "printed":
        den = np.sum(np.abs(ex))
        if den == 0:
            raise UndefinedErrorMetric("exact vector is identically zero")
        return float(np.sqrt(np.sum(np.abs(num - ex)) / den))
    raise InvalidParameterError(f"unknown error variant {variant!r}")


def fit_slope(kh, errors, window=SLOPE_WINDOW, plateau_ratio: float = PLATEAU_RATIO):
    """Least-squares slope of ``log error`` against ``log K h``.

    Points outside ``window`` (``None`` keeps all) are dropped. Walking up
    from the smallest ``K h``, a point whose error grows by less than
    ``plateau_ratio`` to the next point is treated as a floor and dropped.
    Returns ``(slope, mask)`` with ``mask`` in the input order.
    """
    kh = np.asarray(kh, dtype=float)
    err = np.asarray(errors, dtype=float)
    mask = np.isfinite(err) & (err > 0)
    if window is not None:
        mask &= (kh >= window[0] - 1e-12) & (kh <= window[1] + 1e-12)
    order = [i for i in np.argsort(kh) if mask[i]]
    for a, b in zip(order, order[1:]):
        if err[b] / err[a] < plateau_ratio:
            mask[a] = False
        else:
            break
    if mask.sum() < 2:
        return float("nan"), mask
    return float(np.polyfit(np.log(kh[mask]), np.log(err[mask]), 1)[0]), mask


def plateau_ratios(kh, errors) -> list[tuple[float, float, float]]:
    """``(kh_low, kh_high, err_high / err_low)`` for adjacent sweep points."""
    order = np.argsort(kh)
    k = np.asarray(kh, dtype=float)[order]
    e = np.asarray(errors, dtype=float)[order]
    return [(float(k[i]), float(k[i + 1]), float(e[i + 1] / e[i])) for i in range(len(k) - 1)]


# --- single solves --------------------------------------------------------------------

@dataclass
class CircleRun:
    """Everything produced by one coupled solve."""

    config: ExperimentConfig
    kh: float
    wavenumber: complex
    nu: complex
    mesh: object = field(repr=False)
    partition: object = field(repr=False)
    table: object = field(repr=False)
    alpha_ex: object = field(repr=False)
    alpha_in: object = field(repr=False)
    operators: object = field(repr=False)
    projector: object = field(repr=False)
    system: object = field(repr=False)
    solution: CoupledSolution = field(repr=False)


def _nu(config: ExperimentConfig, wavenumber: complex) -> complex:
    return 0j if config.nu_mode == "kirchhoff" else default_nu(wavenumber)


def _load_mesh(config: ExperimentConfig):
    if config.mesh_file is None:
        return build_annular_layer_mesh(config.radius, 1.0, config.sigma, config.exterior_radius)
    with open(config.mesh_file) as fh:
        mesh = parse_gmsh(fh, 1.0, (0.0, 0.0), config.radius)
    return mesh, partition_from_mesh(mesh)


def solve_circle(config: ExperimentConfig, kh: float, targets=()) -> CircleRun:
    """Coupled solve for one ``K h``. ``targets`` extends the Green's table."""
    K = kh * (1 + 1j * config.eta)
    mesh, partition = _load_mesh(config)
    stencil = build_stencil(kh, 1.0)
    table = tabulate_greens(stencil, required_offsets(partition, targets), config.eta,
                            tol=config.greens_tol)
    alpha_ex = assemble_exterior(partition, table.stencil)
    nu = _nu(config, K)
    ops = cfie_operators(table, alpha_ex, partition, nu)
    alpha_in = assemble_interior(mesh, K)
    projector = build_projector(mesh, partition)
    force = assemble_force(mesh, config.harmonic, "lumped", scale=-K * config.amplitude)
    system = assemble_coupled(ops.A, ops.C, alpha_in, projector, force)
    sol = solve_coupled(system)
    sol.metadata.update(config_hash=config.config_hash(), kh=kh, nu=nu,
                        condition_C=condition_estimate(ops.C))
    return CircleRun(config, kh, K, nu, mesh, partition, table, alpha_ex, alpha_in, ops,
                     projector, system, sol)


def _problem(config: ExperimentConfig, K: complex) -> CircleProblem:
    return CircleProblem(config.radius, K, int(config.harmonic))


def _polar(nodes):
    xy = np.asarray(nodes, dtype=float)
    return np.hypot(xy[:, 0], xy[:, 1]), np.arctan2(xy[:, 1], xy[:, 0])


def locus_values(run: CircleRun, locus: str | None = None):
    """``(numerical, exact)`` at the comparison locus of ``run``."""
    locus = locus or run.config.locus
    problem = _problem(run.config, run.wavenumber)
    amp = run.config.amplitude
    if locus == "gamma_ex":
        r, phi = _polar(run.partition.boundary_nodes)
        return run.solution.u_ex_boundary, amp * exact_scattered_field(problem, phi, r)
    if locus == "surface":
        phi = run.mesh.polar_angles()
        return run.solution.u_in[run.mesh.gamma_in], amp * exact_scattered_field(problem, phi)
    raise InvalidParameterError(f"unknown locus {locus!r}")


def staircase_solve(config: ExperimentConfig, kh: float):
    """Boundary-only solve on the cell hull of the circle.

    The hull loop itself is the scatterer. Each loop node receives the flux
    ``-K cos(N phi_j)`` times the arc of the circle between the angular
    midpoints to its neighbours, which preserves the total imposed flux.
    Returns ``(u_loop, exact_loop, partition)``.
    """
    K = kh * (1 + 1j * config.eta)
    partition = build_partition(disk_hull_cells(config.radius))
    stencil = build_stencil(kh, 1.0)
    table = tabulate_greens(stencil, required_offsets(partition), config.eta,
                            tol=config.greens_tol)
    alpha_ex = assemble_exterior(partition, table.stencil)
    ops = cfie_operators(table, alpha_ex, partition, _nu(config, K))
    r, phi = _polar(partition.boundary_nodes)
    unwrapped = np.unwrap(phi)
    arc = np.mod(np.roll(unwrapped, -1) - np.roll(unwrapped, 1), 2 * np.pi) / 2
    flux = -K * config.amplitude * config.radius * arc * np.cos(config.harmonic * phi)
    u = sla.solve(ops.A.T, ops.C.T @ flux)
    exact = config.amplitude * exact_scattered_field(_problem(config, K), phi, r)
    return u, exact, partition


# --- studies --------------------------------------------------------------------------

def _base_row(config: ExperimentConfig, kh: float) -> dict:
    return {"config_hash": config.config_hash(), "radius": config.radius,
            "harmonic": config.harmonic, "sigma": config.sigma,
            "rext": config.exterior_radius, "kh": kh, "eta": config.eta,
            "nu_mode": config.nu_mode, "locus": config.locus, "metric": config.metric}


def _run_row(config: ExperimentConfig, kh: float) -> dict:
    row = _base_row(config, kh)
    try:
        if config.mode == "staircase":
            u, exact, _ = staircase_solve(config, kh)
            row["locus"] = "staircase_loop"
            row["nu"] = _nu(config, kh * (1 + 1j * config.eta))
            row["residual"] = float("nan")
        else:
            run = solve_circle(config, kh)
            u, exact = locus_values(run)
            row["nu"] = run.nu
            row["residual"] = run.solution.metadata["residual"]
        row["error"] = relative_error(u, exact, config.metric)
        row["status"] = "ok"
        row["message"] = ""
    except (FembaeError, ValueError, ArithmeticError) as exc:
        row.setdefault("nu", "")
        row.setdefault("residual", float("nan"))
        row["error"] = float("nan")
        row["status"] = type(exc).__name__
        row["message"] = str(exc)
    return row


def run_convergence(config: ExperimentConfig, window=SLOPE_WINDOW) -> tuple[list[dict], float]:
    """Error against ``K h`` for every sweep value, plus the fitted slope."""
    rows = [_run_row(config, kh) for kh in config.kh]
    ok = [r for r in rows if r["status"] == "ok"]
    slope, mask = fit_slope([r["kh"] for r in ok], [r["error"] for r in ok], window)
    used = {r["kh"] for r, m in zip(ok, mask) if m}
    for r in rows:
        r["in_fit"] = r["kh"] in used
        r["slope"] = slope
    return rows, slope


TRUNCATION_OFFSETS = (1.0, 5.0, 10.0)


def run_truncation_study(config: ExperimentConfig, offsets=TRUNCATION_OFFSETS) -> tuple[list[dict], float]:
    """Errors for ``R_ext = R + d`` over ``offsets`` at each ``K h``.

    Returns the rows and the largest ratio between any two errors at the
    same ``K h``.
    """
    rows = []
    worst = 1.0
    for kh in config.kh:
        errs = []
        for d in offsets:
            row = _run_row(replace(config, rext=config.radius + d), kh)
            rows.append(row)
            errs.append(row["error"])
        errs = np.array(errs)
        if np.all(np.isfinite(errs)) and np.all(errs > 0):
            worst = max(worst, float(errs.max() / errs.min()))
        else:
            worst = float("nan")
    for r in rows:
        r["max_ratio"] = worst
    return rows, worst


def run_staircase_comparison(config: ExperimentConfig) -> list[dict]:
    """Coupled and staircase errors side by side for every ``K h``."""
    rows = []
    for kh in config.kh:
        coupled = _run_row(replace(config, mode="coupled"), kh)
        stair = _run_row(replace(config, mode="staircase"), kh)
        row = _base_row(config, kh)
        row.update(error_coupled=coupled["error"], error_staircase=stair["error"],
                   status_coupled=coupled["status"], status_staircase=stair["status"],
                   locus_staircase=stair["locus"])
        rows.append(row)
    return rows


def dirichlet_wavenumbers(cells, grid_spacing: float = 1.0, count: int | None = None) -> np.ndarray:
    """Wavenumbers ``K`` at which the bilinear interior Dirichlet problem on ``cells`` is singular.

    Dense generalised eigensolve of ``S v = K^2 M v`` on the nodes strictly
    inside the loop.
    """
    partition = build_partition(cells)
    inner = sorted(set(partition.interior_nodes) - set(partition.boundary_nodes))
    if not inner:
        return np.zeros(0)
    idx = {n: i for i, n in enumerate(inner)}
    stiff = assemble_cells(partition.interior_cells, 0.0, grid_spacing)
    shifted = assemble_cells(partition.interior_cells, 1.0, grid_spacing)
    S = np.zeros((len(inner), len(inner)))
    M = np.zeros_like(S)
    for (a, b), v in stiff.items():
        if a in idx and b in idx:
            S[idx[a], idx[b]] = v.real
            M[idx[a], idx[b]] = (v - shifted[(a, b)]).real
    lam = sla.eigh(S, M, eigvals_only=True)
    k = np.sqrt(np.clip(lam, 0, None))
    return k if count is None else k[:count]


def run_resonance_study(kh_values, cells=None, nu_modes=NU_MODES, eta: float = 0.0) -> list[dict]:
    """Condition estimate of ``C`` for each ``K h`` and coupling mode.

    ``cells`` defaults to a 6 by 6 block, whose lowest interior Dirichlet
    wavenumber is about 0.749.
    """
    cells = block_cells(6, 6) if cells is None else cells
    partition = build_partition(cells)
    rows = []
    for kh in np.atleast_1d(kh_values):
        kh = float(kh)
        if not kh > 0:
            raise InvalidParameterError("every K h value must be positive")
        K = kh * (1 + 1j * eta)
        table = tabulate_greens(build_stencil(kh, 1.0), required_offsets(partition), eta)
        alpha_ex = assemble_exterior(partition, table.stencil)
        for mode in nu_modes:
            if mode not in NU_MODES:
                raise InvalidParameterError(f"unknown nu mode {mode!r}")
            nu = 0j if mode == "kirchhoff" else default_nu(K)
            ops = cfie_operators(table, alpha_ex, partition, nu)
            rows.append({"kh": kh, "nu_mode": mode, "nu": nu, "eta": eta,
                         "n_boundary": partition.n_boundary,
                         "condition_C": condition_estimate(ops.C)})
    return rows


def far_field(run: CircleRun, radius: float, n_angles: int = 64):
    """Field on the lattice nodes nearest a ring, via the loop representation."""
    from .solve import ring_nodes
    nodes, angles = ring_nodes(radius, n_angles)
    table = tabulate_greens(build_stencil(run.kh, 1.0), required_offsets(run.partition, nodes),
                            run.config.eta, tol=run.config.greens_tol)
    vals = exterior_field(run.solution, table, run.alpha_ex, run.partition, nodes)
    return nodes, angles, vals


def dump_matrices(run: CircleRun, directory) -> list[Path]:
    """Write ``A``, ``C``, ``B`` and the block matrix in the coordinate text format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    B = build_dtn(run.operators.A, run.operators.C)
    out = []
    for name, mat in (("A", run.operators.A), ("C", run.operators.C), ("B", B),
                      ("system", run.system.matrix)):
        path = directory / f"{name}.txt"
        write_matrix_text(path, mat)
        out.append(path)
    return out


# --- output ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (complex, np.complexfloating)):
        return f"{complex(v).real!r}{complex(v).imag:+.17g}j"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, rows: list[dict]) -> Path:
    """Rows to CSV with the union of keys as header, first-seen order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header: list[str] = []
    for r in rows:
        for k in r:
            if k not in header:
                header.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in header})
    return path


FIGURE_KH = (1.0, 0.7, 0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.12, 0.1)


def reproduce_figures(out_dir, kh=FIGURE_KH, locus: str = "gamma_ex") -> dict[str, Path]:
    """Write the six figure tables (fig3a ... fig6b) into ``out_dir``."""
    out_dir = Path(out_dir)
    files = {}
    rows = []
    for R in (3.0, 10.0, 30.0):
        rows += run_convergence(ExperimentConfig(radius=R, kh=kh, locus=locus))[0]
    files["fig3a"] = write_csv(out_dir / "fig3a.csv", rows)
    rows = []
    for N in range(4):
        rows += run_convergence(ExperimentConfig(radius=10.0, harmonic=N, kh=kh, locus=locus))[0]
    files["fig3b"] = write_csv(out_dir / "fig3b.csv", rows)
    for name, R in (("fig5a", 3.0), ("fig5b", 10.0)):
        rows = []
        for s in (1.0, 0.5, 0.25):
            rows += run_convergence(ExperimentConfig(radius=R, sigma=s, kh=kh, locus=locus))[0]
        files[name] = write_csv(out_dir / f"{name}.csv", rows)
    files["fig6a"] = write_csv(out_dir / "fig6a.csv", run_truncation_study(
        ExperimentConfig(radius=10.0, kh=kh, locus="surface"))[0])
    files["fig6b"] = write_csv(out_dir / "fig6b.csv", run_staircase_comparison(
        ExperimentConfig(radius=10.0, kh=kh, locus=locus)))
    return files
