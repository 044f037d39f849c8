"""Command line entry point: ``fembae <command> [options]``.

Options may also come from a flat ``key = value`` file given with
``--config``; keys are the long option names without the leading dashes
(``nu-mode`` and ``nu_mode`` are both accepted). Command-line flags win.
The Green's function cache directory is taken from ``FEMBAE_GREENS_CACHE``.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .errors import FembaeError
from .solve import directivity, export_directivity_csv, export_solution_csv

COMMANDS = ("convergence", "truncation", "staircase", "resonance", "solve-one", "figures")
_KEYS = {"radius": float, "harmonic": int, "sigma": float, "rext": float, "kh": str,
         "nu-mode": str, "eta": float, "mesh-file": str, "out": str, "locus": str,
         "metric": str, "ring": float, "block": str}


def _parse_kh(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for part in text for v in str(part).split(",") if v.strip())
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def read_config_file(path) -> dict:
    """Flat key-value file (``#`` comments, ``=`` or ``:`` separators)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    with open(path) as fh:
        parser.read_string("[run]\n" + fh.read())
    out = {}
    for key, value in parser["run"].items():
        key = key.replace("_", "-")
        if key not in _KEYS:
            raise FembaeError(f"unknown config key {key!r}")
        out[key] = _KEYS[key](value)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fembae", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat key = value file with default options")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--radius", type=float, help="scatterer radius in grid units")
        s.add_argument("--harmonic", type=int, help="harmonic N of the Neumann data")
        s.add_argument("--sigma", type=float, help="element size factor on the circle")
        s.add_argument("--rext", type=float, help="exterior radius in grid units")
        s.add_argument("--kh", action="append", help="K h values, comma separated or repeated")
        s.add_argument("--nu-mode", choices=harness.NU_MODES)
        s.add_argument("--eta", type=float, help="relative absorption in K (1 + i eta)")
        s.add_argument("--mesh-file", help="MSH 2.2 mesh replacing the built-in mesher")
        s.add_argument("--out", help="output directory")
        s.add_argument("--locus", choices=harness.LOCI, help="where errors are measured")
        s.add_argument("--metric", choices=harness.METRICS)
        if name == "solve-one":
            s.add_argument("--ring", type=float, help="directivity ring radius (default 3 R)")
            s.add_argument("--dump-matrices", action="store_true",
                           help="write A, C, B and the block matrix as text")
        if name == "resonance":
            s.add_argument("--block", help="rectangle of cells NXxNY (default 6x6)")
    return p


def _merged(args, file_opts: dict) -> dict:
    opts = dict(file_opts)
    for key in _KEYS:
        attr = key.replace("-", "_")
        val = getattr(args, attr, None)
        if val is not None:
            opts[key] = val
    return opts


def _config(opts: dict) -> harness.ExperimentConfig:
    kw = {}
    for key, field in (("radius", "radius"), ("harmonic", "harmonic"), ("sigma", "sigma"),
                       ("rext", "rext"), ("nu-mode", "nu_mode"), ("eta", "eta"),
                       ("mesh-file", "mesh_file"), ("out", "out_dir"), ("locus", "locus"),
                       ("metric", "metric")):
        if key in opts:
            kw[field] = opts[key]
    if "kh" in opts:
        kw["kh"] = _parse_kh(opts["kh"])
    return harness.ExperimentConfig(**kw)


def _print_rows(rows, keys):
    print(",".join(keys))
    for r in rows:
        print(",".join(f"{r[k]:.6g}" if isinstance(r[k], float) else str(r[k]) for k in keys))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        opts = _merged(args, read_config_file(args.config) if args.config else {})
        out = Path(opts.get("out", "."))
        cmd = args.command
        if cmd == "resonance":
            nx, ny = (int(v) for v in str(opts.get("block", "6x6")).lower().split("x"))
            cells = harness.block_cells(nx, ny)
            if "kh" in opts:
                khs = _parse_kh(opts["kh"])
            else:
                k0 = float(harness.dirichlet_wavenumbers(cells, count=1)[0])
                khs = tuple(np.round(np.linspace(k0 - 0.05, k0 + 0.05, 11), 6)) + (k0,)
            rows = harness.run_resonance_study(sorted(khs), cells, eta=float(opts.get("eta", 0.0)))
            path = harness.write_csv(out / "resonance.csv", rows)
            _print_rows(rows, ["kh", "nu_mode", "condition_C"])
            print(f"wrote {path}")
            return 0
        if cmd == "figures":
            files = harness.reproduce_figures(out, locus=opts.get("locus", "gamma_ex"))
            for path in files.values():
                print(f"wrote {path}")
            return 0
        config = _config(opts)
        if cmd == "convergence":
            rows, slope = harness.run_convergence(config)
            _print_rows(rows, ["kh", "error", "status"])
            print(f"slope {slope:.4f}")
        elif cmd == "truncation":
            rows, ratio = harness.run_truncation_study(config)
            _print_rows(rows, ["rext", "kh", "error", "status"])
            print(f"max pairwise ratio {ratio:.4f}")
        elif cmd == "staircase":
            rows = harness.run_staircase_comparison(config)
            _print_rows(rows, ["kh", "error_coupled", "error_staircase"])
        else:
            return _solve_one(config, opts, out, args.dump_matrices)
        path = harness.write_csv(out / f"{cmd}.csv", rows)
        print(f"wrote {path}")
        return 0
    except (FembaeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _solve_one(config, opts, out: Path, dump: bool) -> int:
    kh = config.kh[0]
    config = replace(config, kh=(kh,))
    run = harness.solve_circle(config, kh)
    num, exact = harness.locus_values(run)
    err = harness.relative_error(num, exact, config.metric)
    out.mkdir(parents=True, exist_ok=True)
    export_solution_csv(out / "solution.csv", run.mesh, run.solution)
    ring = float(opts.get("ring", 3 * config.radius))
    _, angles, vals = harness.far_field(run, ring)
    export_directivity_csv(out / "directivity.csv", angles, directivity(vals))
    if dump:
        harness.dump_matrices(run, out / "matrices")
    meta = run.solution.metadata
    print(f"config {meta['config_hash']} kh {kh:g} error ({config.locus}) {err:.6e}")
    print(f"residual {meta['residual']:.3e} cond(C) {meta['condition_C']:.3e}")
    print(f"wrote {out / 'solution.csv'} and {out / 'directivity.csv'}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
