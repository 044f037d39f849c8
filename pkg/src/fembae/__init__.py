"""Exterior Helmholtz scattering with a thin finite-element layer coupled to
lattice boundary algebraic equations."""

from .analytic import CircleProblem, bessel_j, bessel_y, exact_scattered_field, hankel1
from .bae import (CfieOperators, Projector, assemble_coupled, build_A, build_C, build_dtn,
                  build_projector, cfie_operators, default_nu)
from .fem import SparseMatrix, assemble_exterior, assemble_force, assemble_interior
from .greens import GreensTable, greens_value, tabulate_greens
from .harness import (ExperimentConfig, relative_error, run_convergence, run_resonance_study,
                      run_staircase_comparison, run_truncation_study)
from .lattice import NodePartition, UniformStencil, build_partition, build_stencil
from .mesh import Mesh, build_annular_layer_mesh, parse_gmsh, validate_interface, write_gmsh
from .solve import CoupledSolution, exterior_field, solve_coupled, solve_reduced

__version__ = "0.1.0"

__all__ = [
    "CfieOperators", "CircleProblem", "CoupledSolution", "ExperimentConfig", "GreensTable",
    "Mesh", "NodePartition", "Projector", "SparseMatrix", "UniformStencil",
    "assemble_coupled", "assemble_exterior", "assemble_force", "assemble_interior",
    "bessel_j", "bessel_y", "build_A", "build_C", "build_annular_layer_mesh", "build_dtn",
    "build_partition", "build_projector", "build_stencil", "cfie_operators", "default_nu",
    "exact_scattered_field", "exterior_field", "greens_value", "hankel1", "parse_gmsh",
    "relative_error", "run_convergence", "run_resonance_study", "run_staircase_comparison",
    "run_truncation_study", "solve_coupled", "solve_reduced", "tabulate_greens",
    "validate_interface", "write_gmsh",
]
