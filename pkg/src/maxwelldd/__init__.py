"""Two-level overlapping Schwarz solvers for time-harmonic Maxwell problems
on the unit cube, with an experiment harness for wavenumber sweeps."""

__version__ = "0.1.0"

from .assembly import (BC, RHS, ProblemConfig, assemble_ck, assemble_global,
                       assemble_parts, assemble_rhs, element_matrices)
from .decomposition import (CoarseSpace, Cover, Subdomain,
                            build_coarse_restriction, build_cover,
                            build_partition_of_unity, galerkin_coarse_matrix)
from .direct import SingularMatrixError, factorize, solve
from .experiments import (ExperimentSpec, ResultTable, emit_table,
                          fit_growth_exponent, make_spec, resolve_sizes,
                          run_experiment)
from .krylov import (GmresConfig, GmresResult, Side, convergence_factor_bound,
                     gmres, robustness_condition)
from .mesh import (NestedMeshPair, TetMesh, build_cube_mesh,
                   build_nested_pair, interior_edge_set)
from .precond import Kind, Levels, Preconditioner, build

__all__ = [
    "BC", "RHS", "ProblemConfig", "assemble_ck", "assemble_global",
    "assemble_parts", "assemble_rhs", "element_matrices",
    "CoarseSpace", "Cover", "Subdomain", "build_coarse_restriction",
    "build_cover", "build_partition_of_unity", "galerkin_coarse_matrix",
    "SingularMatrixError", "factorize", "solve",
    "ExperimentSpec", "ResultTable", "emit_table", "fit_growth_exponent",
    "make_spec", "resolve_sizes", "run_experiment",
    "GmresConfig", "GmresResult", "Side", "convergence_factor_bound",
    "gmres", "robustness_condition",
    "NestedMeshPair", "TetMesh", "build_cube_mesh", "build_nested_pair",
    "interior_edge_set",
    "Kind", "Levels", "Preconditioner", "build",
]
