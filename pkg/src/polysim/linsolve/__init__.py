"""Linear solvers: GMRES, RAS-ILU(0), classical AMG and CPR-FP."""

from .amg import AMGConfig, AMGHierarchy
from .cpr import (
    CPRPreconditioner,
    LinearSolver,
    PreconditionerConfig,
    PressureRestriction,
    block_diagonal_inverse,
    cpr_fp_apply,
    extract_pressure_matrix,
    prolong_pressure,
    restrict_pressure,
)
from .dist import DistMatrix, make_dots
from .gmres import SolveStats, gmres
from .ilu import ILU0, ZeroPivotError
from .ras import RAS, Subdomain, contiguous_subdomains, grow_overlap, ras_apply

__all__ = [
    "AMGConfig",
    "AMGHierarchy",
    "CPRPreconditioner",
    "DistMatrix",
    "ILU0",
    "LinearSolver",
    "PreconditionerConfig",
    "PressureRestriction",
    "RAS",
    "SolveStats",
    "Subdomain",
    "ZeroPivotError",
    "block_diagonal_inverse",
    "contiguous_subdomains",
    "cpr_fp_apply",
    "extract_pressure_matrix",
    "gmres",
    "grow_overlap",
    "make_dots",
    "prolong_pressure",
    "ras_apply",
    "restrict_pressure",
]
