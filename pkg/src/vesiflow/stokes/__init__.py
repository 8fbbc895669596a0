"""Exact per-mode bulk-surface Stokes solver on the round membrane, its
radial-collocation cross-check, and the Neumann-to-Dirichlet machinery."""

from .modes import (CompatibilityError, CompatReport, ModeSolution, ModeTable,
                    NotInTangentSpace, ResonantExponent, SolverDegenerate,
                    StokesData, StokesSolution, check_compat, dissipation,
                    dissipation_pairing, gradient_norm_bulk, metric_V,
                    mobility, ntd_apply, residual_report, solve, solve_s1,
                    solve_s2, spectrum, weak_bilinear, weak_rhs, zero_data,
                    INNER, OUTER)
from .collocation import collocation_solve, infsup_mode

__all__ = [
    "CompatibilityError", "CompatReport", "ModeSolution", "ModeTable",
    "NotInTangentSpace", "ResonantExponent", "SolverDegenerate", "StokesData",
    "StokesSolution", "check_compat", "collocation_solve", "dissipation",
    "dissipation_pairing", "gradient_norm_bulk", "infsup_mode", "metric_V",
    "mobility", "ntd_apply", "residual_report", "solve", "solve_s1",
    "solve_s2", "spectrum", "weak_bilinear", "weak_rhs", "zero_data",
    "INNER", "OUTER",
]
